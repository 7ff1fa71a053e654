#pragma once

// Multiscale covariance scanning. The detector contrasts local means of
// x_t y_t on the two sides of a split point,
//
//   T_{s,k,e} = sqrt((k-s)(e-k)/(e-s)) * | mean_(k,e] - mean_(s,k] |_inf,
//
// evaluated over seeded intervals; change points are selected by the
// narrowest-over-threshold rule. With partial sums each evaluation is
// O(p), so a full scan is O(p n log n).

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <vector>

#include "covscan/dataset.hpp"
#include "covscan/parallel.hpp"
#include "covscan/seeded.hpp"

namespace covscan {

struct DetectorPeak {
    SeededInterval interval;
    long k_star = 0;        // argmax split point
    double t_star = 0.0;    // peak statistic, >= 0
    Index argmax_coord = 0; // coordinate attaining the sup norm
};

inline double location_factor(long s, long k, long e) {
    return std::sqrt(static_cast<double>(k - s) * static_cast<double>(e - k) /
                     static_cast<double>(e - s));
}

inline double detector(const CrossProductSums& sums, long s, long k, long e,
                       Index* argmax_coord = nullptr) {
    if (!(0 <= s && s < k && k < e && e <= sums.n()))
        throw invalid_input("detector: require 0 <= s < k < e <= n");
    const VectorXd left = (sums.S.col(k) - sums.S.col(s)) / static_cast<double>(k - s);
    const VectorXd right = (sums.S.col(e) - sums.S.col(k)) / static_cast<double>(e - k);
    Index coord = 0;
    const double sup = (right - left).cwiseAbs().maxCoeff(&coord);
    if (argmax_coord) *argmax_coord = coord;
    return location_factor(s, k, e) * sup;
}

// Peak of the detector over the trimmed scan range
// k in {a + floor(trim) + 1, ..., b - floor(trim) - 1}; ties broken by
// the smallest k. Returns nothing when the range is empty (in particular
// whenever b - a <= 2 floor(trim)).
inline std::optional<DetectorPeak> scan_interval(const CrossProductSums& sums,
                                                 const SeededInterval& iv, double trim) {
    if (trim < 0.0) throw invalid_input("scan_interval: trim >= 0 required");
    const long w = static_cast<long>(std::floor(trim));
    const long klo = iv.a + w + 1;
    const long khi = iv.b - w - 1;
    if (klo > khi) return std::nullopt;
    DetectorPeak best;
    best.interval = iv;
    best.t_star = -1.0;
    for (long k = klo; k <= khi; ++k) {
        Index coord = 0;
        const double t = detector(sums, iv.a, k, iv.b, &coord);
        if (t > best.t_star) {
            best.t_star = t;
            best.k_star = k;
            best.argmax_coord = coord;
        }
    }
    return best;
}

inline double default_threshold(long n, long p, double c_pi = 1.9) {
    if (n * p < 2) throw invalid_input("default_threshold: n*p >= 2 required");
    return c_pi * std::sqrt(std::log(static_cast<double>(n) * static_cast<double>(p)));
}

inline double default_trimming(long n, long p) {
    return 2.0 * std::log(static_cast<double>(n) * static_cast<double>(p));
}

struct ThresholdPolicy {
    enum class Kind { Fixed, DefaultFixed, Automatic };
    Kind kind = Kind::DefaultFixed;
    double pi = 0.0;     // Fixed threshold value
    double c_pi = 1.9;   // DefaultFixed scale constant
    double trim = -1.0;  // trimming; negative means 2 log(np)

    static ThresholdPolicy fixed(double value, double trim = -1.0) {
        return {Kind::Fixed, value, 1.9, trim};
    }
    static ThresholdPolicy defaults(double c = 1.9, double trim = -1.0) {
        return {Kind::DefaultFixed, 0.0, c, trim};
    }
    static ThresholdPolicy automatic(double trim = -1.0) {
        return {Kind::Automatic, 0.0, 1.9, trim};
    }
};

struct SegmentationResult {
    std::vector<long> change_points;  // strictly increasing
    std::vector<DetectorPeak> peaks;  // aligned with change_points
    double threshold_used = 0.0;
    double trimming = 0.0;
    bool standardized = false;
    VectorXd scales;  // per-coordinate MAD scales when standardized

    long q_hat() const { return static_cast<long>(change_points.size()); }
};

struct SolutionPathEntry {
    double threshold_low = 0.0;   // solution holds for thresholds in [low, high)
    double threshold_high = 0.0;
    double trigger = 0.0;         // threshold used to produce it in the sweep
    std::vector<long> change_points;
    std::vector<DetectorPeak> peaks;
    int num_cps = 0;
    double score = 0.0;           // max peak over intervals free of the solution's cps
    bool score_measured = true;   // false when every interval is pierced (score 0 by convention)
};

struct SolutionPath {
    std::vector<SolutionPathEntry> entries;  // ordered by num_cps ascending
    double max_t = 0.0;
    double trimming = 0.0;
    bool standardized = false;
    VectorXd scales;
};

namespace detail {

struct ScanContext {
    std::vector<DetectorPeak> peaks;  // sorted by (length, a)
    double trimming = 0.0;
    bool standardized = false;
    VectorXd scales;
};

inline ScanContext scan_all(const RegressionDataset& data, double trim, bool standardize) {
    data.validate();
    ScanContext ctx;
    ctx.trimming = trim < 0.0 ? default_trimming(data.n(), data.p()) : trim;
    ctx.standardized = standardize;
    const RegressionDataset* active = &data;
    RegressionDataset standardized_data;
    if (standardize) {
        auto [sdata, scales] = mad_standardize(data);
        standardized_data = std::move(sdata);
        ctx.scales = std::move(scales);
        active = &standardized_data;
    }
    const CrossProductSums sums = build_cross_sums(*active);
    const IntervalSet set = seeded_intervals(data.n());
    std::vector<std::optional<DetectorPeak>> slots(set.intervals.size());
    parallel_for(static_cast<std::ptrdiff_t>(set.intervals.size()), [&](std::ptrdiff_t i) {
        slots[static_cast<size_t>(i)] =
            scan_interval(sums, set.intervals[static_cast<size_t>(i)], ctx.trimming);
    });
    for (auto& s : slots)
        if (s) ctx.peaks.push_back(*s);
    // intervals arrive sorted by (length, a); the filter preserves that
    return ctx;
}

// NOT selection (Steps 2-4): repeatedly take the narrowest surviving
// interval with peak above the threshold (ties: larger peak, then smaller
// left bound), record its argmax as a change point and drop every
// surviving interval that could re-place it, i.e. whose trimmed scan range
// contains it. A detection falling inside another interval's trimming
// margin leaves that interval alive: its own estimates are all at least a
// margin away, so its remaining peak is evidence of a different change.
inline std::pair<std::vector<long>, std::vector<DetectorPeak>> not_select(
    const std::vector<DetectorPeak>& peaks, double pi, double trim) {
    const long w = static_cast<long>(std::floor(trim));
    std::vector<char> alive(peaks.size(), 1);
    std::vector<std::pair<long, size_t>> found;  // (theta_hat, peak index)
    for (;;) {
        std::ptrdiff_t best = -1;
        for (size_t i = 0; i < peaks.size(); ++i) {
            if (!alive[i] || !(peaks[i].t_star > pi)) continue;
            if (best < 0) {
                best = static_cast<std::ptrdiff_t>(i);
                continue;
            }
            const DetectorPeak& cand = peaks[i];
            const DetectorPeak& cur = peaks[static_cast<size_t>(best)];
            const long lc = cand.interval.length(), lb = cur.interval.length();
            if (lc < lb ||
                (lc == lb && (cand.t_star > cur.t_star ||
                              (cand.t_star == cur.t_star && cand.interval.a < cur.interval.a))))
                best = static_cast<std::ptrdiff_t>(i);
        }
        if (best < 0) break;
        const long theta = peaks[static_cast<size_t>(best)].k_star;
        found.emplace_back(theta, static_cast<size_t>(best));
        for (size_t i = 0; i < peaks.size(); ++i)
            if (alive[i] && peaks[i].interval.a + w + 1 <= theta &&
                theta <= peaks[i].interval.b - w - 1)
                alive[i] = 0;
    }
    std::sort(found.begin(), found.end());
    std::pair<std::vector<long>, std::vector<DetectorPeak>> out;
    for (const auto& [theta, idx] : found) {
        out.first.push_back(theta);
        out.second.push_back(peaks[idx]);
    }
    return out;
}

// Remaining evidence of undetected change points: the best peak among
// intervals that could still place a new estimate, i.e. whose trimmed scan
// range {a + floor(trim) + 1, ..., b - floor(trim) - 1} contains none of
// the solution's change points. A detection inside an interval's trimming
// margin does not silence that interval.
inline std::pair<double, bool> path_score(const std::vector<DetectorPeak>& peaks,
                                          const std::vector<long>& cps, double trim) {
    const long w = static_cast<long>(std::floor(trim));
    double score = 0.0;
    bool any = false;
    for (const auto& pk : peaks) {
        bool pierced = false;
        for (long theta : cps)
            if (pk.interval.a + w + 1 <= theta && theta <= pk.interval.b - w - 1) {
                pierced = true;
                break;
            }
        if (!pierced) {
            any = true;
            score = std::max(score, pk.t_star);
        }
    }
    return {any ? score : 0.0, any};
}

inline SolutionPath build_path(const ScanContext& ctx) {
    SolutionPath path;
    path.trimming = ctx.trimming;
    path.standardized = ctx.standardized;
    path.scales = ctx.scales;
    std::vector<double> triggers;
    for (const auto& pk : ctx.peaks) triggers.push_back(pk.t_star);
    std::sort(triggers.begin(), triggers.end(), std::greater<double>());
    triggers.erase(std::unique(triggers.begin(), triggers.end()), triggers.end());
    path.max_t = triggers.empty() ? 0.0 : triggers.front();

    SolutionPathEntry empty_entry;
    empty_entry.threshold_low = path.max_t;
    empty_entry.threshold_high = std::numeric_limits<double>::infinity();
    empty_entry.trigger = path.max_t;
    empty_entry.score = path.max_t;
    empty_entry.score_measured = !ctx.peaks.empty();
    path.entries.push_back(empty_entry);

    std::map<std::vector<long>, size_t> seen;
    seen[{}] = 0;
    for (size_t j = 0; j < triggers.size(); ++j) {
        const double pi = std::nextafter(triggers[j], -std::numeric_limits<double>::infinity());
        const double low = j + 1 < triggers.size() ? triggers[j + 1] : 0.0;
        auto [cps, pks] = not_select(ctx.peaks, pi, ctx.trimming);
        auto it = seen.find(cps);
        if (it != seen.end()) {
            SolutionPathEntry& e = path.entries[it->second];
            e.threshold_low = std::min(e.threshold_low, low);
            e.threshold_high = std::max(e.threshold_high, triggers[j]);
            continue;
        }
        SolutionPathEntry entry;
        entry.threshold_low = low;
        entry.threshold_high = triggers[j];
        entry.trigger = pi;
        entry.change_points = cps;
        entry.peaks = std::move(pks);
        entry.num_cps = static_cast<int>(cps.size());
        std::tie(entry.score, entry.score_measured) =
            path_score(ctx.peaks, cps, ctx.trimming);
        seen.emplace(std::move(cps), path.entries.size());
        path.entries.push_back(std::move(entry));
    }
    std::stable_sort(path.entries.begin(), path.entries.end(),
                     [](const SolutionPathEntry& x, const SolutionPathEntry& y) {
                         if (x.num_cps != y.num_cps) return x.num_cps < y.num_cps;
                         return x.threshold_high > y.threshold_high;
                     });
    return path;
}

inline SegmentationResult result_from_entry(const SolutionPath& path,
                                            const SolutionPathEntry& entry) {
    SegmentationResult res;
    res.change_points = entry.change_points;
    res.peaks = entry.peaks;
    res.threshold_used = entry.trigger;
    res.trimming = path.trimming;
    res.standardized = path.standardized;
    res.scales = path.scales;
    return res;
}

}  // namespace detail

inline SolutionPath solution_path(const RegressionDataset& data, double trim = -1.0,
                                  bool standardize = false) {
    return detail::build_path(detail::scan_all(data, trim, standardize));
}

// Elbow selection on the solution path: collapse to one entry per change
// point count -- the first-trigger (highest threshold) solution, which is
// the canonical selection at that count; churned same-count solutions from
// deep in the sweep carry displaced locations and misleading scores. Then
// pick the entry at the bottom of the largest consecutive score drop.
// Entries whose score is 0 only because no interval was left to measure do
// not take part. Ties prefer the smaller count; a path without any
// positive drop falls back to its last entry.
inline SegmentationResult auto_select(const SolutionPath& path) {
    if (path.entries.empty()) throw invalid_input("auto_select: empty path");
    struct Collapsed {
        int num_cps;
        double score;
        size_t entry_index;
    };
    std::vector<Collapsed> g;
    for (size_t i = 0; i < path.entries.size(); ++i) {
        const auto& e = path.entries[i];
        if (!e.score_measured) continue;
        if (!g.empty() && g.back().num_cps == e.num_cps) continue;  // keep first trigger
        g.push_back({e.num_cps, e.score, i});
    }
    if (g.empty()) return detail::result_from_entry(path, path.entries.back());
    size_t pick = g.size() - 1;  // fallback: last measured entry
    if (g.size() >= 2) {
        double best_drop = 0.0;
        for (size_t i = 1; i < g.size(); ++i) {
            const double drop = g[i - 1].score - g[i].score;
            if (drop > best_drop) {
                best_drop = drop;
                pick = i;
            }
        }
    }
    return detail::result_from_entry(path, path.entries[g[pick].entry_index]);
}

inline SegmentationResult detect(const RegressionDataset& data, const ThresholdPolicy& policy,
                                 bool standardize = false) {
    const detail::ScanContext ctx = detail::scan_all(data, policy.trim, standardize);
    if (policy.kind == ThresholdPolicy::Kind::Automatic) {
        SolutionPath path = detail::build_path(ctx);
        return auto_select(path);
    }
    const double pi = policy.kind == ThresholdPolicy::Kind::Fixed
                          ? policy.pi
                          : default_threshold(data.n(), data.p(), policy.c_pi);
    if (pi < 0.0) throw invalid_input("detect: threshold must be >= 0");
    auto [cps, pks] = detail::not_select(ctx.peaks, pi, ctx.trimming);
    SegmentationResult res;
    res.change_points = std::move(cps);
    res.peaks = std::move(pks);
    res.threshold_used = pi;
    res.trimming = ctx.trimming;
    res.standardized = ctx.standardized;
    res.scales = ctx.scales;
    return res;
}

// Known-single-change convenience: the argmax of T_{0,k,n} over the whole
// sequence, no trimming.
inline SegmentationResult detect_single(const RegressionDataset& data,
                                        bool standardize = false) {
    data.validate();
    detail::ScanContext ctx;
    ctx.trimming = 0.0;
    ctx.standardized = standardize;
    const RegressionDataset* active = &data;
    RegressionDataset standardized_data;
    if (standardize) {
        auto [sdata, scales] = mad_standardize(data);
        standardized_data = std::move(sdata);
        ctx.scales = std::move(scales);
        active = &standardized_data;
    }
    const CrossProductSums sums = build_cross_sums(*active);
    SeededInterval whole{0, data.n(), 0};
    auto peak = scan_interval(sums, whole, 0.0);
    if (!peak) throw invalid_input("detect_single: n too small");
    SegmentationResult res;
    res.change_points = {peak->k_star};
    res.peaks = {*peak};
    res.threshold_used = 0.0;
    res.trimming = 0.0;
    res.standardized = ctx.standardized;
    res.scales = ctx.scales;
    return res;
}

}  // namespace covscan
