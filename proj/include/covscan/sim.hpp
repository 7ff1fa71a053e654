#pragma once

// Scenario generators and evaluation metrics.
//
// M1: isotropic Gaussian design, beta_0 = -beta_1 = rho * delta with delta
//     supported on a uniform random s-set and support values uniform on
//     the unit s-sphere.
// M2: Toeplitz design Sigma = [gamma^|i-j|], delta with s random +/-1
//     entries, mu = nu * mu_0 / sqrt(p), beta_{0,1} = mu -+ delta / 2.
// M3: q = 3 changes at jn/4, s = 4, beta_{0,i} = 0.4 (-1)^{i-1} on the
//     support, beta_j = (-1)^j beta_0.
//
// Draw order per generator is fixed (support, values, X rows, noise) so a
// seed pins the dataset bit-for-bit.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "covscan/dataset.hpp"
#include "covscan/inference.hpp"
#include "covscan/rng.hpp"

namespace covscan {

struct ScenarioTruth {
    std::vector<long> thetas;
    MatrixXd betas;   // p x (q+1), column j = segment-j coefficients
    MatrixXd deltas;  // p x q, column j = beta_j - beta_{j-1}
    std::vector<int> support;  // 0-based support of delta_1
};

struct ScenarioConfig {
    std::string scenario = "M1";  // M1 | M2 | M3
    long n = 300, p = 200;
    double rho = 2.0;    // M1
    double gamma = 0.6;  // M2
    double nu = 1.0;     // M2
    int sparsity = 5;    // M1/M2
    long theta1 = 75;    // M1/M2
    std::uint64_t seed = 0;
    long reps = 1;
};

namespace detail {

inline std::vector<int> sample_subset(Rng& rng, int p, int s) {
    std::vector<int> idx(static_cast<size_t>(p));
    std::iota(idx.begin(), idx.end(), 0);
    for (int i = 0; i < s; ++i) {
        const auto j = i + static_cast<int>(rng.uniform_below(static_cast<std::uint64_t>(p - i)));
        std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(j)]);
    }
    std::vector<int> out(idx.begin(), idx.begin() + s);
    std::sort(out.begin(), out.end());
    return out;
}

inline MatrixXd gaussian_matrix(Rng& rng, long n, long p) {
    MatrixXd X(n, p);
    for (long t = 0; t < n; ++t)
        for (long i = 0; i < p; ++i) X(t, i) = rng.normal();
    return X;
}

inline RegressionDataset assemble(const MatrixXd& X, const ScenarioTruth& truth, Rng& rng) {
    const long n = X.rows();
    RegressionDataset data;
    data.X = X;
    data.y.resize(n);
    size_t seg = 0;
    for (long t = 0; t < n; ++t) {
        while (seg < truth.thetas.size() && t >= truth.thetas[seg]) ++seg;
        data.y(t) = X.row(t).dot(truth.betas.col(static_cast<Index>(seg))) + rng.normal();
    }
    return data;
}

}  // namespace detail

inline std::pair<RegressionDataset, ScenarioTruth> gen_m1(long n, long p, double rho,
                                                          int sparsity, long theta1,
                                                          std::uint64_t seed) {
    if (sparsity < 1 || sparsity > p) throw invalid_input("gen_m1: 1 <= s <= p required");
    if (!(0 < theta1 && theta1 < n)) throw invalid_input("gen_m1: theta1 in (0, n) required");
    Rng rng(seed);
    ScenarioTruth truth;
    truth.thetas = {theta1};
    truth.support = detail::sample_subset(rng, static_cast<int>(p), sparsity);
    VectorXd dir = VectorXd::Zero(p);
    {
        VectorXd raw(sparsity);
        for (int i = 0; i < sparsity; ++i) raw(i) = rng.normal();
        raw /= raw.norm();
        for (int i = 0; i < sparsity; ++i) dir(truth.support[static_cast<size_t>(i)]) = raw(i);
    }
    truth.betas.resize(p, 2);
    truth.betas.col(0) = rho * dir;
    truth.betas.col(1) = -rho * dir;
    truth.deltas = truth.betas.col(1) - truth.betas.col(0);
    const MatrixXd X = detail::gaussian_matrix(rng, n, p);
    return {detail::assemble(X, truth, rng), std::move(truth)};
}

inline std::pair<RegressionDataset, ScenarioTruth> gen_m2(long n, long p, double gamma,
                                                          double nu, int sparsity, long theta1,
                                                          std::uint64_t seed) {
    if (std::fabs(gamma) >= 1.0) throw invalid_input("gen_m2: |gamma| < 1 required");
    if (sparsity < 1 || sparsity > p) throw invalid_input("gen_m2: 1 <= s <= p required");
    if (!(0 < theta1 && theta1 < n)) throw invalid_input("gen_m2: theta1 in (0, n) required");
    Rng rng(seed);
    ScenarioTruth truth;
    truth.thetas = {theta1};
    truth.support = detail::sample_subset(rng, static_cast<int>(p), sparsity);
    VectorXd delta = VectorXd::Zero(p);
    for (int i = 0; i < sparsity; ++i)
        delta(truth.support[static_cast<size_t>(i)]) = rng.uniform_below(2) == 0 ? 1.0 : -1.0;
    VectorXd mu(p);
    for (long i = 0; i < p; ++i) mu(i) = rng.normal();
    mu *= nu / std::sqrt(static_cast<double>(p));
    truth.betas.resize(p, 2);
    truth.betas.col(0) = mu - 0.5 * delta;
    truth.betas.col(1) = mu + 0.5 * delta;
    truth.deltas = delta;

    MatrixXd sigma(p, p);
    for (long i = 0; i < p; ++i)
        for (long j = 0; j < p; ++j)
            sigma(i, j) = std::pow(gamma, std::abs(i - j));
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(sigma);
    const MatrixXd root = eig.eigenvectors() *
                          eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() *
                          eig.eigenvectors().transpose();
    const MatrixXd X = detail::gaussian_matrix(rng, n, p) * root;
    return {detail::assemble(X, truth, rng), std::move(truth)};
}

inline std::pair<RegressionDataset, ScenarioTruth> gen_m3(long n, long p, std::uint64_t seed) {
    if (n % 4 != 0) throw invalid_input("gen_m3: n divisible by 4 required");
    if (p < 4) throw invalid_input("gen_m3: p >= 4 required");
    Rng rng(seed);
    ScenarioTruth truth;
    truth.thetas = {n / 4, n / 2, 3 * n / 4};
    truth.support = {0, 1, 2, 3};
    VectorXd beta0 = VectorXd::Zero(p);
    for (int i = 0; i < 4; ++i) beta0(i) = 0.4 * (i % 2 == 0 ? 1.0 : -1.0);
    truth.betas.resize(p, 4);
    for (int j = 0; j < 4; ++j) truth.betas.col(j) = (j % 2 == 0 ? 1.0 : -1.0) * beta0;
    truth.deltas.resize(p, 3);
    for (int j = 1; j <= 3; ++j)
        truth.deltas.col(j - 1) = truth.betas.col(j) - truth.betas.col(j - 1);
    const MatrixXd X = detail::gaussian_matrix(rng, n, p);
    return {detail::assemble(X, truth, rng), std::move(truth)};
}

inline std::pair<RegressionDataset, ScenarioTruth> generate(const ScenarioConfig& cfg,
                                                            std::uint64_t rep_seed) {
    if (cfg.scenario == "M1")
        return gen_m1(cfg.n, cfg.p, cfg.rho, cfg.sparsity, cfg.theta1, rep_seed);
    if (cfg.scenario == "M2")
        return gen_m2(cfg.n, cfg.p, cfg.gamma, cfg.nu, cfg.sparsity, cfg.theta1, rep_seed);
    if (cfg.scenario == "M3") return gen_m3(cfg.n, cfg.p, rep_seed);
    throw invalid_input("generate: unknown scenario " + cfg.scenario);
}

// ---- metrics ----

// Hausdorff distance between the scaled change-point sets, both augmented
// with the boundary points {0, 1} so an empty estimate has finite distance.
inline double hausdorff_scaled(const std::vector<long>& estimated,
                               const std::vector<long>& truth, long n) {
    auto scaled = [n](const std::vector<long>& v) {
        std::vector<double> out{0.0, 1.0};
        for (long c : v) out.push_back(static_cast<double>(c) / static_cast<double>(n));
        std::sort(out.begin(), out.end());
        return out;
    };
    const auto a = scaled(estimated), b = scaled(truth);
    auto directed = [](const std::vector<double>& from, const std::vector<double>& to) {
        double worst = 0.0;
        for (double x : from) {
            double best = std::numeric_limits<double>::infinity();
            for (double yv : to) best = std::min(best, std::fabs(x - yv));
            worst = std::max(worst, best);
        }
        return worst;
    };
    return std::max(directed(a, b), directed(b, a));
}

// V-measure (beta = 1) of the two segmentations viewed as clusterings of
// {1..n}: harmonic mean of homogeneity and completeness.
inline double v_measure(const std::vector<long>& estimated, const std::vector<long>& truth,
                        long n) {
    auto label = [](const std::vector<long>& cps, long t) {
        size_t seg = 0;
        while (seg < cps.size() && t >= cps[seg]) ++seg;
        return seg;
    };
    const size_t kc = truth.size() + 1, kk = estimated.size() + 1;
    MatrixXd table = MatrixXd::Zero(static_cast<Index>(kc), static_cast<Index>(kk));
    for (long t = 0; t < n; ++t)
        table(static_cast<Index>(label(truth, t)), static_cast<Index>(label(estimated, t))) += 1.0;
    const double total = static_cast<double>(n);
    auto entropy = [total](const VectorXd& counts) {
        double h = 0.0;
        for (Index i = 0; i < counts.size(); ++i)
            if (counts(i) > 0.0) {
                const double q = counts(i) / total;
                h -= q * std::log(q);
            }
        return h;
    };
    const VectorXd rows = table.rowwise().sum(), cols = table.colwise().sum().transpose();
    const double hc = entropy(rows), hk = entropy(cols);
    double hck = 0.0, hkc = 0.0;
    for (Index i = 0; i < table.rows(); ++i)
        for (Index j = 0; j < table.cols(); ++j) {
            const double cnt = table(i, j);
            if (cnt <= 0.0) continue;
            hck -= cnt / total * std::log(cnt / cols(j));
            hkc -= cnt / total * std::log(cnt / rows(i));
        }
    const double hom = hc == 0.0 ? 1.0 : 1.0 - hck / hc;
    const double com = hk == 0.0 ? 1.0 : 1.0 - hkc / hk;
    if (hom + com == 0.0) return 0.0;
    return 2.0 * hom * com / (hom + com);
}

struct EvalReport {
    long q_hat = 0;
    long q_true = 0;
    std::vector<double> loc_errors;  // per true change: distance to nearest estimate
    double hausdorff = 0.0;
    double vmeasure = 0.0;
    // inference metrics, per change point
    std::vector<double> coverage;    // 0/1
    std::vector<double> proportion;
    std::vector<double> tpr;         // NaN when the true support is empty
    std::vector<double> fdr;
    std::vector<double> half_width;
    double runtime_sec = 0.0;
};

inline EvalReport evaluate_detection(const std::vector<long>& estimated,
                                     const std::vector<long>& truth, long n) {
    EvalReport rep;
    rep.q_hat = static_cast<long>(estimated.size());
    rep.q_true = static_cast<long>(truth.size());
    for (long theta : truth) {
        double best = std::numeric_limits<double>::quiet_NaN();
        for (long est : estimated) {
            const double d = std::fabs(static_cast<double>(est - theta));
            if (std::isnan(best) || d < best) best = d;
        }
        rep.loc_errors.push_back(best);
    }
    rep.hausdorff = hausdorff_scaled(estimated, truth, n);
    rep.vmeasure = v_measure(estimated, truth, n);
    return rep;
}

// Coverage / Proportion / TPR / FDR of simultaneous bands against the true
// differential parameters (column j of delta_truth for band j).
inline EvalReport evaluate_inference(const std::vector<ConfidenceBand>& bands,
                                     const MatrixXd& delta_truth) {
    if (static_cast<Index>(bands.size()) != delta_truth.cols())
        throw invalid_input("evaluate_inference: band count must match delta columns");
    EvalReport rep;
    for (size_t j = 0; j < bands.size(); ++j) {
        const ConfidenceBand& band = bands[j];
        const VectorXd truth = delta_truth.col(static_cast<Index>(j));
        if (band.delta_tilde.size() != truth.size())
            throw invalid_input("evaluate_inference: dimension mismatch");
        long covered = 0, true_pos = 0, false_pos = 0, rejections = 0, support = 0;
        for (Index i = 0; i < truth.size(); ++i) {
            const bool in_band = band.lower(i) < truth(i) && truth(i) < band.upper(i);
            covered += in_band ? 1 : 0;
            const bool rejected = !(band.lower(i) < 0.0 && 0.0 < band.upper(i));
            if (truth(i) != 0.0) ++support;
            if (rejected) {
                ++rejections;
                if (truth(i) != 0.0)
                    ++true_pos;
                else
                    ++false_pos;
            }
        }
        const auto p = static_cast<double>(truth.size());
        rep.coverage.push_back(covered == truth.size() ? 1.0 : 0.0);
        rep.proportion.push_back(static_cast<double>(covered) / p);
        rep.tpr.push_back(support > 0
                              ? static_cast<double>(true_pos) / static_cast<double>(support)
                              : std::numeric_limits<double>::quiet_NaN());
        rep.fdr.push_back(static_cast<double>(false_pos) /
                          static_cast<double>(std::max<long>(rejections, 1)));
        rep.half_width.push_back(band.half_width);
    }
    return rep;
}

// ---- plain-text key=value round trip for scenario configs ----

inline std::string scenario_to_kv(const ScenarioConfig& cfg) {
    std::string out;
    auto put = [&out](const std::string& k, const std::string& v) {
        out += k + " = " + v + "\n";
    };
    put("scenario", cfg.scenario);
    put("n", std::to_string(cfg.n));
    put("p", std::to_string(cfg.p));
    put("rho", std::to_string(cfg.rho));
    put("gamma", std::to_string(cfg.gamma));
    put("nu", std::to_string(cfg.nu));
    put("sparsity", std::to_string(cfg.sparsity));
    put("theta1", std::to_string(cfg.theta1));
    put("seed", std::to_string(cfg.seed));
    put("reps", std::to_string(cfg.reps));
    return out;
}

inline ScenarioConfig scenario_from_kv(const std::string& text) {
    ScenarioConfig cfg;
    std::map<std::string, std::string> kv;
    size_t pos = 0;
    while (pos < text.size()) {
        size_t end = text.find('\n', pos);
        if (end == std::string::npos) end = text.size();
        std::string line = text.substr(pos, end - pos);
        pos = end + 1;
        const size_t eq = line.find('=');
        if (eq == std::string::npos) continue;
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    if (kv.count("scenario")) cfg.scenario = kv["scenario"];
    if (kv.count("n")) cfg.n = std::stol(kv["n"]);
    if (kv.count("p")) cfg.p = std::stol(kv["p"]);
    if (kv.count("rho")) cfg.rho = std::stod(kv["rho"]);
    if (kv.count("gamma")) cfg.gamma = std::stod(kv["gamma"]);
    if (kv.count("nu")) cfg.nu = std::stod(kv["nu"]);
    if (kv.count("sparsity")) cfg.sparsity = std::stoi(kv["sparsity"]);
    if (kv.count("theta1")) cfg.theta1 = std::stol(kv["theta1"]);
    if (kv.count("seed")) cfg.seed = std::stoull(kv["seed"]);
    if (kv.count("reps")) cfg.reps = std::stol(kv["reps"]);
    return cfg;
}

}  // namespace covscan
