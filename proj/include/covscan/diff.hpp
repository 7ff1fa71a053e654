#pragma once

// Direct estimation of the differential parameter delta = beta_right -
// beta_left on an interval (s, e] split at k. Two routes share the same
// local statistics Sigma_{s,e} (gram over the whole interval) and
// d = gamma_{k,e} - gamma_{s,k} (difference of cross-product means):
//
//   LOPE:  min 1/2 a^T Sigma a - a^T d + (lambda / c) |a|_1
//   CLOM:  min |a|_1  s.t.  c |Sigma a - d|_inf <= lambda
//
// with the location factor c = sqrt((k-s)(e-k)/(e-s)). LOPE is solved by
// coordinate descent in the quadratic form directly; CLOM by the dual
// simplex on the sign-split program.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "covscan/dataset.hpp"
#include "covscan/detect.hpp"
#include "covscan/lasso.hpp"
#include "covscan/lp.hpp"

namespace covscan {

struct AnchorInterval {
    int j = 0;           // change index (1-based in reports)
    long a = 0, b = 0;   // interval bounds, (a, b]
    long delta_hat = 0;  // half-width
    long theta_hat = 0;  // change estimate, a < theta_hat < b
};

// Anchor construction: half-width
//   Delta_j = min(theta_j - floor((2 theta_{j-1} + theta_j)/3),
//                 ceil((theta_j + 2 theta_{j+1})/3) - theta_j)
// with theta_0 = 0, theta_{q+1} = n, so each anchor isolates one change.
inline std::vector<AnchorInterval> anchor_intervals(const std::vector<long>& cps, long n) {
    for (size_t j = 0; j < cps.size(); ++j) {
        const long prev = j == 0 ? 0 : cps[j - 1];
        if (!(prev < cps[j] && cps[j] < n))
            throw invalid_input("anchor_intervals: change points must be strictly increasing in (0, n)");
    }
    std::vector<AnchorInterval> out;
    for (size_t j = 0; j < cps.size(); ++j) {
        const long prev = j == 0 ? 0 : cps[j - 1];
        const long next = j + 1 == cps.size() ? n : cps[j + 1];
        const long left = cps[j] - (2 * prev + cps[j]) / 3;
        const long right = (cps[j] + 2 * next + 2) / 3 - cps[j];
        AnchorInterval ai;
        ai.j = static_cast<int>(j) + 1;
        ai.theta_hat = cps[j];
        ai.delta_hat = std::min(left, right);
        ai.a = cps[j] - ai.delta_hat;
        ai.b = cps[j] + ai.delta_hat;
        out.push_back(ai);
    }
    return out;
}

enum class DiffMethod { Lope, Clom, Naive };

inline const char* diff_method_name(DiffMethod m) {
    switch (m) {
        case DiffMethod::Lope: return "lope";
        case DiffMethod::Clom: return "clom";
        case DiffMethod::Naive: return "naive";
    }
    return "?";
}

struct DiffEstimate {
    VectorXd delta;
    DiffMethod method = DiffMethod::Lope;
    double lambda = 0.0;
    AnchorInterval interval;
    double kkt_residual = 0.0;  // LOPE: KKT residual; CLOM: constraint slack
    bool converged = true;
};

namespace detail {

struct LocalStats {
    MatrixXd sigma;  // average of x x^T over used rows in (s, e]
    VectorXd d;      // mean_(k,e] x y - mean_(s,k] x y over used rows
    long n_used = 0;
};

// keep(t) selects rows (0-based); pass nullptr for all rows.
inline LocalStats local_stats(const RegressionDataset& data, long s, long k, long e,
                              const std::function<bool(long)>* keep = nullptr) {
    if (!(0 <= s && s < k && k < e && e <= data.n()))
        throw invalid_input("local_stats: require 0 <= s < k < e <= n");
    const Index p = data.p();
    LocalStats st;
    st.sigma = MatrixXd::Zero(p, p);
    VectorXd left = VectorXd::Zero(p), right = VectorXd::Zero(p);
    long n_all = 0, n_left = 0, n_right = 0;
    for (long t = s; t < e; ++t) {
        if (keep && !(*keep)(t)) continue;
        const auto xt = data.X.row(t).transpose();
        st.sigma.noalias() += xt * xt.transpose();
        if (t < k) {
            left.noalias() += xt * data.y(t);
            ++n_left;
        } else {
            right.noalias() += xt * data.y(t);
            ++n_right;
        }
        ++n_all;
    }
    if (n_left == 0 || n_right == 0)
        throw invalid_input("local_stats: a side of the split has no usable rows");
    st.sigma /= static_cast<double>(n_all);
    st.sigma = 0.5 * (st.sigma + st.sigma.transpose()).eval();
    st.d = right / static_cast<double>(n_right) - left / static_cast<double>(n_left);
    st.n_used = n_all;
    return st;
}

inline AnchorInterval interval_of(long s, long k, long e) {
    AnchorInterval ai;
    ai.a = s;
    ai.b = e;
    ai.theta_hat = k;
    ai.delta_hat = std::min(k - s, e - k);
    return ai;
}

inline DiffEstimate lope_from_stats(const LocalStats& st, long s, long k, long e,
                                    double lambda, const VectorXd* warm = nullptr) {
    const double c = location_factor(s, k, e);
    GramLassoResult fit = gram_lasso(st.sigma, st.d, lambda / c, warm);
    DiffEstimate est;
    est.delta = fit.a;
    est.method = DiffMethod::Lope;
    est.lambda = lambda;
    est.interval = interval_of(s, k, e);
    est.kkt_residual = fit.kkt_residual;
    est.converged = fit.converged;
    return est;
}

inline DiffEstimate clom_from_lp(DualSimplex& lp, const LocalStats& st, long s, long k,
                                 long e, double lambda) {
    const double c = location_factor(s, k, e);
    const double tau = lambda / c;
    LpResult sol = lp.solve(l1_rhs(st.d, tau));
    if (sol.infeasible) {
        const int coord = sol.infeasible_row >= 0
                              ? sol.infeasible_row % static_cast<int>(st.d.size())
                              : 0;
        throw numeric_failure("clom: infeasible at lambda=" + std::to_string(lambda) +
                              " (coordinate " + std::to_string(coord + 1) + ")");
    }
    DiffEstimate est;
    est.delta = l1_recover(sol.x);
    est.method = DiffMethod::Clom;
    est.lambda = lambda;
    est.interval = interval_of(s, k, e);
    est.kkt_residual = tau - (st.sigma * est.delta - st.d).cwiseAbs().maxCoeff();
    est.converged = true;
    return est;
}

// validation analog of the fitted objective, up to an additive constant
inline double quad_validation_loss(const LocalStats& val, const VectorXd& a) {
    return 0.5 * a.dot(val.sigma * a) - a.dot(val.d);
}

}  // namespace detail

inline DiffEstimate lope(const RegressionDataset& data, long s, long k, long e,
                         double lambda) {
    data.validate();
    if (lambda < 0.0) throw invalid_input("lope: lambda >= 0 required");
    return detail::lope_from_stats(detail::local_stats(data, s, k, e), s, k, e, lambda);
}

inline DiffEstimate clom(const RegressionDataset& data, long s, long k, long e,
                         double lambda) {
    data.validate();
    if (lambda < 0.0) throw invalid_input("clom: lambda >= 0 required");
    const auto st = detail::local_stats(data, s, k, e);
    DualSimplex lp(l1_constraint_matrix(st.sigma), VectorXd::Ones(2 * st.d.size()));
    return detail::clom_from_lp(lp, st, s, k, e, lambda);
}

// Smallest lambda whose fit is exactly zero (both LOPE and CLOM).
inline double lambda_max(const RegressionDataset& data, long s, long k, long e) {
    const auto st = detail::local_stats(data, s, k, e);
    return location_factor(s, k, e) * st.d.cwiseAbs().maxCoeff();
}

// Benchmark estimator: difference of two per-segment gram lassos
// (standard lasso in its gram form, Sigma_side = X^T X / m, d = X^T y / m).
inline DiffEstimate naive_diff(const RegressionDataset& data, long s, long k, long e,
                               double lambda_left, double lambda_right) {
    data.validate();
    if (!(0 <= s && s < k && k < e && e <= data.n()))
        throw invalid_input("naive_diff: require 0 <= s < k < e <= n");
    auto side_fit = [&](long lo, long hi, double lambda) {
        const auto block = data.X.middleRows(lo, hi - lo);
        const MatrixXd sigma = block.transpose() * block / static_cast<double>(hi - lo);
        const VectorXd d = block.transpose() * data.y.segment(lo, hi - lo) /
                           static_cast<double>(hi - lo);
        return gram_lasso(sigma, d, lambda);
    };
    GramLassoResult left = side_fit(s, k, lambda_left);
    GramLassoResult right = side_fit(k, e, lambda_right);
    DiffEstimate est;
    est.delta = right.a - left.a;
    est.method = DiffMethod::Naive;
    est.lambda = lambda_right;
    est.interval = detail::interval_of(s, k, e);
    est.kkt_residual = std::max(left.kkt_residual, right.kkt_residual);
    est.converged = left.converged && right.converged;
    return est;
}

// Cross-validated lambda on a log grid from lambda_max down to 1e-3 of it.
// Folds interleave time indices within each side of k so both segments
// contribute to every fold. Ties prefer the larger lambda.
inline double cv_lambda(const RegressionDataset& data, long s, long k, long e,
                        DiffMethod method, int grid_size = 100, int folds = 5) {
    data.validate();
    if (grid_size < 1) throw invalid_input("cv_lambda: grid_size >= 1 required");
    if (folds < 2) throw invalid_input("cv_lambda: folds >= 2 required");
    if (e - s < 2 * folds) throw invalid_input("cv_lambda: interval shorter than 2*folds");

    double lmax;
    if (method == DiffMethod::Naive) {
        auto side_lmax = [&](long lo, long hi) {
            const auto block = data.X.middleRows(lo, hi - lo);
            return (block.transpose() * data.y.segment(lo, hi - lo) /
                    static_cast<double>(hi - lo))
                .cwiseAbs()
                .maxCoeff();
        };
        lmax = std::max(side_lmax(s, k), side_lmax(k, e));
    } else {
        lmax = lambda_max(data, s, k, e);
    }
    if (!(lmax > 0.0)) throw numeric_failure("cv_lambda: degenerate grid (lambda_max = 0)");
    std::vector<double> grid(static_cast<size_t>(grid_size));
    if (grid_size == 1) {
        grid[0] = lmax;
    } else {
        const double lo = std::log(1e-3 * lmax), hi = std::log(lmax);
        for (int g = 0; g < grid_size; ++g)
            grid[static_cast<size_t>(g)] =
                std::exp(hi + (lo - hi) * g / static_cast<double>(grid_size - 1));
    }

    std::vector<double> loss(grid.size(), 0.0);
    for (int f = 0; f < folds; ++f) {
        const std::function<bool(long)> train = [&](long t) {
            const long offset = t < k ? t - s : t - k;
            return offset % folds != f;
        };
        const std::function<bool(long)> val = [&](long t) { return !train(t); };
        if (method == DiffMethod::Naive) {
            auto side_stats = [&](long lo, long hi, const std::function<bool(long)>& keep) {
                MatrixXd sig = MatrixXd::Zero(data.p(), data.p());
                VectorXd d = VectorXd::Zero(data.p());
                std::vector<long> rows;
                for (long t = lo; t < hi; ++t)
                    if (keep(t)) rows.push_back(t);
                if (rows.empty()) throw invalid_input("cv_lambda: empty fold side");
                for (long t : rows) {
                    const auto xt = data.X.row(t).transpose();
                    sig.noalias() += xt * xt.transpose();
                    d.noalias() += xt * data.y(t);
                }
                sig /= static_cast<double>(rows.size());
                d /= static_cast<double>(rows.size());
                return std::make_pair(sig, d);
            };
            auto [sl, dl] = side_stats(s, k, train);
            auto [sr, dr] = side_stats(k, e, train);
            VectorXd warm_l = VectorXd::Zero(data.p()), warm_r = VectorXd::Zero(data.p());
            for (size_t g = 0; g < grid.size(); ++g) {
                warm_l = gram_lasso(sl, dl, grid[g], &warm_l).a;
                warm_r = gram_lasso(sr, dr, grid[g], &warm_r).a;
                double mse = 0.0;
                long cnt = 0;
                for (long t = s; t < e; ++t) {
                    if (!val(t)) continue;
                    const VectorXd& b = t < k ? warm_l : warm_r;
                    const double r = data.y(t) - data.X.row(t).dot(b);
                    mse += r * r;
                    ++cnt;
                }
                loss[g] += mse / static_cast<double>(cnt);
            }
        } else {
            const auto st_train = detail::local_stats(data, s, k, e, &train);
            const auto st_val = detail::local_stats(data, s, k, e, &val);
            if (method == DiffMethod::Lope) {
                VectorXd warm = VectorXd::Zero(data.p());
                for (size_t g = 0; g < grid.size(); ++g) {
                    warm = detail::lope_from_stats(st_train, s, k, e, grid[g], &warm).delta;
                    loss[g] += detail::quad_validation_loss(st_val, warm);
                }
            } else {
                DualSimplex lp(l1_constraint_matrix(st_train.sigma),
                               VectorXd::Ones(2 * st_train.d.size()));
                for (size_t g = 0; g < grid.size(); ++g) {
                    try {
                        const auto est = detail::clom_from_lp(lp, st_train, s, k, e, grid[g]);
                        loss[g] += detail::quad_validation_loss(st_val, est.delta);
                    } catch (const numeric_failure&) {
                        // infeasible stays infeasible as lambda shrinks
                        for (size_t gg = g; gg < grid.size(); ++gg)
                            loss[gg] = std::numeric_limits<double>::infinity();
                        break;
                    }
                }
            }
        }
    }
    size_t best = 0;
    for (size_t g = 1; g < grid.size(); ++g)
        if (loss[g] < loss[best]) best = g;  // grid is descending: ties keep larger lambda
    return grid[best];
}

// Anchor-based fit used by the estimation/inference pipelines.
inline DiffEstimate estimate_at_anchor(const RegressionDataset& data, const AnchorInterval& ai,
                                       DiffMethod method, double lambda) {
    if (ai.delta_hat < 2)
        throw numeric_failure("diff estimation: anchor " + std::to_string(ai.j) +
                              " is degenerate (half-width " + std::to_string(ai.delta_hat) +
                              " < 2)");
    DiffEstimate est;
    switch (method) {
        case DiffMethod::Lope:
            est = lope(data, ai.a, ai.theta_hat, ai.b, lambda);
            break;
        case DiffMethod::Clom:
            est = clom(data, ai.a, ai.theta_hat, ai.b, lambda);
            break;
        case DiffMethod::Naive:
            est = naive_diff(data, ai.a, ai.theta_hat, ai.b, lambda, lambda);
            break;
    }
    est.interval = ai;
    return est;
}

}  // namespace covscan
