#pragma once

// De-sparsified differential estimates and simultaneous confidence bands.
//
// The bias correction is
//   delta_tilde = delta_hat - Omega (Sigma_plug delta_hat - d_plug),
// with plug-ins from the odd half (split mode) or the full data (no-split
// mode, the default: a_j = theta_{j-1}, b_j = theta_{j+1}, eps = 0).
// Band half-widths are C / location_factor with the exact factor
// sqrt((theta-a)(b-theta)/(b-a)); C is the empirical (1-alpha) quantile
// of |.|_inf draws, either of N_p(0, Omega Gamma Omega^T) samples or of
// multiplier-bootstrap replicates pooled with |delta_tilde|_inf.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "covscan/dataset.hpp"
#include "covscan/diff.hpp"
#include "covscan/parallel.hpp"
#include "covscan/precision.hpp"
#include "covscan/rng.hpp"

namespace covscan {

struct SplitData {
    RegressionDataset even;  // rows at even 1-based original times 2, 4, ...
    RegressionDataset odd;   // rows at odd 1-based original times 1, 3, ...
    long n0 = 0;
    std::vector<long> even_orig;  // 0-based original row of each half row
    std::vector<long> odd_orig;
};

// Deterministic even/odd split; the trailing row of an odd-length sample
// is dropped so both halves have exactly n0 = floor(n/2) rows.
inline SplitData split_even_odd(const RegressionDataset& data) {
    data.validate();
    const long n = data.n();
    if (n < 4) throw invalid_input("split_even_odd: n >= 4 required");
    SplitData sp;
    sp.n0 = n / 2;
    const Index p = data.p();
    sp.even.X.resize(sp.n0, p);
    sp.even.y.resize(sp.n0);
    sp.odd.X.resize(sp.n0, p);
    sp.odd.y.resize(sp.n0);
    for (long t = 0; t < sp.n0; ++t) {
        const long odd_row = 2 * t;       // original times 1, 3, ...
        const long even_row = 2 * t + 1;  // original times 2, 4, ...
        sp.odd.X.row(t) = data.X.row(odd_row);
        sp.odd.y(t) = data.y(odd_row);
        sp.even.X.row(t) = data.X.row(even_row);
        sp.even.y(t) = data.y(even_row);
        sp.odd_orig.push_back(odd_row);
        sp.even_orig.push_back(even_row);
    }
    return sp;
}

// Location-dependent weights of the bootstrap score sum:
// -sqrt((b-theta)/(theta-a)) left of the change, +sqrt((theta-a)/(b-theta))
// right of it; their product is -1.
inline std::pair<double, double> location_weights(long a, long theta, long b) {
    if (!(a < theta && theta < b))
        throw invalid_input("location_weights: require a < theta < b");
    const double left = static_cast<double>(theta - a);
    const double right = static_cast<double>(b - theta);
    return {-std::sqrt(right / left), std::sqrt(left / right)};
}

struct DesparsifiedEstimate {
    VectorXd delta_tilde;
    double loc_factor = 0.0;
    bool split_mode = false;
};

inline DesparsifiedEstimate desparsify(const VectorXd& delta_hat, const MatrixXd& omega,
                                       const MatrixXd& gram_plug, const VectorXd& d_plug,
                                       double loc_factor, bool split_mode = false) {
    if (omega.rows() != delta_hat.size() || omega.cols() != delta_hat.size() ||
        gram_plug.rows() != delta_hat.size() || d_plug.size() != delta_hat.size())
        throw invalid_input("desparsify: shape mismatch");
    DesparsifiedEstimate out;
    out.delta_tilde = delta_hat - omega * (gram_plug * delta_hat - d_plug);
    out.loc_factor = loc_factor;
    out.split_mode = split_mode;
    return out;
}

struct NoiseCovariance {
    MatrixXd gamma;  // symmetric, eigenvalue-clipped at 0
    double eps = 0.0;
    long window_b_bar = 0;  // (a, b_bar] left window
    long window_a_bar = 0;  // (a_bar, b] right window
    double min_eig_before_clip = 0.0;
    double clip_magnitude = 0.0;
    double trace_before_clip = 0.0;
};

namespace detail {

// score terms U_t = x_t (y_t + 1/2 x_t^T delta) for t <= theta,
//             U_t = x_t (y_t - 1/2 x_t^T delta) for t > theta  (0-based rows a..b-1)
inline MatrixXd score_terms(const RegressionDataset& side, long a, long theta, long b,
                            const VectorXd& delta_hat) {
    const Index p = side.p();
    MatrixXd U(p, b - a);
    for (long t = a; t < b; ++t) {
        const double corr = 0.5 * side.X.row(t).dot(delta_hat);
        const double resid = t < theta ? side.y(t) + corr : side.y(t) - corr;
        U.col(t - a) = side.X.row(t).transpose() * resid;
    }
    return U;
}

inline MatrixXd centered_cov(const MatrixXd& cols) {
    const double m = static_cast<double>(cols.cols());
    const VectorXd mean = cols.rowwise().mean();
    const MatrixXd centered = cols.colwise() - mean;
    MatrixXd cov = centered * centered.transpose() / m;
    return 0.5 * (cov + cov.transpose());
}

}  // namespace detail

// Gamma estimate: average of the empirical covariances of the score terms
// over the windows (a, b_bar] and (a_bar, b] with
// b_bar = a + floor((1-eps) Delta), a_bar = b - floor((1-eps) Delta),
// Delta = min(theta - a, b - theta); then eigenvalue-clipped at zero.
inline NoiseCovariance gamma_hat(const RegressionDataset& side, long a, long theta, long b,
                                 const VectorXd& delta_hat, double eps) {
    side.validate();
    if (!(0 <= a && a < theta && theta < b && b <= side.n()))
        throw invalid_input("gamma_hat: require 0 <= a < theta < b <= n");
    if (!(eps >= 0.0 && eps < 1.0)) throw invalid_input("gamma_hat: eps in [0,1) required");
    const long delta = std::min(theta - a, b - theta);
    const long w = static_cast<long>(std::floor((1.0 - eps) * static_cast<double>(delta)));
    if (w < 2) throw invalid_input("gamma_hat: window shorter than 2");
    NoiseCovariance out;
    out.eps = eps;
    out.window_b_bar = a + w;
    out.window_a_bar = b - w;
    const MatrixXd U = detail::score_terms(side, a, theta, b, delta_hat);
    const MatrixXd left = U.leftCols(w);
    const MatrixXd right = U.rightCols(w);
    MatrixXd gamma = 0.5 * (detail::centered_cov(left) + detail::centered_cov(right));
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(gamma);
    out.min_eig_before_clip = eig.eigenvalues().minCoeff();
    out.trace_before_clip = gamma.trace();
    out.clip_magnitude = std::max(0.0, -out.min_eig_before_clip);
    const VectorXd clipped = eig.eigenvalues().cwiseMax(0.0);
    out.gamma = eig.eigenvectors() * clipped.asDiagonal() * eig.eigenvectors().transpose();
    out.gamma = 0.5 * (out.gamma + out.gamma.transpose()).eval();
    return out;
}

enum class CiMethod { GaussianLimit, MultiplierBootstrap };

inline const char* ci_method_name(CiMethod m) {
    return m == CiMethod::GaussianLimit ? "gaussian_limit" : "multiplier_bootstrap";
}

struct ConfidenceBand {
    int change_index = 0;
    long theta = 0, a = 0, b = 0;
    VectorXd delta_tilde;
    VectorXd lower, upper;
    double alpha = 0.0;
    CiMethod method = CiMethod::GaussianLimit;
    int B = 0;
    double quantile = 0.0;       // the C value
    double quantile_level = 0.0; // empirical level used, 1 - alpha
    double half_width = 0.0;
    double loc_factor = 0.0;
    double lambda_used = 0.0;
    double eta_used = 0.0;
    std::uint64_t seed = 0;
    bool quantile_includes_center = false;  // bootstrap pools |delta_tilde|_inf
    double gamma_clip = 0.0;
    std::vector<int> rejected;  // 0-based coordinates with 0 outside the interval

    void finalize_band() {
        lower = delta_tilde.array() - half_width;
        upper = delta_tilde.array() + half_width;
        rejected.clear();
        for (Index i = 0; i < delta_tilde.size(); ++i)
            if (!(lower(i) < 0.0 && 0.0 < upper(i))) rejected.push_back(static_cast<int>(i));
    }
};

// k-th order statistic with k = ceil(level * N): the empirical level-
// quantile of the draws.
inline double empirical_quantile(std::vector<double> draws, double level) {
    if (draws.empty()) throw invalid_input("empirical_quantile: no draws");
    std::sort(draws.begin(), draws.end());
    const auto n = static_cast<double>(draws.size());
    auto k = static_cast<std::ptrdiff_t>(std::ceil(level * n));
    k = std::max<std::ptrdiff_t>(1, std::min<std::ptrdiff_t>(k, draws.size()));
    return draws[static_cast<size_t>(k - 1)];
}

inline ConfidenceBand gaussian_ci(const VectorXd& delta_tilde, const MatrixXd& omega,
                                  const NoiseCovariance& noise, double loc_factor,
                                  double alpha, int B, std::uint64_t seed) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw invalid_input("gaussian_ci: alpha in (0,1)");
    if (B < 1) throw invalid_input("gaussian_ci: B >= 1 required");
    if (noise.min_eig_before_clip < -1e-6 * std::max(0.0, noise.trace_before_clip))
        throw numeric_failure("gaussian_ci: noise covariance indefinite beyond clip tolerance");
    const Index p = delta_tilde.size();
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(noise.gamma);
    const MatrixXd L =
        eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
    const MatrixXd OL = omega * L;  // draw = OL z, z ~ N(0, I)
    std::vector<double> sup(static_cast<size_t>(B));
    parallel_for(B, [&](std::ptrdiff_t rep) {
        Rng rng(derive_seed(seed, 0x6761757373ULL, static_cast<std::uint64_t>(rep)));
        VectorXd z(p);
        for (Index i = 0; i < p; ++i) z(i) = rng.normal();
        sup[static_cast<size_t>(rep)] = (OL * z).cwiseAbs().maxCoeff();
    });
    ConfidenceBand band;
    band.delta_tilde = delta_tilde;
    band.alpha = alpha;
    band.method = CiMethod::GaussianLimit;
    band.B = B;
    band.quantile_level = 1.0 - alpha;
    band.quantile = empirical_quantile(sup, band.quantile_level);
    band.loc_factor = loc_factor;
    band.half_width = band.quantile / loc_factor;
    band.seed = seed;
    band.gamma_clip = noise.clip_magnitude;
    band.finalize_band();
    return band;
}

namespace detail {

// columns m_t = w_t * Omega (U_t - Ubar); a bootstrap replicate is
// K zeta / sqrt(b - a) with zeta ~ N(0, I_{b-a})
inline MatrixXd bootstrap_score_matrix(const RegressionDataset& side, long a, long theta,
                                       long b, const VectorXd& delta_hat,
                                       const MatrixXd& omega) {
    MatrixXd U = score_terms(side, a, theta, b, delta_hat);
    const VectorXd ubar = U.rowwise().mean();
    U.colwise() -= ubar;
    MatrixXd K = omega * U;
    const auto [w_left, w_right] = location_weights(a, theta, b);
    for (long t = 0; t < b - a; ++t) K.col(t) *= (a + t < theta ? w_left : w_right);
    return K;
}

}  // namespace detail

inline ConfidenceBand bootstrap_ci(const RegressionDataset& side, long a, long theta, long b,
                                   const VectorXd& delta_hat, const VectorXd& delta_tilde,
                                   const MatrixXd& omega, double alpha, int B,
                                   std::uint64_t seed) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw invalid_input("bootstrap_ci: alpha in (0,1)");
    if (B < 1) throw invalid_input("bootstrap_ci: B >= 1 required");
    const long len = b - a;
    const MatrixXd K = detail::bootstrap_score_matrix(side, a, theta, b, delta_hat, omega);
    const double scale = 1.0 / std::sqrt(static_cast<double>(len));
    std::vector<double> sup(static_cast<size_t>(B) + 1);
    parallel_for(B, [&](std::ptrdiff_t rep) {
        Rng rng(derive_seed(seed, 0x626f6f74ULL, static_cast<std::uint64_t>(rep)));
        VectorXd zeta(len);
        for (long t = 0; t < len; ++t) zeta(t) = rng.normal();
        sup[static_cast<size_t>(rep)] = scale * (K * zeta).cwiseAbs().maxCoeff();
    });
    sup.back() = delta_tilde.cwiseAbs().maxCoeff();  // pooled with the draws
    ConfidenceBand band;
    band.delta_tilde = delta_tilde;
    band.alpha = alpha;
    band.method = CiMethod::MultiplierBootstrap;
    band.B = B;
    band.quantile_level = 1.0 - alpha;
    band.quantile = empirical_quantile(sup, band.quantile_level);
    band.loc_factor = location_factor(a, theta, b);
    band.half_width = band.quantile / band.loc_factor;
    band.seed = seed;
    band.quantile_includes_center = true;
    band.finalize_band();
    return band;
}

inline constexpr double kEtaAuto = -1.0;  // undersmoothed default
inline constexpr double kEtaCv = -2.0;    // cross-validated

struct InferOptions {
    bool split = false;           // default: no-split, all data between neighbours
    CiMethod method = CiMethod::MultiplierBootstrap;
    double eps = 0.0;
    int B = 999;
    std::uint64_t seed = 0;
    double lambda = -1.0;         // < 0: cross-validated
    double eta = kEtaAuto;
    int cv_folds = 5;
    int lambda_grid = 100;
    int eta_grid = 20;
};

// Undersmoothed CLIME level for de-sparsification. The bias the correction
// leaves behind is (I - Omega Sigma)(delta_hat - delta), bounded by the
// constraint radius times an l1 error, and it is not reflected in the band
// width; the prediction-optimal cross-validated eta leaves too much of it.
// A deliberately small, theory-shaped radius keeps the bias negligible
// while the (self-calibrating) band width absorbs the extra variance.
inline double undersmoothed_eta(long n_used, long p) {
    return 0.25 * std::sqrt(std::log(static_cast<double>(std::max(n_used, p))));
}

namespace detail {

// clime with the auto rule: escalate the radius until every row is feasible
inline PrecisionEstimate clime_escalating(const MatrixXd& gram, long n_used, double eta) {
    const double eta_cap = std::sqrt(static_cast<double>(n_used));
    for (;;) {
        try {
            return clime(gram, n_used, eta);
        } catch (const numeric_failure&) {
            if (eta >= eta_cap) throw;
            eta = std::min(eta_cap, 1.5 * eta);
        }
    }
}

}  // namespace detail

inline std::vector<ConfidenceBand> infer_all(const RegressionDataset& data,
                                             const std::vector<long>& change_points,
                                             double alpha, const InferOptions& opt) {
    data.validate();
    if (change_points.empty()) return {};
    for (size_t j = 0; j < change_points.size(); ++j) {
        const long prev = j == 0 ? 0 : change_points[j - 1];
        if (!(prev < change_points[j] && change_points[j] < data.n()))
            throw invalid_input("infer_all: change points must be strictly increasing in (0, n)");
    }

    SplitData sp;
    std::vector<long> cps_scaled = change_points;
    const RegressionDataset* est_side = &data;   // delta_hat, Omega side
    const RegressionDataset* plug_side = &data;  // plug-ins, Gamma, bootstrap side
    long scale_n = data.n();
    if (opt.split) {
        sp = split_even_odd(data);
        est_side = &sp.even;
        plug_side = &sp.odd;
        scale_n = sp.n0;
        for (auto& c : cps_scaled) c /= 2;  // original time theta -> half-sample index
        for (size_t j = 0; j < cps_scaled.size(); ++j) {
            const long prev = j == 0 ? 0 : cps_scaled[j - 1];
            if (!(prev < cps_scaled[j] && cps_scaled[j] < scale_n))
                throw invalid_input("infer_all: change points collapse under splitting");
        }
    }

    // anchors: Eq-style isolation in split mode, full neighbouring segments otherwise
    std::vector<AnchorInterval> anchors;
    if (opt.split) {
        anchors = anchor_intervals(cps_scaled, scale_n);
    } else {
        for (size_t j = 0; j < cps_scaled.size(); ++j) {
            AnchorInterval ai;
            ai.j = static_cast<int>(j) + 1;
            ai.a = j == 0 ? 0 : cps_scaled[j - 1];
            ai.b = j + 1 == cps_scaled.size() ? scale_n : cps_scaled[j + 1];
            ai.theta_hat = cps_scaled[j];
            ai.delta_hat = std::min(ai.theta_hat - ai.a, ai.b - ai.theta_hat);
            anchors.push_back(ai);
        }
    }

    // split mode: one CLIME on the whole estimation half, shared across changes
    MatrixXd shared_omega;
    double shared_eta = 0.0;
    if (opt.split) {
        const MatrixXd gram =
            est_side->X.transpose() * est_side->X / static_cast<double>(scale_n);
        shared_eta = opt.eta >= 0.0 ? opt.eta
                                    : cv_eta(est_side->X, opt.cv_folds, opt.eta_grid);
        shared_omega = clime(gram, scale_n, shared_eta).omega;
    }

    std::vector<ConfidenceBand> bands(change_points.size());
    for (size_t j = 0; j < change_points.size(); ++j) {
        const AnchorInterval& ai = anchors[j];
        try {
            const double lambda =
                opt.lambda >= 0.0
                    ? opt.lambda
                    : cv_lambda(*est_side, ai.a, ai.theta_hat, ai.b, DiffMethod::Lope,
                                opt.lambda_grid, opt.cv_folds);
            const DiffEstimate dhat = estimate_at_anchor(*est_side, ai, DiffMethod::Lope, lambda);

            double eta = shared_eta;
            MatrixXd omega;
            if (opt.split) {
                omega = shared_omega;
            } else {
                const MatrixXd seg = data.X.middleRows(ai.a, ai.b - ai.a);
                eta = opt.eta >= 0.0 ? opt.eta : cv_eta(seg, opt.cv_folds, opt.eta_grid);
                const MatrixXd gram = seg.transpose() * seg / static_cast<double>(ai.b - ai.a);
                omega = clime(gram, ai.b - ai.a, eta).omega;
            }

            const auto plug = detail::local_stats(*plug_side, ai.a, ai.theta_hat, ai.b);
            const double loc = location_factor(ai.a, ai.theta_hat, ai.b);
            const DesparsifiedEstimate dtilde =
                desparsify(dhat.delta, omega, plug.sigma, plug.d, loc, opt.split);

            const std::uint64_t band_seed = derive_seed(opt.seed, 0x62616e64ULL, j);
            ConfidenceBand band;
            if (opt.method == CiMethod::GaussianLimit) {
                const NoiseCovariance noise =
                    gamma_hat(*plug_side, ai.a, ai.theta_hat, ai.b, dhat.delta, opt.eps);
                band = gaussian_ci(dtilde.delta_tilde, omega, noise, loc, alpha, opt.B,
                                   band_seed);
            } else {
                band = bootstrap_ci(*plug_side, ai.a, ai.theta_hat, ai.b, dhat.delta,
                                    dtilde.delta_tilde, omega, alpha, opt.B, band_seed);
            }
            band.change_index = static_cast<int>(j) + 1;
            band.theta = ai.theta_hat;
            band.a = ai.a;
            band.b = ai.b;
            band.lambda_used = lambda;
            band.eta_used = eta;
            bands[j] = std::move(band);
        } catch (const std::exception& err) {
            throw numeric_failure("inference at change " + std::to_string(j + 1) + ": " +
                                  err.what());
        }
    }
    return bands;
}

}  // namespace covscan
