#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "covscan/diff.hpp"
#include "covscan/rng.hpp"
#include "covscan/sim.hpp"
#include "oracles.hpp"

using namespace covscan;
using Catch::Approx;

namespace {

// planted two-segment regression data for estimation tests
RegressionDataset planted(Rng& rng, long n, long p, long change, const VectorXd& beta0,
                          const VectorXd& beta1, double noise = 1.0) {
    RegressionDataset d;
    d.X = oracle::random_matrix(rng, n, p);
    d.y.resize(n);
    for (long t = 0; t < n; ++t) {
        const VectorXd& b = t < change ? beta0 : beta1;
        d.y(t) = d.X.row(t).dot(b) + noise * rng.normal();
    }
    return d;
}

}  // namespace

TEST_CASE("anchor intervals: hand arithmetic", "[diff]") {
    const auto single = anchor_intervals({75}, 300);
    REQUIRE(single.size() == 1);
    REQUIRE(single[0].delta_hat == 50);
    REQUIRE(single[0].a == 25);
    REQUIRE(single[0].b == 125);

    const auto multi = anchor_intervals({100, 200, 300}, 400);
    REQUIRE(multi[0].delta_hat == 67);
    REQUIRE(multi[0].a == 33);
    REQUIRE(multi[0].b == 167);

    // centred single change: symmetric formula instantiation
    const long n = 240, theta = 120;
    const auto centred = anchor_intervals({theta}, n);
    const long expect =
        std::min(theta - theta / 3, (theta + 2 * n + 2) / 3 - theta);
    REQUIRE(centred[0].delta_hat == expect);
    REQUIRE(centred[0].a == theta - expect);
    REQUIRE(centred[0].b == theta + expect);

    REQUIRE_THROWS_AS(anchor_intervals({0}, 10), invalid_input);
    REQUIRE_THROWS_AS(anchor_intervals({5, 5}, 10), invalid_input);
}

TEST_CASE("lope: penalty domination and scalar closed form", "[diff]") {
    Rng rng(211);
    const auto data = oracle::random_dataset(rng, 40, 3);
    const double lmax = lambda_max(data, 0, 20, 40);
    const auto zero = lope(data, 0, 20, 40, lmax * 1.000001);
    REQUIRE(zero.delta.isZero());
    const auto at_lmax = lope(data, 0, 20, 40, lmax);
    REQUIRE(at_lmax.delta.isZero());

    // p = 1, lambda = 0: delta = (gamma_right - gamma_left) / sigma
    const auto d1 = oracle::random_dataset(rng, 30, 1);
    const auto fit = lope(d1, 0, 11, 30, 0.0);
    const auto st = detail::local_stats(d1, 0, 11, 30);
    REQUIRE(fit.delta(0) == Approx(st.d(0) / st.sigma(0, 0)).epsilon(1e-8));
}

TEST_CASE("lope: matches sign-pattern oracle on small instances", "[diff]") {
    Rng rng(223);
    for (int rep = 0; rep < 20; ++rep) {
        const auto data = oracle::random_dataset(rng, 30, 3);
        const long k = 10 + static_cast<long>(rng.uniform_below(10));
        const double lambda = 0.02 + 0.3 * rng.uniform01();
        const auto st = detail::local_stats(data, 0, k, 30);
        const double leff = lambda / location_factor(0, k, 30);
        const auto fit = lope(data, 0, k, 30, lambda);
        const auto [oa, oobj] = oracle::sign_pattern_lasso(st.sigma, st.d, leff);
        REQUIRE(oracle::lasso_objective(st.sigma, st.d, leff, fit.delta) ==
                Approx(oobj).margin(1e-6));
    }
}

TEST_CASE("lope: KKT certificate on larger instances", "[diff]") {
    Rng rng(227);
    for (const long p : {20L, 80L, 200L}) {
        const auto data = oracle::random_dataset(rng, std::max<long>(60, p / 2), p);
        const long n = data.n();
        const double lambda = 0.5 * lambda_max(data, 0, n / 2, n);
        const auto fit = lope(data, 0, n / 2, n, lambda);
        REQUIRE(fit.converged);
        REQUIRE(fit.kkt_residual <= 1e-6);
    }
}

TEST_CASE("clom: zero solution, scalar soft threshold, oracle", "[diff]") {
    Rng rng(229);
    const auto data = oracle::random_dataset(rng, 40, 3);
    const double lmax = lambda_max(data, 0, 20, 40);
    const auto zero = clom(data, 0, 20, 40, lmax);
    REQUIRE(zero.delta.isZero());

    // p = 1 closed form: sign(d) max(0, |d| - lambda/c) / sigma
    const auto d1 = oracle::random_dataset(rng, 30, 1);
    const auto st = detail::local_stats(d1, 0, 14, 30);
    const double c = location_factor(0, 14, 30);
    for (double lambda : {0.01, 0.1, 0.5}) {
        const auto fit = clom(d1, 0, 14, 30, lambda);
        const double expect =
            (st.d(0) > 0 ? 1.0 : -1.0) *
            std::max(0.0, std::fabs(st.d(0)) - lambda / c) / st.sigma(0, 0);
        REQUIRE(fit.delta(0) == Approx(expect).margin(1e-8));
    }

    for (int rep = 0; rep < 20; ++rep) {
        const auto dd = oracle::random_dataset(rng, 30, 3);
        const long k = 10 + static_cast<long>(rng.uniform_below(10));
        const double lambda = 0.05 + 0.3 * rng.uniform01();
        const auto stats = detail::local_stats(dd, 0, k, 30);
        const double tau = lambda / location_factor(0, k, 30);
        const auto fit = clom(dd, 0, k, 30, lambda);
        const auto [ox, oobj] = oracle::lp_vertex_oracle(
            l1_constraint_matrix(stats.sigma), l1_rhs(stats.d, tau), VectorXd::Ones(6));
        REQUIRE(fit.delta.cwiseAbs().sum() == Approx(oobj).margin(1e-6));
        REQUIRE(fit.kkt_residual >= -1e-8);  // constraint slack nonnegative up to tol
    }
}

TEST_CASE("naive: huge penalty, OLS difference, lope agreement", "[diff]") {
    Rng rng(233);
    const auto data = oracle::random_dataset(rng, 60, 2);
    const auto zero = naive_diff(data, 0, 30, 60, 1e6, 1e6);
    REQUIRE(zero.delta.isZero());

    // p = 1, lambda = 0: OLS slope difference
    const auto d1 = oracle::random_dataset(rng, 50, 1);
    const auto fit = naive_diff(d1, 0, 25, 50, 0.0, 0.0);
    auto ols = [&](long lo, long hi) {
        double sxx = 0.0, sxy = 0.0;
        for (long t = lo; t < hi; ++t) {
            sxx += d1.X(t, 0) * d1.X(t, 0);
            sxy += d1.X(t, 0) * d1.y(t);
        }
        return sxy / sxx;
    };
    REQUIRE(fit.delta(0) == Approx(ols(25, 50) - ols(0, 25)).epsilon(1e-7));

    // identical gram on both sides and lambda = 0: naive equals lope
    RegressionDataset mirrored;
    const long half = 20, p = 3;
    Rng rng2(239);
    const MatrixXd Xh = oracle::random_matrix(rng2, half, p);
    mirrored.X.resize(2 * half, p);
    mirrored.X.topRows(half) = Xh;
    mirrored.X.bottomRows(half) = Xh;
    mirrored.y.resize(2 * half);
    for (long t = 0; t < 2 * half; ++t) mirrored.y(t) = rng2.normal() + (t >= half ? 1.0 : 0.0) * mirrored.X(t, 0);
    const auto nv = naive_diff(mirrored, 0, half, 2 * half, 0.0, 0.0);
    const auto lp = lope(mirrored, 0, half, 2 * half, 0.0);
    REQUIRE((nv.delta - lp.delta).cwiseAbs().maxCoeff() <= 1e-6);
}

TEST_CASE("cv_lambda: degenerate grid, single point, lambda_max property", "[diff]") {
    Rng rng(241);
    const auto data = oracle::random_dataset(rng, 60, 4);
    REQUIRE(cv_lambda(data, 0, 30, 60, DiffMethod::Lope, 1, 5) ==
            Approx(lambda_max(data, 0, 30, 60)));
    RegressionDataset flat;
    flat.X = MatrixXd::Ones(20, 1);
    flat.y = VectorXd::Zero(20);
    REQUIRE_THROWS_AS(cv_lambda(flat, 0, 10, 20, DiffMethod::Lope), numeric_failure);
    REQUIRE_THROWS_AS(cv_lambda(flat, 0, 10, 20, DiffMethod::Lope, 10, 100), invalid_input);
}

TEST_CASE("cv_lambda: no-change data selects heavy shrinkage", "[diff]") {
    // delta = 0 truly: cross-validation should keep the fit at or near zero.
    // Measured rates for plain CV-min at n=200, p=10: exact-zero-ish fits in
    // ~70% of runs, lambda at least a quarter of lambda_max in ~95%, and no
    // fit drifting beyond l2 = 0.5; assert those with margin.
    int exact_zeroish = 0, lambda_large = 0;
    double worst_l2 = 0.0;
    const int reps = 40;
    for (int rep = 0; rep < reps; ++rep) {
        Rng rng(derive_seed(977, 1, static_cast<std::uint64_t>(rep)));
        VectorXd beta = VectorXd::Zero(10);
        for (Eigen::Index i = 0; i < 10; ++i) beta(i) = rng.normal();
        beta /= beta.norm();  // modest common coefficient, no change
        const auto data = planted(rng, 200, 10, 100, beta, beta);
        const double lmax = lambda_max(data, 0, 100, 200);
        const double lambda = cv_lambda(data, 0, 100, 200, DiffMethod::Lope, 100, 5);
        const auto fit = lope(data, 0, 100, 200, lambda);
        if (fit.delta.cwiseAbs().maxCoeff() <= 0.05) ++exact_zeroish;
        if (lambda >= 0.25 * lmax) ++lambda_large;
        worst_l2 = std::max(worst_l2, fit.delta.norm());
    }
    REQUIRE(exact_zeroish >= 24);
    REQUIRE(lambda_large >= 36);
    REQUIRE(worst_l2 <= 0.5);
}

TEST_CASE("lope: error decreases with anchor width", "[diff]") {
    // light version of the scaling property; the calibrated 200-rep check
    // lives in the acceptance suite
    const long p = 40;
    VectorXd delta = VectorXd::Zero(p);
    for (int i = 0; i < 5; ++i) delta(i) = 1.0 / std::sqrt(5.0);
    auto med_err = [&](long half_width) {
        std::vector<double> errs;
        for (int rep = 0; rep < 30; ++rep) {
            Rng rng(derive_seed(1009, static_cast<std::uint64_t>(half_width),
                                static_cast<std::uint64_t>(rep)));
            const auto data =
                planted(rng, 2 * half_width, p, half_width, (-0.5 * delta).eval(),
                        (0.5 * delta).eval());
            const double lambda = 1.2 * std::sqrt(std::log(static_cast<double>(p)));
            const auto fit = lope(data, 0, half_width, 2 * half_width, lambda);
            errs.push_back((fit.delta - delta).norm());
        }
        return median_of(errs);
    };
    REQUIRE(med_err(160) < med_err(80));
}

TEST_CASE("estimate_at_anchor: degenerate anchor refused", "[diff]") {
    Rng rng(251);
    const auto data = oracle::random_dataset(rng, 12, 2);
    AnchorInterval ai;
    ai.j = 1;
    ai.a = 4;
    ai.b = 6;
    ai.theta_hat = 5;
    ai.delta_hat = 1;
    REQUIRE_THROWS_AS(estimate_at_anchor(data, ai, DiffMethod::Lope, 0.1), numeric_failure);
}

TEST_CASE("norm sanity: |v|_1 <= sqrt(p) |v|_2", "[diff]") {
    Rng rng(257);
    for (int rep = 0; rep < 50; ++rep) {
        VectorXd v(16);
        for (Eigen::Index i = 0; i < 16; ++i) v(i) = rng.normal();
        REQUIRE(v.cwiseAbs().sum() <= std::sqrt(16.0) * v.norm() + 1e-12);
    }
}
