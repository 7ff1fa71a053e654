#pragma once

// CLIME estimation of the precision matrix: row i solves
//
//   min |m|_1  s.t.  |Sigma_hat m - e_i|_inf <= eta / sqrt(n_used),
//
// the p rows independently (and in parallel), assembled without
// symmetrisation. Each row is the same sign-split l1 program as CLOM and
// shares its dual-simplex solver; sweeping a descending eta grid reuses
// the basis between solves.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "covscan/dataset.hpp"
#include "covscan/lp.hpp"
#include "covscan/parallel.hpp"

namespace covscan {

struct PrecisionEstimate {
    MatrixXd omega;  // p x p, possibly asymmetric
    double eta = 0.0;
    long n_used = 0;
    double feasibility_slack = 0.0;  // max over rows of |Sigma m - e_i|_inf - eta/sqrt(n)
};

namespace detail {

// one CLIME row against an arbitrary target vector
inline VectorXd clime_row(DualSimplex& lp, const VectorXd& target, double tau,
                          int row_label) {
    LpResult sol = lp.solve(l1_rhs(target, tau));
    if (sol.infeasible) {
        const int coord = sol.infeasible_row >= 0
                              ? sol.infeasible_row % static_cast<int>(target.size())
                              : 0;
        throw numeric_failure("clime: row " + std::to_string(row_label) +
                              " infeasible (coordinate " + std::to_string(coord + 1) + ")");
    }
    return l1_recover(sol.x);
}

}  // namespace detail

inline PrecisionEstimate clime(const MatrixXd& gram, long n_used, double eta) {
    const Index p = gram.rows();
    if (gram.cols() != p) throw invalid_input("clime: gram must be square");
    if (n_used < 1) throw invalid_input("clime: n_used >= 1 required");
    if (eta < 0.0) throw invalid_input("clime: eta >= 0 required");
    const double tau = eta / std::sqrt(static_cast<double>(n_used));
    PrecisionEstimate est;
    est.omega.resize(p, p);
    est.eta = eta;
    est.n_used = n_used;
    const MatrixXd A = l1_constraint_matrix(gram);
    std::vector<double> slacks(static_cast<size_t>(p), 0.0);
    std::exception_ptr row_error;
    std::mutex error_mutex;
    parallel_for(p, [&](std::ptrdiff_t i) {
        try {
            DualSimplex lp(A, VectorXd::Ones(2 * p));
            const VectorXd row =
                detail::clime_row(lp, VectorXd::Unit(p, i), tau, static_cast<int>(i) + 1);
            est.omega.row(i) = row.transpose();
            slacks[static_cast<size_t>(i)] =
                (gram * row - VectorXd::Unit(p, i)).cwiseAbs().maxCoeff() - tau;
        } catch (...) {
            std::lock_guard<std::mutex> lock(error_mutex);
            if (!row_error) row_error = std::current_exception();
        }
    });
    if (row_error) std::rethrow_exception(row_error);
    est.feasibility_slack = *std::max_element(slacks.begin(), slacks.end());
    return est;
}

// Cross-validated eta: interleaved row folds within the segment, loss
// |Omega_hat Sigma_test - I|_inf averaged over folds, log grid from
// eta_max = sqrt(n_seg) (where Omega = 0 becomes feasible) down to 1e-3
// of it. Infeasible (fold, eta) pairs score +inf. Ties prefer larger eta.
inline double cv_eta(const MatrixXd& x_segment, int folds, int grid_size = 20) {
    const Index m = x_segment.rows(), p = x_segment.cols();
    if (p < 1) throw invalid_input("cv_eta: empty segment");
    if (folds < 2 || folds > m) throw invalid_input("cv_eta: need 2 <= folds <= rows");
    if (m < 2 * folds && folds != m)
        throw invalid_input("cv_eta: segment shorter than 2*folds");
    if (grid_size < 1) throw invalid_input("cv_eta: grid_size >= 1 required");

    const double eta_max = std::sqrt(static_cast<double>(m));
    std::vector<double> grid(static_cast<size_t>(grid_size));
    if (grid_size == 1) {
        grid[0] = eta_max;
    } else {
        const double hi = std::log(eta_max), lo = std::log(1e-3 * eta_max);
        for (int g = 0; g < grid_size; ++g)
            grid[static_cast<size_t>(g)] =
                std::exp(hi + (lo - hi) * g / static_cast<double>(grid_size - 1));
    }

    std::vector<double> loss(grid.size(), 0.0);
    for (int f = 0; f < folds; ++f) {
        MatrixXd sig_train = MatrixXd::Zero(p, p), sig_test = MatrixXd::Zero(p, p);
        long n_train = 0, n_test = 0;
        for (Index t = 0; t < m; ++t) {
            const auto xt = x_segment.row(t).transpose();
            if (t % folds == f) {
                sig_test.noalias() += xt * xt.transpose();
                ++n_test;
            } else {
                sig_train.noalias() += xt * xt.transpose();
                ++n_train;
            }
        }
        if (n_train == 0 || n_test == 0) throw invalid_input("cv_eta: empty fold");
        sig_train /= static_cast<double>(n_train);
        sig_test /= static_cast<double>(n_test);

        const MatrixXd A = l1_constraint_matrix(sig_train);
        // omega rows for every eta on this fold; row-major task split
        std::vector<MatrixXd> omegas(grid.size(), MatrixXd::Zero(p, p));
        std::vector<char> feasible(grid.size(), 1);
        std::mutex flag_mutex;
        parallel_for(p, [&](std::ptrdiff_t i) {
            DualSimplex lp(A, VectorXd::Ones(2 * p));
            for (size_t g = 0; g < grid.size(); ++g) {
                const double tau = grid[g] / std::sqrt(static_cast<double>(n_train));
                try {
                    omegas[g].row(i) = detail::clime_row(lp, VectorXd::Unit(p, i), tau,
                                                         static_cast<int>(i) + 1)
                                           .transpose();
                } catch (const numeric_failure&) {
                    std::lock_guard<std::mutex> lock(flag_mutex);
                    for (size_t gg = g; gg < grid.size(); ++gg) feasible[gg] = 0;
                    break;  // smaller eta stays infeasible
                }
            }
        });
        for (size_t g = 0; g < grid.size(); ++g) {
            if (!feasible[g]) {
                loss[g] = std::numeric_limits<double>::infinity();
                continue;
            }
            loss[g] += (omegas[g] * sig_test - MatrixXd::Identity(p, p))
                           .cwiseAbs()
                           .maxCoeff();
        }
    }
    size_t best = 0;
    for (size_t g = 1; g < grid.size(); ++g)
        if (loss[g] < loss[best]) best = g;  // descending grid: ties keep larger eta
    if (!std::isfinite(loss[best]))
        throw numeric_failure("cv_eta: every grid value infeasible");
    return grid[best];
}

}  // namespace covscan
