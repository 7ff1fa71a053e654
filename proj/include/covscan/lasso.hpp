#pragma once

// Cyclic coordinate descent for the gram-form lasso
//   min_a  1/2 a^T S a - a^T d + lambda |a|_1
// with S symmetric PSD. The gradient S a - d is maintained incrementally,
// so a sweep costs O(p * nnz-ish) and the solve needs no data matrix.

#include <Eigen/Dense>
#include <cmath>

#include "covscan/errors.hpp"

namespace covscan {

struct GramLassoResult {
    Eigen::VectorXd a;
    double kkt_residual = 0.0;
    bool converged = false;
    int sweeps = 0;
};

inline double soft_threshold(double z, double t) {
    if (z > t) return z - t;
    if (z < -t) return z + t;
    return 0.0;
}

// KKT residual: exact subgradient match on the active set, |grad| <= lambda
// off it (reported as the excess).
inline double gram_lasso_kkt(const Eigen::MatrixXd& S, const Eigen::VectorXd& d,
                             const Eigen::VectorXd& a, double lambda) {
    const Eigen::VectorXd g = S * a - d;
    double worst = 0.0;
    for (Eigen::Index i = 0; i < a.size(); ++i) {
        const double r = a(i) != 0.0 ? std::fabs(g(i) + lambda * (a(i) > 0.0 ? 1.0 : -1.0))
                                     : std::max(0.0, std::fabs(g(i)) - lambda);
        worst = std::max(worst, r);
    }
    return worst;
}

inline GramLassoResult gram_lasso(const Eigen::MatrixXd& S, const Eigen::VectorXd& d,
                                  double lambda, const Eigen::VectorXd* warm = nullptr,
                                  double tol = 1e-8, int max_sweeps = 10000,
                                  double kkt_tol = 1e-7) {
    const Eigen::Index p = S.rows();
    if (S.cols() != p || d.size() != p) throw invalid_input("gram_lasso: shape mismatch");
    if (lambda < 0.0) throw invalid_input("gram_lasso: lambda >= 0 required");
    GramLassoResult res;
    res.a = (warm && warm->size() == p) ? *warm : Eigen::VectorXd::Zero(p);
    Eigen::VectorXd grad = S * res.a - d;  // maintained = S a - d
    bool settled = false;
    int sweeps_done = 0;
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        double max_change = 0.0;
        for (Eigen::Index i = 0; i < p; ++i) {
            const double sii = S(i, i);
            const double old = res.a(i);
            double next;
            if (sii <= 0.0) {
                next = 0.0;  // degenerate coordinate, keep it out of the fit
            } else {
                next = soft_threshold(sii * old - grad(i), lambda) / sii;
            }
            if (next != old) {
                grad.noalias() += S.col(i) * (next - old);
                res.a(i) = next;
                max_change = std::max(max_change, std::fabs(next - old));
            }
        }
        sweeps_done = sweep + 1;
        if (max_change <= tol * (1.0 + res.a.cwiseAbs().maxCoeff())) {
            res.kkt_residual = gram_lasso_kkt(S, d, res.a, lambda);
            if (res.kkt_residual <= kkt_tol || max_change == 0.0) {
                settled = true;
                break;
            }
        }
    }
    res.sweeps = sweeps_done;
    res.kkt_residual = gram_lasso_kkt(S, d, res.a, lambda);
    res.converged = settled || res.kkt_residual <= kkt_tol;
    return res;
}

}  // namespace covscan
