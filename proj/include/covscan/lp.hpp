#pragma once

// Dense dual simplex for linear programs of the form
//
//   min c^T x   s.t.  A x <= b,  x >= 0,   with  c >= 0.
//
// With slacks appended ([A I] z = b, z >= 0) the all-slack basis is dual
// feasible whenever c >= 0, so the dual simplex needs no phase 1: it
// starts from the (possibly primal-infeasible) origin and pivots until
// the basis is primal feasible or primal infeasibility is certified.
// The l1-minimisation programs solved here (Dantzig-selector style rows
// and constrained l1 fits) all have c = 1 and are bounded below by 0.
//
// The basis inverse is kept explicitly and updated per pivot; b may be
// re-bound for a warm restart from the current basis (the basis stays
// dual feasible because the costs do not change), which makes sweeps of
// a constraint-radius grid cheap.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "covscan/errors.hpp"

namespace covscan {

struct LpResult {
    Eigen::VectorXd x;          // structural variables, nonbasic entries exactly 0
    double objective = 0.0;
    bool optimal = false;
    bool infeasible = false;
    int infeasible_row = -1;    // dominant constraint row in the certificate
    int pivots = 0;
    double max_violation = 0.0; // max(0, (A x - b)_i) at the returned point
};

class DualSimplex {
  public:
    DualSimplex(Eigen::MatrixXd A, Eigen::VectorXd c)
        : A_(std::move(A)), c_(std::move(c)), m_(A_.rows()), n_(A_.cols()) {
        if (c_.size() != n_) throw invalid_input("lp: c length mismatch");
        if ((c_.array() < 0.0).any())
            throw invalid_input("lp: dual simplex start requires c >= 0");
        reset_basis();
    }

    void reset_basis() {
        basis_.resize(static_cast<size_t>(m_));
        for (Eigen::Index i = 0; i < m_; ++i) basis_[static_cast<size_t>(i)] = n_ + i;
        binv_ = Eigen::MatrixXd::Identity(m_, m_);
        total_pivots_ = 0;
    }

    // Solve with the given right-hand side, warm-starting from the current basis.
    LpResult solve(const Eigen::VectorXd& b) {
        if (b.size() != m_) throw invalid_input("lp: b length mismatch");
        if (!b.allFinite()) throw invalid_input("lp: non-finite b");
        const double feas_tol = 1e-9 * (1.0 + b.cwiseAbs().maxCoeff());
        const double piv_tol = 1e-10;
        const long max_pivots = 200 * static_cast<long>(m_ + n_) + 5000;
        const long bland_after = 20 * static_cast<long>(m_ + n_) + 500;

        Eigen::VectorXd xb = binv_ * b;
        LpResult res;
        long pivots = 0;
        bool bland = false;
        Eigen::RowVectorXd rho(m_), y(m_);
        Eigen::VectorXd w(m_);
        std::vector<char> in_basis(static_cast<size_t>(n_ + m_), 0);
        for (Eigen::Index i = 0; i < m_; ++i) in_basis[static_cast<size_t>(basis_[static_cast<size_t>(i)])] = 1;

        for (;;) {
            // leaving row: most negative basic value (Bland: smallest variable index)
            Eigen::Index r = -1;
            if (!bland) {
                double worst = -feas_tol;
                for (Eigen::Index i = 0; i < m_; ++i)
                    if (xb(i) < worst) {
                        worst = xb(i);
                        r = i;
                    }
            } else {
                Eigen::Index best_var = n_ + m_;
                for (Eigen::Index i = 0; i < m_; ++i)
                    if (xb(i) < -feas_tol && basis_[static_cast<size_t>(i)] < best_var) {
                        best_var = basis_[static_cast<size_t>(i)];
                        r = i;
                    }
            }
            if (r < 0) break;  // primal feasible -> optimal

            rho = binv_.row(r);
            y.setZero();
            for (Eigen::Index i = 0; i < m_; ++i) {
                const Eigen::Index v = basis_[static_cast<size_t>(i)];
                if (v < n_ && c_(v) != 0.0) y += c_(v) * binv_.row(i);
            }

            // entering column: min ratio cbar_j / (-alpha_j) over alpha_j < 0
            Eigen::Index enter = -1;
            double best_ratio = std::numeric_limits<double>::infinity();
            double best_alpha = 0.0;
            for (Eigen::Index j = 0; j < n_ + m_; ++j) {
                if (in_basis[static_cast<size_t>(j)]) continue;
                double alpha, cbar;
                if (j < n_) {
                    alpha = rho * A_.col(j);
                    cbar = c_(j) - y * A_.col(j);
                } else {
                    alpha = rho(j - n_);
                    cbar = -y(j - n_);
                }
                if (alpha >= -piv_tol) continue;
                if (cbar < 0.0) cbar = 0.0;  // numerical guard, dual feasibility holds
                const double ratio = cbar / (-alpha);
                bool take;
                if (bland) {
                    take = ratio < best_ratio - 1e-12 ||
                           (std::fabs(ratio - best_ratio) <= 1e-12 && (enter < 0 || j < enter));
                } else {
                    take = ratio < best_ratio ||
                           (ratio == best_ratio && -alpha > -best_alpha) ||
                           (ratio == best_ratio && alpha == best_alpha && (enter < 0 || j < enter));
                }
                if (enter < 0 || take) {
                    best_ratio = ratio;
                    best_alpha = alpha;
                    enter = j;
                }
            }
            if (enter < 0) {
                // row certificate: y_cert = e_r B^{-1} >= 0 on all columns, value < 0
                Eigen::Index dominant = 0;
                rho.cwiseAbs().maxCoeff(&dominant);
                res.infeasible = true;
                res.infeasible_row = static_cast<int>(dominant);
                res.x = Eigen::VectorXd::Zero(n_);
                res.pivots = static_cast<int>(pivots);
                return res;
            }

            w = (enter < n_) ? (binv_ * A_.col(enter)).eval()
                             : binv_.col(enter - n_).eval();
            const double piv = w(r);
            // eliminate: apply the pivot transformation to binv_ and xb
            binv_.row(r) /= piv;
            xb(r) /= piv;
            for (Eigen::Index i = 0; i < m_; ++i) {
                if (i == r || w(i) == 0.0) continue;
                binv_.row(i) -= w(i) * binv_.row(r);
                xb(i) -= w(i) * xb(r);
            }
            in_basis[static_cast<size_t>(basis_[static_cast<size_t>(r)])] = 0;
            in_basis[static_cast<size_t>(enter)] = 1;
            basis_[static_cast<size_t>(r)] = enter;

            ++pivots;
            ++total_pivots_;
            if (pivots == bland_after) bland = true;
            if (pivots > max_pivots) throw numeric_failure("lp: pivot limit exceeded");
            if (total_pivots_ % 128 == 0) {
                refactorize();
                xb = binv_ * b;
            }
        }

        res.optimal = true;
        res.pivots = static_cast<int>(pivots);
        res.x = Eigen::VectorXd::Zero(n_);
        for (Eigen::Index i = 0; i < m_; ++i) {
            const Eigen::Index v = basis_[static_cast<size_t>(i)];
            if (v < n_) res.x(v) = std::max(0.0, xb(i));
        }
        res.objective = c_.dot(res.x);
        res.max_violation = std::max(0.0, (A_ * res.x - b).maxCoeff());
        return res;
    }

    const Eigen::MatrixXd& A() const { return A_; }

  private:
    void refactorize() {
        Eigen::MatrixXd B(m_, m_);
        for (Eigen::Index i = 0; i < m_; ++i) {
            const Eigen::Index v = basis_[static_cast<size_t>(i)];
            if (v < n_)
                B.col(i) = A_.col(v);
            else
                B.col(i) = Eigen::VectorXd::Unit(m_, v - n_);
        }
        Eigen::PartialPivLU<Eigen::MatrixXd> lu(B);
        binv_ = lu.solve(Eigen::MatrixXd::Identity(m_, m_));
    }

    Eigen::MatrixXd A_;
    Eigen::VectorXd c_;
    Eigen::Index m_ = 0, n_ = 0;
    std::vector<Eigen::Index> basis_;
    Eigen::MatrixXd binv_;
    long total_pivots_ = 0;
};

// Shared builder for the sign-split l1 programs: variables (a+, a-) >= 0,
// constraints +/-(S (a+ - a-) - d) <= tau, i.e.
//   [ S  -S ] [a+]    [ tau + d ]
//   [-S   S ] [a-] <= [ tau - d ].
inline Eigen::MatrixXd l1_constraint_matrix(const Eigen::MatrixXd& S) {
    const Eigen::Index p = S.rows();
    Eigen::MatrixXd A(2 * p, 2 * p);
    A.topLeftCorner(p, p) = S;
    A.topRightCorner(p, p) = -S;
    A.bottomLeftCorner(p, p) = -S;
    A.bottomRightCorner(p, p) = S;
    return A;
}

inline Eigen::VectorXd l1_rhs(const Eigen::VectorXd& d, double tau) {
    const Eigen::Index p = d.size();
    Eigen::VectorXd b(2 * p);
    b.head(p) = Eigen::VectorXd::Constant(p, tau) + d;
    b.tail(p) = Eigen::VectorXd::Constant(p, tau) - d;
    return b;
}

// Recover a = a+ - a- from the stacked solution.
inline Eigen::VectorXd l1_recover(const Eigen::VectorXd& x) {
    const Eigen::Index p = x.size() / 2;
    return x.head(p) - x.tail(p);
}

}  // namespace covscan
