#pragma once

// Data model and O(p)-per-query interval statistics on precomputed
// partial sums. Intervals are half-open (a, b] in 0-based row indices:
// the interval covers rows a..b-1 of X (observations a+1..b in 1-based
// time), matching the convention used throughout the detection and
// estimation code.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "covscan/errors.hpp"

namespace covscan {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

// Gaussian-consistency constant for the MAD scale estimate.
inline constexpr double kMadConstant = 1.4826;

struct RegressionDataset {
    MatrixXd X;  // n x p, row t = regressors of observation t+1
    VectorXd y;  // length n

    Index n() const { return X.rows(); }
    Index p() const { return X.cols(); }

    void validate() const {
        if (X.rows() < 2) throw invalid_input("dataset: need n >= 2 observations");
        if (X.cols() < 1) throw invalid_input("dataset: need p >= 1 regressors");
        if (y.size() != X.rows())
            throw invalid_input("dataset: y length does not match X rows");
        if (!X.allFinite() || !y.allFinite())
            throw invalid_input("dataset: non-finite entries");
    }
};

// Cumulative sums of x_t * y_t. Column t holds S[t] = sum_{u<=t} x_u y_u,
// so S has n+1 columns with S[0] = 0 and interval means cost O(p).
struct CrossProductSums {
    MatrixXd S;  // p x (n+1)

    Index n() const { return S.cols() - 1; }
    Index p() const { return S.rows(); }
};

inline CrossProductSums build_cross_sums(const RegressionDataset& data) {
    data.validate();
    const Index n = data.n(), p = data.p();
    CrossProductSums out;
    out.S.resize(p, n + 1);
    out.S.col(0).setZero();
    for (Index t = 0; t < n; ++t)
        out.S.col(t + 1) = out.S.col(t) + data.X.row(t).transpose() * data.y(t);
    return out;
}

struct IntervalMean {
    VectorXd gamma_hat;  // (b-a)^{-1} sum_{t=a+1..b} x_t y_t
    Index a = 0, b = 0;
};

inline IntervalMean interval_mean(const CrossProductSums& sums, Index a, Index b) {
    if (!(0 <= a && a < b && b <= sums.n()))
        throw invalid_input("interval_mean: require 0 <= a < b <= n");
    IntervalMean out;
    out.a = a;
    out.b = b;
    out.gamma_hat = (sums.S.col(b) - sums.S.col(a)) / static_cast<double>(b - a);
    return out;
}

struct IntervalGram {
    MatrixXd sigma_hat;  // (e-s)^{-1} sum_{t=s+1..e} x_t x_t^T
    Index s = 0, e = 0;
};

inline IntervalGram interval_gram(const RegressionDataset& data, Index s, Index e) {
    if (!(0 <= s && s < e && e <= data.n()))
        throw invalid_input("interval_gram: require 0 <= s < e <= n");
    IntervalGram out;
    out.s = s;
    out.e = e;
    const auto block = data.X.middleRows(s, e - s);
    out.sigma_hat.noalias() = block.transpose() * block / static_cast<double>(e - s);
    out.sigma_hat = 0.5 * (out.sigma_hat + out.sigma_hat.transpose()).eval();
    return out;
}

inline double median_of(std::vector<double> v) {
    if (v.empty()) throw invalid_input("median: empty sample");
    std::sort(v.begin(), v.end());
    const size_t m = v.size() / 2;
    return v.size() % 2 == 1 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

// Divides column i of X by 1.4826 * MAD of the lag-1 differenced product
// series {(Y_{t+1} X_{i,t+1} - Y_t X_{i,t}) / sqrt(2)}. Zero-MAD columns
// are left unscaled and their scale reported as 1.
inline std::pair<RegressionDataset, VectorXd> mad_standardize(const RegressionDataset& data) {
    data.validate();
    const Index n = data.n(), p = data.p();
    VectorXd scales(p);
    RegressionDataset out{data.X, data.y};
    std::vector<double> diffs(static_cast<size_t>(n - 1));
    const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
    for (Index i = 0; i < p; ++i) {
        for (Index t = 0; t + 1 < n; ++t)
            diffs[static_cast<size_t>(t)] =
                (data.y(t + 1) * data.X(t + 1, i) - data.y(t) * data.X(t, i)) * inv_sqrt2;
        const double med = median_of(diffs);
        std::vector<double> devs(diffs.size());
        for (size_t t = 0; t < diffs.size(); ++t) devs[t] = std::fabs(diffs[t] - med);
        const double mad = kMadConstant * median_of(devs);
        const double s = mad > 0.0 ? mad : 1.0;
        scales(i) = s;
        if (s != 1.0) out.X.col(i) /= s;
    }
    return {std::move(out), std::move(scales)};
}

}  // namespace covscan
