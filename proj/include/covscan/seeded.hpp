#pragma once

// Deterministic multiscale interval system: at scale k the spacing is
// r_k = n 2^{-k} and the intervals are (floor((i-1) r_k), ceil((i+1) r_k)]
// for i = 1 .. 2^k - 1, unioned over k = 1 .. ceil(log2 n). Every location
// is covered at every dyadic scale with O(n log n) total length.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "covscan/errors.hpp"

namespace covscan {

struct SeededInterval {
    long a = 0;    // left bound, exclusive
    long b = 0;    // right bound, inclusive
    int level = 0; // scale index k

    long length() const { return b - a; }
    friend bool operator==(const SeededInterval& x, const SeededInterval& y) {
        return x.a == y.a && x.b == y.b;
    }
};

struct IntervalSet {
    std::vector<SeededInterval> intervals;  // dedup'd, sorted by (length, a)
};

inline IntervalSet seeded_intervals(long n) {
    if (n < 1) throw invalid_input("seeded_intervals: n >= 1 required");
    IntervalSet out;
    if (n < 2) return out;
    int kmax = 0;
    while ((1L << kmax) < n) ++kmax;  // kmax = ceil(log2 n), n >= 2
    for (int k = 1; k <= kmax; ++k) {
        const double r = std::ldexp(static_cast<double>(n), -k);  // exact
        const long imax = (1L << k) - 1;                          // ceil(n/r_k) - 1
        for (long i = 1; i <= imax; ++i) {
            long a = static_cast<long>(std::floor((i - 1) * r));
            long b = static_cast<long>(std::ceil((i + 1) * r));
            if (b > n) b = n;  // never triggers (n/r_k is a power of two) but keeps b <= n by construction
            out.intervals.push_back({a, b, k});
        }
    }
    auto order = [](const SeededInterval& x, const SeededInterval& y) {
        if (x.length() != y.length()) return x.length() < y.length();
        if (x.a != y.a) return x.a < y.a;
        return x.level < y.level;
    };
    std::sort(out.intervals.begin(), out.intervals.end(), order);
    out.intervals.erase(std::unique(out.intervals.begin(), out.intervals.end()),
                        out.intervals.end());
    return out;
}

}  // namespace covscan
