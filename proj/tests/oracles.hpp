#pragma once
// Brute-force references for the configuration detector, shared by the unit
// and acceptance tests.

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "fracperc/patterns.hpp"
#include "fracperc/random.hpp"

namespace oracles {

using fracperc::CubeCode;
using fracperc::ConfigDescriptor;
using fracperc::KeyedStream;
using fracperc::decode;
using fracperc::encode;

inline std::vector<CubeCode> full_grid(int d, int n) {
    std::vector<CubeCode> out(std::size_t{1} << (d * n));
    for (std::size_t c = 0; c < out.size(); ++c) out[c] = c;
    return out;
}

inline std::vector<CubeCode> codes_1d(std::vector<std::uint32_t> idx, int n) {
    std::vector<CubeCode> out;
    for (auto i : idx) out.push_back(encode(std::span<const std::uint32_t>(&i, 1), n));
    std::sort(out.begin(), out.end());
    return out;
}

inline std::vector<CubeCode> random_subset(int d, int n, double keep, std::uint64_t key) {
    KeyedStream s(key);
    std::vector<CubeCode> out;
    for (CubeCode c : full_grid(d, n))
        if (s.uniform() < keep) out.push_back(c);
    return out;
}

inline std::vector<double> centers(const std::vector<CubeCode>& tuple, int d, int n) {
    std::vector<double> x;
    for (CubeCode c : tuple)
        for (auto i : decode(c, d, n)) x.push_back((i + 0.5) * std::ldexp(1.0, -n));
    return x;
}

// Calls f on every ordered tuple of m distinct entries.
template <class F>
inline bool any_tuple(const std::vector<CubeCode>& cubes, int m, bool distinct, F&& f) {
    std::vector<std::size_t> pos(m, 0);
    const std::size_t N = cubes.size();
    if (N == 0) return false;
    for (;;) {
        bool ok = true;
        if (distinct)
            for (int j = 0; j < m && ok; ++j)
                for (int k = j + 1; k < m && ok; ++k) ok = pos[j] != pos[k];
        if (ok) {
            std::vector<CubeCode> t(m);
            for (int j = 0; j < m; ++j) t[j] = cubes[pos[j]];
            if (f(t)) return true;
        }
        int j = m - 1;
        while (j >= 0 && ++pos[j] == N) pos[j--] = 0;
        if (j < 0) return false;
    }
}

// Homothetic oracle in absolute coordinates: the feasible scale set is an
// interval whose left end is the floor or a pairwise breakpoint.
inline bool homothetic_oracle(const std::vector<CubeCode>& cubes, int n, const ConfigDescriptor& desc) {
    const int d = desc.d, m = desc.m;
    const double tol = std::sqrt(double(d)) * std::ldexp(1.0, -n);
    double smin = std::numeric_limits<double>::infinity();
    for (int j = 0; j < m; ++j)
        for (int k = j + 1; k < m; ++k) {
            double s2 = 0;
            for (int i = 0; i < d; ++i) s2 += std::pow(desc.points[j * d + i] - desc.points[k * d + i], 2);
            smin = std::min(smin, std::sqrt(s2));
        }
    const double floor_a = tol / smin;
    return any_tuple(cubes, m, true, [&](const std::vector<CubeCode>& t) {
        const auto c = centers(t, d, n);
        std::vector<double> cand{floor_a};
        for (int j = 0; j < m; ++j)
            for (int k = 0; k < m; ++k)
                for (int i = 0; i < d; ++i) {
                    const double ds = desc.points[j * d + i] - desc.points[k * d + i];
                    if (ds != 0) cand.push_back((c[j * d + i] - c[k * d + i] - 2 * tol) / ds);
                }
        for (double a : cand) {
            if (a < floor_a * (1 - 1e-12)) continue;
            a = std::max(a, floor_a);
            bool ok = true;
            for (int i = 0; i < d && ok; ++i) {
                double lo = -1e300, hi = 1e300;
                for (int j = 0; j < m; ++j) {
                    lo = std::max(lo, c[j * d + i] - tol - a * desc.points[j * d + i]);
                    hi = std::min(hi, c[j * d + i] + tol - a * desc.points[j * d + i]);
                }
                ok = lo <= hi + 1e-12;
            }
            if (ok) return true;
        }
        return false;
    });
}

inline bool distance_oracle(const std::vector<CubeCode>& cubes, int d, int n, double lambda) {
    const double tol = std::sqrt(double(d)) * std::ldexp(1.0, -n);
    return any_tuple(cubes, 2, true, [&](const std::vector<CubeCode>& t) {
        const auto c = centers(t, d, n);
        double lo = 0, hi = 0;
        for (int i = 0; i < d; ++i) {
            const double g = std::abs(c[d + i] - c[i]);
            lo += std::pow(std::max(0.0, g - 2 * tol), 2);
            hi += std::pow(g + 2 * tol, 2);
        }
        return lo <= lambda * lambda && lambda * lambda <= hi;
    });
}

inline bool translate_oracle(const std::vector<CubeCode>& cubes, int n, const ConfigDescriptor& desc) {
    const int d = desc.d, m = desc.m;
    const double tol = std::sqrt(double(d)) * std::ldexp(1.0, -n);
    return any_tuple(cubes, m, false, [&](const std::vector<CubeCode>& t) {
        const auto c = centers(t, d, n);
        for (int i = 0; i < d; ++i) {
            double lo = 1e300, hi = -1e300;
            for (int j = 0; j < m; ++j) {
                lo = std::min(lo, c[j * d + i] - desc.points[j * d + i]);
                hi = std::max(hi, c[j * d + i] - desc.points[j * d + i]);
            }
            if (hi - lo > 2 * tol + 1e-12) return false;
        }
        return true;
    });
}

// d = 1 volume: x1 - x2 = v.
inline bool volume1_oracle(const std::vector<CubeCode>& cubes, int n, double v) {
    const double tol = std::ldexp(1.0, -n);
    return any_tuple(cubes, 2, true, [&](const std::vector<CubeCode>& t) {
        const auto c = centers(t, 1, n);
        return std::abs(c[0] - c[1] - v) <= 2 * tol;
    });
}

inline std::vector<CubeCode> halved(const std::vector<CubeCode>& cubes, int d, int n) {
    std::vector<CubeCode> out;
    for (CubeCode c : cubes) out.push_back(encode(decode(c, d, n), n + 1));
    std::sort(out.begin(), out.end());
    return out;
}


// d = 2 volume: the signed area is affine in each coordinate, so its range
// over a product of boxes is spanned by the box vertices.
inline bool volume2_oracle(const std::vector<CubeCode>& cubes, int n, double v) {
    const double tol = std::sqrt(2.0) * std::ldexp(1.0, -n);
    return any_tuple(cubes, 3, true, [&](const std::vector<CubeCode>& t) {
        const auto c = centers(t, 2, n);
        double lo = INFINITY, hi = -INFINITY;
        for (unsigned mask = 0; mask < 64; ++mask) {
            double x[6];
            for (int k = 0; k < 6; ++k) x[k] = c[k] + ((mask >> k & 1U) ? tol : -tol);
            const double det = (x[2] - x[0]) * (x[5] - x[1]) - (x[4] - x[0]) * (x[3] - x[1]);
            lo = std::min(lo, det);
            hi = std::max(hi, det);
        }
        return lo <= 2 * v && 2 * v <= hi;
    });
}

}  // namespace oracles
