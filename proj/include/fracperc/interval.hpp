#pragma once

#include <algorithm>
#include <cmath>
#include <limits>

namespace fracperc {

// Closed interval with one-ulp outward rounding on every operation, so
// results enclose the exact range and are monotone under inclusion.
struct Interval {
    double lo = 0.0;
    double hi = 0.0;

    static Interval point(double x) { return {x, x}; }
    bool contains(double x) const { return lo <= x && x <= hi; }
    bool contains_zero() const { return lo <= 0.0 && 0.0 <= hi; }
    double width() const { return hi - lo; }
    double mid() const { return 0.5 * (lo + hi); }
    double mag() const { return std::max(std::fabs(lo), std::fabs(hi)); }
};

namespace detail {
inline double down(double x) { return std::nextafter(x, -std::numeric_limits<double>::infinity()); }
inline double up(double x) { return std::nextafter(x, std::numeric_limits<double>::infinity()); }
}  // namespace detail

inline Interval operator+(Interval a, Interval b) { return {detail::down(a.lo + b.lo), detail::up(a.hi + b.hi)}; }
inline Interval operator-(Interval a, Interval b) { return {detail::down(a.lo - b.hi), detail::up(a.hi - b.lo)}; }
inline Interval operator-(Interval a) { return {-a.hi, -a.lo}; }

inline Interval operator*(Interval a, Interval b) {
    const double p1 = a.lo * b.lo, p2 = a.lo * b.hi, p3 = a.hi * b.lo, p4 = a.hi * b.hi;
    return {detail::down(std::min({p1, p2, p3, p4})), detail::up(std::max({p1, p2, p3, p4}))};
}

inline Interval sqr(Interval a) {
    if (a.lo >= 0.0) return {detail::down(a.lo * a.lo), detail::up(a.hi * a.hi)};
    if (a.hi <= 0.0) return {detail::down(a.hi * a.hi), detail::up(a.lo * a.lo)};
    const double m = std::max(-a.lo, a.hi);
    return {0.0, detail::up(m * m)};
}

inline Interval pow(Interval a, int e) {
    if (e == 0) return Interval::point(1.0);
    if (e == 1) return a;
    Interval half = pow(a, e / 2);
    Interval r = sqr(half);
    return (e % 2) ? r * a : r;
}

inline Interval hull(Interval a, Interval b) { return {std::min(a.lo, b.lo), std::max(a.hi, b.hi)}; }

}  // namespace fracperc
