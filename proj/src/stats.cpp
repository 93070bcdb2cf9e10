#include "fracperc/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/students_t.hpp>

namespace fracperc::stats {

void Moments::add(double x) {
    if (n_ == 0) shift_ = x;
    const double y = x - shift_;
    sum_ += y;
    sum2_ += y * y;
    ++n_;
}

void Moments::merge(const Moments& other) {
    if (other.n_ == 0) return;
    if (n_ == 0) {
        *this = other;
        return;
    }
    // Re-express the other accumulator around our shift.
    const double delta = other.shift_ - shift_;
    const auto m = static_cast<double>(other.n_);
    sum2_ += other.sum2_ + 2.0 * delta * other.sum_ + m * delta * delta;
    sum_ += other.sum_ + m * delta;
    n_ += other.n_;
}

double Moments::mean() const { return n_ == 0 ? 0.0 : shift_ + sum_ / static_cast<double>(n_); }

double Moments::second_moment() const {
    if (n_ == 0) return 0.0;
    const double mu = mean();
    const auto n = static_cast<double>(n_);
    const double centered = std::max(0.0, (sum2_ - sum_ * sum_ / n) / n);
    return mu * mu + centered;
}

double Moments::variance() const {
    if (n_ < 2) return 0.0;
    const auto n = static_cast<double>(n_);
    return std::max(0.0, (sum2_ - sum_ * sum_ / n) / (n - 1.0));
}

double Moments::std_error() const { return n_ < 2 ? 0.0 : std::sqrt(variance() / static_cast<double>(n_)); }

Interval wilson(std::size_t successes, std::size_t trials, double z) {
    if (trials == 0) return {0.0, 1.0};
    const auto n = static_cast<double>(trials);
    const double phat = static_cast<double>(successes) / n;
    const double z2 = z * z;
    const double denom = 1.0 + z2 / n;
    const double center = (phat + z2 / (2.0 * n)) / denom;
    const double half = z * std::sqrt(phat * (1.0 - phat) / n + z2 / (4.0 * n * n)) / denom;
    return {std::max(0.0, center - half), std::min(1.0, center + half)};
}

ChiSquareResult chi_square_gof(std::span<const std::size_t> observed, std::span<const double> probabilities,
                               double min_expected) {
    if (observed.size() != probabilities.size() || observed.empty())
        throw std::invalid_argument("chi-square: mismatched cells");
    const double total = static_cast<double>(std::accumulate(observed.begin(), observed.end(), std::size_t{0}));
    std::vector<double> obs, expd;
    double acc_o = 0.0, acc_e = 0.0;
    for (std::size_t i = 0; i < observed.size(); ++i) {
        acc_o += static_cast<double>(observed[i]);
        acc_e += probabilities[i] * total;
        if (acc_e >= min_expected) {
            obs.push_back(acc_o);
            expd.push_back(acc_e);
            acc_o = acc_e = 0.0;
        }
    }
    if ((acc_o > 0.0 || acc_e > 0.0) && !obs.empty()) {
        obs.back() += acc_o;
        expd.back() += acc_e;
    }
    ChiSquareResult r;
    r.dof = static_cast<int>(obs.size()) - 1;
    for (std::size_t i = 0; i < obs.size(); ++i) {
        const double diff = obs[i] - expd[i];
        r.statistic += diff * diff / expd[i];
    }
    if (r.dof < 1) return r;
    boost::math::chi_squared dist(r.dof);
    r.p_value = boost::math::cdf(boost::math::complement(dist, r.statistic));
    return r;
}

namespace {

std::vector<double> ranks(std::span<const double> v) {
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
        const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
        i = j + 1;
    }
    return r;
}

double pearson(std::span<const double> a, std::span<const double> b) {
    const auto n = static_cast<double>(a.size());
    const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
    const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    if (saa == 0.0 || sbb == 0.0) return 0.0;
    return sab / std::sqrt(saa * sbb);
}

}  // namespace

SpearmanResult spearman(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 3) throw std::invalid_argument("spearman: need >= 3 paired values");
    const auto rx = ranks(x);
    const auto ry = ranks(y);
    SpearmanResult r;
    r.rho = pearson(rx, ry);
    const std::size_t n = x.size();
    if (n <= 9) {
        std::vector<double> perm = ry;
        std::sort(perm.begin(), perm.end());
        std::size_t at_least = 0, total = 0;
        do {
            ++total;
            if (pearson(rx, perm) >= r.rho - 1e-12) ++at_least;
        } while (std::next_permutation(perm.begin(), perm.end()));
        r.p_increasing = static_cast<double>(at_least) / static_cast<double>(total);
    } else {
        const double df = static_cast<double>(n) - 2.0;
        const double rho = std::clamp(r.rho, -0.999999999, 0.999999999);
        const double t = rho * std::sqrt(df / (1.0 - rho * rho));
        boost::math::students_t dist(df);
        r.p_increasing = boost::math::cdf(boost::math::complement(dist, t));
    }
    return r;
}

LinearFit least_squares(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("least squares: need >= 2 points");
    const auto n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
    }
    if (sxx == 0.0) throw std::invalid_argument("least squares: degenerate abscissae");
    LinearFit f;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    return f;
}

double normal_upper_tail(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

}  // namespace fracperc::stats
