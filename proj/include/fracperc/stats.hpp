#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace fracperc::stats {

// Mean and second moment accumulated around the first observation so that a
// constant sample has exactly zero variance.
class Moments {
public:
    void add(double x);
    void merge(const Moments& other);

    std::size_t count() const { return n_; }
    double mean() const;
    double second_moment() const;  // E[x^2]
    double variance() const;       // unbiased sample variance
    double std_error() const;      // of the mean

private:
    std::size_t n_ = 0;
    double shift_ = 0.0;
    double sum_ = 0.0;   // of x - shift
    double sum2_ = 0.0;  // of (x - shift)^2
};

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
    double width() const { return hi - lo; }
};

// Wilson score interval for a binomial proportion at normal quantile z.
Interval wilson(std::size_t successes, std::size_t trials, double z = 1.959963984540054);

// Pearson chi-square goodness of fit; returns the upper-tail p-value.
// Cells with expected count below `min_expected` are pooled into their neighbour.
struct ChiSquareResult {
    double statistic = 0.0;
    int dof = 0;
    double p_value = 1.0;
};
ChiSquareResult chi_square_gof(std::span<const std::size_t> observed, std::span<const double> probabilities,
                               double min_expected = 5.0);

// Spearman rank correlation with a one-sided p-value for positive association
// (exact permutation distribution for n <= 9, t approximation beyond).
struct SpearmanResult {
    double rho = 0.0;
    double p_increasing = 1.0;
};
SpearmanResult spearman(std::span<const double> x, std::span<const double> y);

struct LinearFit {
    double slope = 0.0;
    double intercept = 0.0;
};
LinearFit least_squares(std::span<const double> x, std::span<const double> y);

double normal_upper_tail(double z);

}  // namespace fracperc::stats
