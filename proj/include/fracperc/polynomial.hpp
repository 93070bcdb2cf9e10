#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fracperc/interval.hpp"

namespace fracperc {

// Sparse real polynomial in a fixed number of variables, stored as a map
// from exponent vectors to coefficients.
class Polynomial {
public:
    using Exponents = std::vector<int>;

    Polynomial() = default;
    explicit Polynomial(int vars) : vars_(vars) {}

    static Polynomial constant(int vars, double c);
    static Polynomial variable(int vars, int i);

    int vars() const { return vars_; }
    int degree() const;
    bool is_zero() const { return terms_.empty(); }
    const std::map<Exponents, double>& terms() const { return terms_; }
    void add_term(const Exponents& e, double c);

    double evaluate(std::span<const double> x) const;
    // sum |c| |x^a|, used to scale residual tolerances
    double magnitude(std::span<const double> x) const;
    Interval enclose(std::span<const Interval> box) const;
    Polynomial derivative(int i) const;

    Polynomial& operator+=(const Polynomial& o);
    Polynomial& operator-=(const Polynomial& o);
    Polynomial& operator*=(double c);
    friend Polynomial operator+(Polynomial a, const Polynomial& b) { return a += b; }
    friend Polynomial operator-(Polynomial a, const Polynomial& b) { return a -= b; }
    friend Polynomial operator*(Polynomial a, double c) { return a *= c; }
    friend Polynomial operator*(double c, Polynomial a) { return a *= c; }
    friend Polynomial operator*(const Polynomial& a, const Polynomial& b);

private:
    int vars_ = 0;
    std::map<Exponents, double> terms_;
};

// Straight-line program over + - * and squaring. Interval evaluation of a
// structured expression such as |x - y|^2 is far tighter than evaluating its
// expanded monomials, and stays monotone under inclusion.
class Expr {
public:
    Expr() = default;
    static Expr constant(double c);
    static Expr variable(int i);

    friend Expr operator+(const Expr& a, const Expr& b);
    friend Expr operator-(const Expr& a, const Expr& b);
    friend Expr operator*(const Expr& a, const Expr& b);
    friend Expr operator*(double c, const Expr& a);
    friend Expr sqr(const Expr& a);

    double evaluate(std::span<const double> x) const;
    Interval enclose(std::span<const Interval> box) const;
    Polynomial expand(int vars) const;
    bool empty() const { return nodes_.empty(); }

private:
    enum class Op : std::uint8_t { constant, variable, add, sub, mul, sqr };
    struct Node {
        Op op;
        int a = -1;
        int b = -1;
        double value = 0.0;
        int var = -1;
    };
    static Expr binary(Op op, const Expr& a, const Expr& b);
    std::vector<Node> nodes_;  // topological order, result is the last node
};

// P : R^M -> R^q with coefficient storage, evaluation and Jacobian.
class PolynomialMap {
public:
    PolynomialMap() = default;
    PolynomialMap(int ambient, std::vector<Polynomial> components);
    // Components given as expressions; the coefficient form is their expansion.
    PolynomialMap(int ambient, std::vector<Expr> components);

    int ambient() const { return ambient_; }
    int codomain() const { return static_cast<int>(components_.size()); }
    int degree() const;
    const std::vector<Polynomial>& components() const { return components_; }

    Eigen::VectorXd evaluate(std::span<const double> x) const;
    Eigen::VectorXd magnitude(std::span<const double> x) const;
    Eigen::MatrixXd jacobian(std::span<const double> x) const;  // q x M
    std::vector<Interval> enclose(std::span<const Interval> box) const;
    // Enclosure of dP_i/dx_j over the box.
    Interval enclose_partial(int i, int j, std::span<const Interval> box) const;

private:
    int ambient_ = 0;
    std::vector<Polynomial> components_;
    std::vector<Expr> programs_;
    std::vector<std::vector<Polynomial>> partials_;  // [i][j]
};

// Euclidean distance between coefficient vectors.
double coefficient_distance(const PolynomialMap& a, const PolynomialMap& b);

// Text form: one term per line, "component e_1,...,e_M coefficient".
void write_polynomial(std::ostream& out, const PolynomialMap& p);
PolynomialMap read_polynomial(std::istream& in, int ambient = -1);

}  // namespace fracperc
