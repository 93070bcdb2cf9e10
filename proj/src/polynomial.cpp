#include "fracperc/polynomial.hpp"

#include <cmath>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace fracperc {

Polynomial Polynomial::constant(int vars, double c) {
    Polynomial p(vars);
    p.add_term(Exponents(vars, 0), c);
    return p;
}

Polynomial Polynomial::variable(int vars, int i) {
    if (i < 0 || i >= vars) throw std::out_of_range("variable index out of range");
    Polynomial p(vars);
    Exponents e(vars, 0);
    e[i] = 1;
    p.add_term(e, 1.0);
    return p;
}

int Polynomial::degree() const {
    int deg = 0;
    for (const auto& [e, c] : terms_) {
        int t = 0;
        for (int k : e) t += k;
        deg = std::max(deg, t);
    }
    return deg;
}

void Polynomial::add_term(const Exponents& e, double c) {
    if (static_cast<int>(e.size()) != vars_) throw std::invalid_argument("exponent length does not match variable count");
    if (c == 0.0) return;
    auto [it, inserted] = terms_.try_emplace(e, c);
    if (!inserted) {
        it->second += c;
        if (it->second == 0.0) terms_.erase(it);
    }
}

namespace {

double monomial(const Polynomial::Exponents& e, std::span<const double> x) {
    double v = 1.0;
    for (std::size_t j = 0; j < e.size(); ++j)
        for (int k = 0; k < e[j]; ++k) v *= x[j];
    return v;
}

}  // namespace

double Polynomial::evaluate(std::span<const double> x) const {
    double sum = 0.0;
    for (const auto& [e, c] : terms_) sum += c * monomial(e, x);
    return sum;
}

double Polynomial::magnitude(std::span<const double> x) const {
    double sum = 0.0;
    for (const auto& [e, c] : terms_) sum += std::fabs(c * monomial(e, x));
    return sum;
}

Interval Polynomial::enclose(std::span<const Interval> box) const {
    Interval sum = Interval::point(0.0);
    for (const auto& [e, c] : terms_) {
        Interval t = Interval::point(c);
        for (std::size_t j = 0; j < e.size(); ++j)
            if (e[j] > 0) t = t * pow(box[j], e[j]);
        sum = sum + t;
    }
    return sum;
}

Polynomial Polynomial::derivative(int i) const {
    Polynomial d(vars_);
    for (const auto& [e, c] : terms_) {
        if (e[i] == 0) continue;
        Exponents f = e;
        f[i] -= 1;
        d.add_term(f, c * e[i]);
    }
    return d;
}

Polynomial& Polynomial::operator+=(const Polynomial& o) {
    if (vars_ == 0) vars_ = o.vars_;
    for (const auto& [e, c] : o.terms_) add_term(e, c);
    return *this;
}

Polynomial& Polynomial::operator-=(const Polynomial& o) {
    if (vars_ == 0) vars_ = o.vars_;
    for (const auto& [e, c] : o.terms_) add_term(e, -c);
    return *this;
}

Polynomial& Polynomial::operator*=(double c) {
    if (c == 0.0) {
        terms_.clear();
        return *this;
    }
    for (auto& [e, v] : terms_) v *= c;
    return *this;
}

Polynomial operator*(const Polynomial& a, const Polynomial& b) {
    Polynomial r(std::max(a.vars_, b.vars_));
    for (const auto& [ea, ca] : a.terms_)
        for (const auto& [eb, cb] : b.terms_) {
            Polynomial::Exponents e(ea.size());
            for (std::size_t j = 0; j < e.size(); ++j) e[j] = ea[j] + eb[j];
            r.add_term(e, ca * cb);
        }
    return r;
}

// --- Expr

Expr Expr::constant(double c) {
    Expr e;
    e.nodes_.push_back({Op::constant, -1, -1, c, -1});
    return e;
}

Expr Expr::variable(int i) {
    Expr e;
    e.nodes_.push_back({Op::variable, -1, -1, 0.0, i});
    return e;
}

Expr Expr::binary(Op op, const Expr& a, const Expr& b) {
    Expr e;
    e.nodes_.reserve(a.nodes_.size() + b.nodes_.size() + 1);
    e.nodes_ = a.nodes_;
    const int off = static_cast<int>(a.nodes_.size());
    for (Node n : b.nodes_) {
        if (n.a >= 0) n.a += off;
        if (n.b >= 0) n.b += off;
        e.nodes_.push_back(n);
    }
    e.nodes_.push_back({op, off - 1, static_cast<int>(e.nodes_.size()) - 1, 0.0, -1});
    return e;
}

Expr operator+(const Expr& a, const Expr& b) { return Expr::binary(Expr::Op::add, a, b); }
Expr operator-(const Expr& a, const Expr& b) { return Expr::binary(Expr::Op::sub, a, b); }
Expr operator*(const Expr& a, const Expr& b) { return Expr::binary(Expr::Op::mul, a, b); }
Expr operator*(double c, const Expr& a) { return Expr::constant(c) * a; }

Expr sqr(const Expr& a) {
    Expr e = a;
    e.nodes_.push_back({Expr::Op::sqr, static_cast<int>(a.nodes_.size()) - 1, -1, 0.0, -1});
    return e;
}

namespace {

template <typename T, typename Leaf, typename Sqr>
T run_program(const auto& nodes, auto constant_op, auto variable_op, Leaf leaf, Sqr square) {
    std::vector<T> v(nodes.size());
    for (std::size_t k = 0; k < nodes.size(); ++k) {
        const auto& n = nodes[k];
        if (n.op == constant_op) v[k] = leaf(n.value, -1);
        else if (n.op == variable_op) v[k] = leaf(0.0, n.var);
        else v[k] = square(n.op, n.a >= 0 ? v[n.a] : T{}, n.b >= 0 ? v[n.b] : T{});
    }
    return v.back();
}

}  // namespace

double Expr::evaluate(std::span<const double> x) const {
    return run_program<double>(
        nodes_, Op::constant, Op::variable, [&](double c, int i) { return i < 0 ? c : x[i]; },
        [](Op op, double a, double b) {
            switch (op) {
                case Op::add: return a + b;
                case Op::sub: return a - b;
                case Op::mul: return a * b;
                default: return a * a;
            }
        });
}

Interval Expr::enclose(std::span<const Interval> box) const {
    return run_program<Interval>(
        nodes_, Op::constant, Op::variable,
        [&](double c, int i) { return i < 0 ? Interval::point(c) : box[i]; },
        [](Op op, Interval a, Interval b) {
            switch (op) {
                case Op::add: return a + b;
                case Op::sub: return a - b;
                case Op::mul: return a * b;
                default: return sqr(a);
            }
        });
}

Polynomial Expr::expand(int vars) const {
    return run_program<Polynomial>(
        nodes_, Op::constant, Op::variable,
        [&](double c, int i) { return i < 0 ? Polynomial::constant(vars, c) : Polynomial::variable(vars, i); },
        [](Op op, const Polynomial& a, const Polynomial& b) {
            switch (op) {
                case Op::add: return a + b;
                case Op::sub: return a - b;
                case Op::mul: return a * b;
                default: return a * a;
            }
        });
}

// --- PolynomialMap

namespace {

Expr monomial_program(const Polynomial& p) {
    Expr sum = Expr::constant(0.0);
    for (const auto& [e, c] : p.terms()) {
        Expr t = Expr::constant(c);
        for (std::size_t j = 0; j < e.size(); ++j) {
            if (e[j] == 0) continue;
            // x^k by repeated squaring keeps even powers nonnegative under intervals
            Expr base = Expr::variable(static_cast<int>(j));
            Expr power;
            bool have = false;
            for (int k = e[j]; k > 0; k >>= 1) {
                if (k & 1) {
                    power = have ? power * base : base;
                    have = true;
                }
                if (k > 1) base = sqr(base);
            }
            t = t * power;
        }
        sum = sum + t;
    }
    return sum;
}

}  // namespace

PolynomialMap::PolynomialMap(int ambient, std::vector<Polynomial> components)
    : ambient_(ambient), components_(std::move(components)) {
    if (ambient_ < 1) throw std::invalid_argument("polynomial map needs at least one variable");
    for (auto& c : components_) {
        if (c.vars() == 0) c = Polynomial(ambient_);
        if (c.vars() != ambient_) throw std::invalid_argument("component variable count mismatch");
        programs_.push_back(monomial_program(c));
    }
    partials_.resize(components_.size());
    for (std::size_t i = 0; i < components_.size(); ++i)
        for (int j = 0; j < ambient_; ++j) partials_[i].push_back(components_[i].derivative(j));
}

PolynomialMap::PolynomialMap(int ambient, std::vector<Expr> components) : ambient_(ambient) {
    if (ambient_ < 1) throw std::invalid_argument("polynomial map needs at least one variable");
    for (auto& e : components) components_.push_back(e.expand(ambient_));
    programs_ = std::move(components);
    partials_.resize(components_.size());
    for (std::size_t i = 0; i < components_.size(); ++i)
        for (int j = 0; j < ambient_; ++j) partials_[i].push_back(components_[i].derivative(j));
}

int PolynomialMap::degree() const {
    int d = 0;
    for (const auto& c : components_) d = std::max(d, c.degree());
    return d;
}

Eigen::VectorXd PolynomialMap::evaluate(std::span<const double> x) const {
    Eigen::VectorXd v(codomain());
    for (int i = 0; i < codomain(); ++i) v[i] = programs_[i].evaluate(x);
    return v;
}

Eigen::VectorXd PolynomialMap::magnitude(std::span<const double> x) const {
    Eigen::VectorXd v(codomain());
    for (int i = 0; i < codomain(); ++i) v[i] = components_[i].magnitude(x);
    return v;
}

Eigen::MatrixXd PolynomialMap::jacobian(std::span<const double> x) const {
    Eigen::MatrixXd J(codomain(), ambient_);
    for (int i = 0; i < codomain(); ++i)
        for (int j = 0; j < ambient_; ++j) J(i, j) = partials_[i][j].evaluate(x);
    return J;
}

std::vector<Interval> PolynomialMap::enclose(std::span<const Interval> box) const {
    std::vector<Interval> r;
    r.reserve(programs_.size());
    for (const auto& p : programs_) r.push_back(p.enclose(box));
    return r;
}

Interval PolynomialMap::enclose_partial(int i, int j, std::span<const Interval> box) const {
    return partials_[i][j].enclose(box);
}

double coefficient_distance(const PolynomialMap& a, const PolynomialMap& b) {
    if (a.ambient() != b.ambient() || a.codomain() != b.codomain())
        throw std::invalid_argument("coefficient distance needs maps of equal shape");
    double sum = 0.0;
    for (int i = 0; i < a.codomain(); ++i) {
        Polynomial diff = a.components()[i] - b.components()[i];
        for (const auto& [e, c] : diff.terms()) sum += c * c;
    }
    return std::sqrt(sum);
}

void write_polynomial(std::ostream& out, const PolynomialMap& p) {
    std::ostringstream line;
    line << std::setprecision(17);
    for (int i = 0; i < p.codomain(); ++i)
        for (const auto& [e, c] : p.components()[i].terms()) {
            line << i << ' ';
            for (std::size_t j = 0; j < e.size(); ++j) line << (j ? "," : "") << e[j];
            line << ' ' << c << '\n';
        }
    out << line.str();
}

PolynomialMap read_polynomial(std::istream& in, int ambient) {
    struct Term {
        int component;
        Polynomial::Exponents e;
        double c;
    };
    std::vector<Term> terms;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        std::istringstream ls(line);
        Term t;
        std::string multi;
        if (!(ls >> t.component)) continue;
        if (!(ls >> multi >> t.c) || t.component < 0)
            throw std::invalid_argument("polynomial line " + std::to_string(lineno) + ": expected 'component e1,...,eM coefficient'");
        std::istringstream ms(multi);
        for (std::string tok; std::getline(ms, tok, ',');) {
            std::size_t used = 0;
            int k = std::stoi(tok, &used);
            if (used != tok.size() || k < 0) throw std::invalid_argument("polynomial line " + std::to_string(lineno) + ": bad exponent");
            t.e.push_back(k);
        }
        if (ambient < 0) ambient = static_cast<int>(t.e.size());
        if (static_cast<int>(t.e.size()) != ambient)
            throw std::invalid_argument("polynomial line " + std::to_string(lineno) + ": multi-index length mismatch");
        terms.push_back(std::move(t));
    }
    if (ambient < 1) throw std::invalid_argument("polynomial text has no terms");
    int q = 0;
    for (const auto& t : terms) q = std::max(q, t.component + 1);
    std::vector<Polynomial> comps(q, Polynomial(ambient));
    for (const auto& t : terms) comps[t.component].add_term(t.e, t.c);
    return PolynomialMap(ambient, std::move(comps));
}

}  // namespace fracperc
