#include <doctest.h>

#include <sstream>

#include "fracperc/polynomial.hpp"

using namespace fracperc;

TEST_CASE("polynomial evaluation and jacobian") {
    // |x - y|^2 - 0.25 on R^4
    auto X = [](int i) { return Expr::variable(i); };
    Expr p = sqr(X(0) - X(2)) + sqr(X(1) - X(3)) - Expr::constant(0.25);
    PolynomialMap P(4, std::vector<Expr>{p});
    std::vector<double> pt{0.8, 0.5, 0.5, 0.1};
    CHECK(P.evaluate(pt)[0] == doctest::Approx(0.0).epsilon(1e-14));
    auto J = P.jacobian(pt);
    CHECK(J(0, 0) == doctest::Approx(0.6));
    CHECK(J(0, 3) == doctest::Approx(-0.8));
    CHECK(P.degree() == 2);
    // finite differences
    std::vector<double> x{0.3, 0.7, 0.2, 0.9};
    auto Jx = P.jacobian(x);
    for (int j = 0; j < 4; ++j) {
        auto a = x, b = x;
        a[j] += 1e-6;
        b[j] -= 1e-6;
        double fd = (P.evaluate(a)[0] - P.evaluate(b)[0]) / 2e-6;
        CHECK(fd == doctest::Approx(Jx(0, j)).epsilon(1e-6));
    }
}

TEST_CASE("interval enclosure contains samples") {
    auto X = [](int i) { return Expr::variable(i); };
    Expr p = sqr(X(0)) * X(1) - 3.0 * X(0) + Expr::constant(0.5);
    PolynomialMap P(2, std::vector<Expr>{p});
    std::vector<Interval> box{{-0.5, 0.7}, {0.1, 0.3}};
    auto e = P.enclose(box)[0];
    for (double a = -0.5; a <= 0.7; a += 0.01)
        for (double b = 0.1; b <= 0.3; b += 0.01) {
            std::vector<double> v{a, b};
            CHECK(e.contains(P.evaluate(v)[0]));
            CHECK(P.components()[0].enclose(box).contains(P.evaluate(v)[0]));
        }
}

TEST_CASE("text format round trip") {
    Polynomial a(3);
    a.add_term({2, 0, 0}, 1.0 / 3.0);
    a.add_term({0, 1, 1}, -2.5);
    Polynomial b(3);
    b.add_term({0, 0, 0}, 0.1);
    PolynomialMap P(3, std::vector<Polynomial>{a, b});
    std::stringstream ss;
    write_polynomial(ss, P);
    auto Q = read_polynomial(ss);
    CHECK(Q.codomain() == 2);
    CHECK(coefficient_distance(P, Q) == 0.0);
    std::stringstream bad("0 1,2 x\n");
    CHECK_THROWS(read_polynomial(bad));
}
