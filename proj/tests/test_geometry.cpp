#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "fracperc/errors.hpp"
#include "fracperc/geometry.hpp"

using namespace fracperc;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

AffinePlane line(std::initializer_list<double> dir, std::initializer_list<double> point) {
    VectorXd u = Eigen::Map<const VectorXd>(dir.begin(), static_cast<Eigen::Index>(dir.size()));
    VectorXd o = Eigen::Map<const VectorXd>(point.begin(), static_cast<Eigen::Index>(point.size()));
    return AffinePlane(u.transpose(), o);
}

PolynomialMap sphere(std::vector<double> c, double r) {
    Expr e = Expr::constant(-r * r);
    for (std::size_t a = 0; a < c.size(); ++a) e = e + sqr(Expr::variable(static_cast<int>(a)) - Expr::constant(c[a]));
    return PolynomialMap(static_cast<int>(c.size()), std::vector<Expr>{e});
}

}  // namespace

TEST_CASE("principal angles") {
    auto e1 = line({1, 0}, {0, 0});
    auto e2 = line({0, 1}, {0, 0});
    auto diag = line({1, 1}, {0.3, 0.1});
    CHECK(principal_angle(e1, e2) == doctest::Approx(std::numbers::pi / 2));
    CHECK(principal_angle(e1, e1) == 0.0);
    CHECK(principal_angle(diag, e1) == doctest::Approx(std::numbers::pi / 4));
    CHECK(principal_angle(e1, diag) == doctest::Approx(std::numbers::pi / 4));
    // convention for an empty complement
    AffinePlane zero(MatrixXd(0, 2), VectorXd::Zero(2));
    CHECK(principal_angle(e1, zero) == 1.0);
    // small angles keep relative accuracy
    auto tilted = line({1, 1e-9}, {0, 0});
    CHECK(principal_angle(tilted, e1) == doctest::Approx(0.0).epsilon(1e-6));
    CHECK(principal_angles(tilted, e1)[0] == doctest::Approx(1e-9).epsilon(1e-6));
}

TEST_CASE("plane text round trip and metric") {
    MatrixXd dirs(2, 3);
    dirs << 1, 1, 0, 0, 1, 2;
    VectorXd o(3);
    o << 0.2, 0.4, 0.1;
    AffinePlane v(dirs, o);
    auto w = parse_plane(format_plane(v));
    CHECK(plane_distance(v, w) < 1e-15);
    CHECK_THROWS(parse_plane("2 0 0 0; 1 0 0"));
    MatrixXd bad(2, 2);
    bad << 1, 1, 2, 2;
    CHECK_THROWS_AS(AffinePlane(bad, VectorXd::Zero(2)), std::invalid_argument);
}

TEST_CASE("exact plane kernels") {
    CHECK(plane_cube_measure(line({1, 1}, {0, 0}), Box::unit(2)).value == doctest::Approx(std::sqrt(2.0)).epsilon(1e-14));
    CHECK(plane_cube_measure(line({1, 0}, {0, 0.5}), Box::unit(2)).value == 1.0);
    VectorXd n = VectorXd::Ones(3);
    auto hex = AffinePlane::hyperplane(n, 1.5);
    CHECK(std::fabs(plane_cube_measure(hex, Box::unit(3)).value - 3 * std::sqrt(3.0) / 4) < 1e-9);
    // half-open faces: {x2 = 0.5} belongs to the upper row of cubes only
    auto mid = line({1, 0}, {0, 0.5});
    CHECK(plane_cube_measure(mid, DyadicCube{1, {0, 0}}).value == 0.0);
    CHECK(plane_cube_measure(mid, DyadicCube{1, {0, 1}}).value == 0.5);
    VectorXd e2 = VectorXd::Unit(3, 1);
    auto face = AffinePlane::hyperplane(e2, 0.5);
    CHECK(plane_cube_measure(face, DyadicCube{1, {0, 0, 0}}).value == 0.0);
    CHECK(plane_cube_measure(face, DyadicCube{1, {0, 1, 0}}).value == 0.25);
    CHECK_THROWS(plane_cube_measure(AffinePlane(MatrixXd(0, 2), VectorXd::Zero(2)), Box::unit(2)));
}

TEST_CASE("kernel additivity over dyadic grids") {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> g;
    std::uniform_real_distribution<double> u;
    for (int trial = 0; trial < 20; ++trial) {
        for (int M : {2, 3, 4}) {
            for (int k : {1, M - 1}) {
                MatrixXd dirs(k, M);
                for (int r = 0; r < k; ++r)
                    for (int a = 0; a < M; ++a) dirs(r, a) = g(rng);
                VectorXd o(M);
                for (int a = 0; a < M; ++a) o[a] = u(rng);
                AffinePlane v(dirs, o);
                const double whole = plane_cube_measure(v, Box::unit(M)).value;
                const int n = M == 4 ? 3 : 4;
                double sum = 0.0;
                const std::uint32_t side = 1U << n;
                std::vector<std::uint32_t> idx(M, 0);
                for (std::uint64_t c = 0; c < (std::uint64_t{1} << (n * M)); ++c) {
                    std::uint64_t t = c;
                    for (int a = 0; a < M; ++a) {
                        idx[a] = static_cast<std::uint32_t>(t % side);
                        t /= side;
                    }
                    sum += plane_cube_measure(v, DyadicCube{n, idx}).value;
                }
                CHECK(std::fabs(sum - whole) < 1e-9);
            }
        }
    }
}

TEST_CASE("sampled kernel for middle dimensions") {
    // 2-plane spanned by e1, e2 in R^4 at x3 = x4 = 0.5: unit square
    MatrixXd dirs = MatrixXd::Zero(2, 4);
    dirs(0, 0) = 1;
    dirs(1, 1) = 1;
    VectorXd o = VectorXd::Constant(4, 0.5);
    auto m = plane_cube_measure(AffinePlane(dirs, o), Box::unit(4));
    CHECK(!m.exact);
    CHECK(std::fabs(m.value - 1.0) <= 3 * m.std_error + 1e-3);
}

TEST_CASE("variety measures") {
    auto s = sphere({0.5, 0.5, 0.5}, 0.4);
    auto vm = variety_cube_measure(s, Box::unit(3));
    const double area = 4 * std::numbers::pi * 0.16;
    CHECK(std::fabs(vm.value - area) / area < 0.02);
    CHECK(std::fabs(vm.subdivision - area) / area < 0.02);
    CHECK(std::fabs(vm.value - vm.subdivision) / area < 0.05);
    auto c = sphere({0.5, 0.5}, 0.25);
    auto cm = variety_cube_measure(c, Box::unit(2));
    CHECK(std::fabs(cm.value - std::numbers::pi / 2) / (std::numbers::pi / 2) < 0.02);
    CHECK(std::fabs(cm.subdivision - std::numbers::pi / 2) < 1e-3);
    // empty zero set
    Expr e = sqr(Expr::variable(0)) + sqr(Expr::variable(1)) + Expr::constant(1.0);
    PolynomialMap none(2, std::vector<Expr>{e});
    CHECK(variety_cube_measure(none, Box::unit(2)).value == 0.0);
    // singular zero set
    Expr x1sq = sqr(Expr::variable(0) - Expr::constant(0.5));
    PolynomialMap singular(2, std::vector<Expr>{x1sq});
    CHECK_THROWS_AS(variety_cube_measure(singular, Box::unit(2)), SingularityError);
}

TEST_CASE("variety cells are additive") {
    auto c = sphere({0.5, 0.5}, 0.25);
    VarietyCells cells(c, 7);
    CHECK(std::fabs(cells.total() - std::numbers::pi / 2) < 1e-3);
    double sum = 0.0;
    for (std::uint32_t i = 0; i < 4; ++i)
        for (std::uint32_t j = 0; j < 4; ++j) sum += cells.measure(DyadicCube{2, {i, j}});
    CHECK(std::fabs(sum - cells.total()) < 1e-12);
}

TEST_CASE("tangents") {
    Expr d = sqr(Expr::variable(0) - Expr::variable(2)) + sqr(Expr::variable(1) - Expr::variable(3)) - Expr::constant(0.25);
    PolynomialMap P(4, std::vector<Expr>{d});
    std::vector<double> x{0.8, 0.5, 0.5, 0.1};
    auto t = variety_tangent(P, x);
    CHECK(t.regular);
    REQUIRE(t.plane);
    CHECK(t.plane->dim() == 3);
    Expr sq = sqr(Expr::variable(0));
    PolynomialMap Q(1, std::vector<Expr>{sq});
    std::vector<double> zero{0.0};
    CHECK(!variety_tangent(Q, zero).regular);
    // affine map: kernel of the linear part
    Expr aff = Expr::variable(0) + 2.0 * Expr::variable(1) - Expr::constant(0.3);
    PolynomialMap A(2, std::vector<Expr>{aff});
    std::vector<double> y{0.1, 0.9};
    auto ta = variety_tangent(A, y);
    REQUIRE(ta.plane);
    VectorXd dir = ta.plane->basis().row(0).transpose();
    CHECK(std::fabs(dir[0] + 2 * dir[1]) < 1e-12);
}

TEST_CASE("transversality") {
    // V_T with T = (1, 2), d = 1, m = 3
    MatrixXd vt(2, 3);
    vt << 1, 1, 1, 1, 2, 0;
    std::vector<AffinePlane> planes{AffinePlane::linear(vt)};
    auto rep = transversality_check(planes, 3, 1, 0.05);
    CHECK(rep.pass);
    CHECK(rep.min_angle > 0.05);
    // a plane containing e_1 fails
    MatrixXd ve(1, 2);
    ve << 1, 0;
    std::vector<AffinePlane> bad{AffinePlane::linear(ve)};
    auto r2 = transversality_check(bad, 2, 1, 0.05);
    CHECK(!r2.pass);
    CHECK(r2.min_angle == 0.0);
    // the diagonal line in R^m meets every coordinate plane at a positive
    // angle; the smallest is against the hyperplanes {x_j = 0}
    for (int m = 2; m <= 4; ++m) {
        MatrixXd diag = MatrixXd::Ones(1, m);
        std::vector<AffinePlane> dl{AffinePlane::linear(diag)};
        auto r3 = transversality_check(dl, m, 1, 0.0);
        CHECK(r3.min_angle == doctest::Approx(std::asin(1.0 / std::sqrt(m))).epsilon(1e-9));
    }
    // gradient criterion for the distance polynomial
    Expr d = sqr(Expr::variable(0) - Expr::variable(2)) + sqr(Expr::variable(1) - Expr::variable(3)) - Expr::constant(0.25);
    PolynomialMap P(4, std::vector<Expr>{d});
    std::vector<double> a{0.8, 0.5, 0.5, 0.1};
    CHECK(gradient_transversality(P, a, 2, 2).value());
    std::vector<double> axis{0.5, 0.5, 0.5, 0.0};  // x - y parallel to e_2
    CHECK(!gradient_transversality(P, axis, 2, 2).value());
}
