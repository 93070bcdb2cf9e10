#include <doctest.h>

#include <cmath>
#include <numbers>

#include "fracperc/intersect.hpp"

using namespace fracperc;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

AffinePlane horizontal(double y) {
    MatrixXd dir(1, 2);
    dir << 1, 0;
    VectorXd o(2);
    o << 0, y;
    return AffinePlane(dir, o);
}

// V_T for T = (t_1, ..., t_{m-1}) with d = 1, through `point`.
AffinePlane homothetic_plane(std::vector<double> t, VectorXd point) {
    const int m = static_cast<int>(t.size()) + 1;
    MatrixXd dirs(2, m);
    dirs.row(0).setOnes();
    for (int j = 0; j < m; ++j) dirs(1, j) = j + 1 < m ? t[j] : 0.0;
    return AffinePlane(dirs, point);
}

ProductMeasureSpec spec_for(int d, double p, int m, std::uint64_t seed) {
    ProductMeasureSpec s;
    s.m = m;
    s.law = make_law(d, p);
    s.variant = Variant::extinction;
    s.seed = seed;
    return s;
}

}  // namespace

TEST_CASE("level zero is the geometric measure") {
    MatrixXd dir(1, 2);
    dir << 1, 1;
    auto diag = Target::plane(AffinePlane::linear(dir));
    auto s = intersection_mass(spec_for(1, 0.7, 2, 3), diag, 0);
    CHECK(s.Y[0] == doctest::Approx(std::sqrt(2.0)).epsilon(1e-14));
}

TEST_CASE("full grids keep the mass") {
    auto t = Target::plane(homothetic_plane({0.5, 0.25}, VectorXd::Constant(3, 0.3)));
    auto s = intersection_mass(spec_for(1, 1.0, 3, 1), t, 5);
    for (int j = 1; j <= 5; ++j) CHECK(std::fabs(s.Y[j] - s.Y[0]) < 1e-12);
}

TEST_CASE("exhaustive level-one moments") {
    // d = 2, m = 1, V = {x_2 = 0.25}: enumerate all 16 level-1 outcomes
    const double p = 0.5;
    auto spec = spec_for(2, p, 1, 0);
    auto target = Target::plane(horizontal(0.25));
    double mean = 0.0, second = 0.0;
    for (unsigned mask = 0; mask < 16; ++mask) {
        std::vector<CubeCode> lv;
        for (unsigned c = 0; c < 4; ++c)
            if (mask >> c & 1U) lv.push_back(c);
        PercolationTree tree(spec.law, Variant::extinction, 0, {{0}, lv});
        auto mu = ProductMeasure::from_trees(spec, {tree});
        const double y = intersection_mass(mu, target, 1).Y[1];
        // oracle: cubes (0,0), (1,0) carry length 1/2 each
        const double oracle = (0.5 * (mask & 1U) + 0.5 * (mask >> 1 & 1U)) / p;
        CHECK(y == doctest::Approx(oracle).epsilon(1e-15));
        const int k = __builtin_popcount(mask);
        const double w = std::pow(p, k) * std::pow(1 - p, 4 - k);
        mean += w * y;
        second += w * y * y;
    }
    CHECK(mean == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(second == doctest::Approx((1 + p) / (2 * p)).epsilon(1e-14));
}

TEST_CASE("pruned traversal equals full enumeration") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        for (int d = 1; d <= 2; ++d) {
            for (int m = 1; m <= 2; ++m) {
                if (m * d < 2) continue;
                auto spec = spec_for(d, 0.7, m, seed);
                auto mu = ProductMeasure::sample(spec, 3);
                MatrixXd dir(1, m * d);
                for (int a = 0; a < m * d; ++a) dir(0, a) = 1.0 + 0.37 * a;
                VectorXd o = VectorXd::Constant(m * d, 0.41);
                std::vector<Target> targets{Target::plane(AffinePlane(dir, o))};
                if (m * d > 2) targets.push_back(Target::plane(AffinePlane::hyperplane(dir.row(0).transpose(), 1.1)));
                for (const auto& t : targets) {
                    auto pruned = intersection_mass(mu, t, 3);
                    auto full = intersection_mass(mu, t, 3, TraversalOptions{false});
                    for (int j = 0; j <= 3; ++j) CHECK(pruned.Y[j] == full.Y[j]);
                    double sum = 0.0;
                    for (const auto& c : level_contributions(mu, t, 3)) sum += c.mass;
                    CHECK(std::fabs(sum - pruned.Y[3]) < 1e-9);
                }
            }
        }
    }
}

TEST_CASE("martingale checks") {
    auto target = Target::plane(homothetic_plane({1.0 / 3.0, 2.0 / 3.0}, VectorXd::Constant(3, 0.5)));
    for (int n : {0, 2}) {
        auto c = martingale_resample_check(spec_for(1, 0.8, 3, 5), target, n, 1000);
        CHECK(c.z <= 4.0);
    }
    auto one = martingale_resample_check(spec_for(1, 1.0, 3, 5), target, 2, 100);
    CHECK(one.std_error == 0.0);
    CHECK(one.z == 0.0);
    CHECK_THROWS(martingale_resample_check(spec_for(1, 0.8, 3, 5), target, 1, 50));
}

TEST_CASE("cartesian power excludes the diagonal") {
    auto spec = spec_for(1, 1.0, 2, 1);
    spec.mode = ProductMode::cartesian_power;
    spec.diagonal_level = 2;
    MatrixXd dir(1, 2);
    dir << 1, 1;
    // the diagonal line lies inside diagonal cubes only
    auto diag = Target::plane(AffinePlane::linear(dir));
    auto s = intersection_mass(spec, diag, 4);
    for (double y : s.Y) CHECK(y == 0.0);
    // {x_2 = 0.3} loses the diagonal level-2 cube [1/4, 1/2)^2
    auto t = Target::plane(horizontal(0.3));
    auto a = intersection_mass(spec, t, 4);
    for (double y : a.Y) CHECK(y == doctest::Approx(0.75).epsilon(1e-12));
    spec.law = make_law(1, 0.8);
    auto c = martingale_resample_check(spec, t, 2, 1000);
    CHECK(c.z <= 4.0);
    CHECK_THROWS(martingale_resample_check(spec, t, 1, 1000));
}

TEST_CASE("weighted mode") {
    auto spec = spec_for(1, 0.9, 2, 8);
    spec.mode = ProductMode::weighted;
    spec.extra_p = 0.8;
    MatrixXd anti(1, 2);
    anti << 1, -0.6;
    auto t = Target::plane(AffinePlane(anti, VectorXd::Constant(2, 0.45)));
    auto c = martingale_resample_check(spec, t, 2, 1000);
    CHECK(c.z <= 4.0);
}

TEST_CASE("variety targets") {
    // circle of radius 1/4 in the square: d = 1, m = 2
    Expr e = sqr(Expr::variable(0) - Expr::constant(0.5)) + sqr(Expr::variable(1) - Expr::constant(0.5)) - Expr::constant(0.0625);
    PolynomialMap circle(2, std::vector<Expr>{e});
    auto t = Target::variety(circle, 7);
    auto full = intersection_mass(spec_for(1, 1.0, 2, 0), t, 6);
    for (double y : full.Y) CHECK(std::fabs(y - std::numbers::pi / 2) < 2e-3);
    auto c = martingale_resample_check(spec_for(1, 0.8, 2, 2), t, 1, 1000);
    CHECK(c.z <= 4.0);
}

TEST_CASE("dependency graph") {
    auto spec = spec_for(1, 0.9, 3, 4);
    auto mu = ProductMeasure::sample(spec, 4);
    auto t = Target::plane(homothetic_plane({0.5, 0.25}, VectorXd::Constant(3, 0.4)));
    auto rep = dependency_graph(mu, t, 4);
    CHECK(rep.vertices > 0);
    auto verts = level_contributions(mu, t, 4);
    for (std::size_t v = 0; v < rep.adjacency.size(); ++v) {
        for (std::size_t u : rep.adjacency[v]) {
            const auto& nb = rep.adjacency[u];
            CHECK(std::binary_search(nb.begin(), nb.end(), v));
            bool shared = false;
            for (auto a : verts[v].factors)
                for (auto b : verts[u].factors) shared = shared || a == b;
            CHECK(shared);
        }
    }
    // removing the neighbours of a vertex isolates it: every other vertex
    // shares no projection with it
    for (std::size_t u = 0; u < verts.size(); ++u) {
        if (u == 0 || std::binary_search(rep.adjacency[0].begin(), rep.adjacency[0].end(), u)) continue;
        for (auto a : verts[0].factors)
            for (auto b : verts[u].factors) CHECK(a != b);
    }
    // single vertex
    auto single = spec_for(1, 1.0, 2, 0);
    MatrixXd dir(1, 2);
    dir << 1, 0.5;
    VectorXd o(2);
    o << 0.1, 0.1;
    auto r1 = dependency_graph(ProductMeasure::sample(single, 0), Target::plane(AffinePlane(dir, o)), 0);
    CHECK(r1.vertices == 1);
    CHECK(r1.max_degree == 0);
}

TEST_CASE("second moment") {
    auto target = Target::plane(horizontal(0.25));
    auto s0 = second_moment_estimate(spec_for(2, 0.5, 1, 1), target, 0, 1000);
    CHECK(s0.ratio == 1.0);
    auto s1 = second_moment_estimate(spec_for(2, 0.5, 1, 1), target, 1, 20000);
    CHECK(std::fabs(s1.ratio - 1.5) < 0.1);
    CHECK(s1.paley_zygmund <= s1.survival + 0.02);
}

TEST_CASE("holder modulus") {
    auto spec = spec_for(1, 1.0, 3, 0);
    auto mu = ProductMeasure::sample(spec, 3);
    std::vector<Target> grid;
    std::vector<AffinePlane> planes;
    for (double t : {0.3, 0.35, 0.4}) {
        planes.push_back(homothetic_plane({t, 0.8}, VectorXd::Constant(3, 0.5)));
        grid.push_back(Target::plane(planes.back()));
    }
    std::vector<std::vector<double>> dist(3, std::vector<double>(3, 0.0));
    for (int i = 0; i < 3; ++i)
        for (int k = 0; k < 3; ++k) dist[i][k] = plane_distance(planes[i], planes[k]);
    std::vector<double> gammas{0.5, 1.0};
    auto h = holder_modulus(mu, grid, dist, 3, gammas);
    CHECK(h.sup_ratio.size() == 2);
    CHECK(std::isfinite(h.sup_ratio[1]));
    auto h0 = holder_modulus(mu, grid, dist, 0, gammas);
    CHECK(h.sup_ratio[1] == doctest::Approx(h0.sup_ratio[1]).epsilon(1e-9));
    std::vector<Target> one{grid[0]};
    std::vector<std::vector<double>> d1{{0.0}};
    CHECK_THROWS(holder_modulus(mu, one, d1, 1, gammas));
}
