#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "fracperc/errors.hpp"
#include "fracperc/patterns.hpp"
#include "fracperc/random.hpp"
#include "oracles.hpp"

using namespace fracperc;

using namespace oracles;

TEST_CASE("descriptor text round trip and aliases") {
    auto d = ConfigDescriptor::parse("family=distance lambda=0.5 d=2");
    CHECK(d.family == Family::distance);
    CHECK(d.d == 2);
    CHECK(d.m == 2);
    CHECK(d.lambda == 0.5);
    CHECK(ConfigDescriptor::parse(d.to_string()).to_string() == d.to_string());

    auto h = ConfigDescriptor::parse("family=homothetic-mpoint d=1 points=0;1;2");
    CHECK(h.m == 3);
    CHECK(h.scale_invariant());
    auto p = ConfigDescriptor::parse("family=polygon points=0,0;1,0;1,1;0,1");
    CHECK(p.d == 2);
    CHECK(p.m == 4);
    CHECK(ConfigDescriptor::parse(p.to_string()).points == p.points);
    CHECK(ConfigDescriptor::parse("family=simplex-volume d=2 v=0.25").m == 3);
    CHECK(ConfigDescriptor::parse("family=similar-triangle d=2 a=1 b=1").family == Family::triangle);

    CHECK_THROWS_AS(ConfigDescriptor::parse("family=nope"), std::invalid_argument);
    CHECK_THROWS_AS(ConfigDescriptor::parse("lambda=1"), std::invalid_argument);
    CHECK_THROWS_AS(ConfigDescriptor::parse("family=distance lambda=-1"), std::invalid_argument);
    CHECK_THROWS_AS(ConfigDescriptor::parse("family=angle d=1 lambda=0"), std::invalid_argument);
    CHECK_THROWS_AS(ConfigDescriptor::parse("family=homothetic points=0;0"), std::invalid_argument);
    CHECK_THROWS_AS(ConfigDescriptor::parse("family=polygon points=0,0;1,1;2,2"), std::invalid_argument);
    CHECK_THROWS_AS(ConfigDescriptor::parse("family=triangle d=2 a=1 b=3"), std::invalid_argument);
    CHECK_THROWS_AS(ConfigDescriptor::parse("family=distance lambda=1 m=3"), std::invalid_argument);
}

TEST_CASE("scale-invariant flag") {
    CHECK(ConfigDescriptor::homothetic(1, {0, 1}).scale_invariant());
    CHECK(ConfigDescriptor::angle(2, 0).scale_invariant());
    CHECK(ConfigDescriptor::triangle(2, 1, 1).scale_invariant());
    CHECK(ConfigDescriptor::polygon({0, 0, 1, 0, 0, 1}).scale_invariant());
    CHECK_FALSE(ConfigDescriptor::translate(1, {0, 1}).scale_invariant());
    CHECK_FALSE(ConfigDescriptor::distance(2, 0.1).scale_invariant());
    CHECK_FALSE(ConfigDescriptor::volume(2, 0.1).scale_invariant());
    CHECK_FALSE(ConfigDescriptor::isometric({0, 0, 1, 0, 0, 1}).scale_invariant());
}

TEST_CASE("threshold table") {
    auto t = threshold_table(ConfigDescriptor::homothetic(1, {0, 1, 2}));
    CHECK(t.critical_s == doctest::Approx(1.0 / 3));
    CHECK(t.critical_p() == doctest::Approx(std::exp2(1.0 / 3 - 1)));
    CHECK(t.relative_s == doctest::Approx(0.5));
    t = threshold_table(ConfigDescriptor::homothetic(2, {0, 0, 1, 0, 0, 1, 1, 1}));
    CHECK(t.critical_s == doctest::Approx(2 - 3.0 / 4));
    CHECK(t.relative_s == doctest::Approx(2 - 1.0 / 3));
    t = threshold_table(ConfigDescriptor::translate(2, {0, 0, 1, 0, 0, 1}));
    CHECK(t.critical_s == doctest::Approx(2 - 2.0 / 3));
    CHECK(std::isnan(t.relative_s));
    t = threshold_table(ConfigDescriptor::distance(2, 0.3));
    CHECK(t.critical_s == 0.5);
    CHECK(t.relative_s == 1.0);
    CHECK(t.critical_p() == doctest::Approx(std::exp2(-1.5)));
    CHECK_FALSE(threshold_table(ConfigDescriptor::distance(1, 0.3)).applicable);
    t = threshold_table(ConfigDescriptor::volume(3, 0.1));
    CHECK(t.critical_s == doctest::Approx(0.25));
    CHECK(t.relative_s == doctest::Approx(1.0 / 3));
    t = threshold_table(ConfigDescriptor::isometric({0, 0, 1, 0, 0, 1}));
    CHECK(t.critical_s == 1.0);
    CHECK(t.relative_s == 1.5);
    t = threshold_table(ConfigDescriptor::angle(3, 0.2));
    CHECK(t.critical_s == doctest::Approx(1.0 / 3));
    CHECK(t.relative_s == 0.5);
    t = threshold_table(ConfigDescriptor::triangle(2, 1, 1));
    CHECK(t.critical_s == doctest::Approx(2.0 / 3));
    CHECK(t.relative_s == 1.0);
    t = threshold_table(ConfigDescriptor::polygon({0, 0, 1, 0, 1, 1, 0, 1}));
    CHECK(t.critical_s == doctest::Approx(1.0));
    CHECK(t.relative_s == doctest::Approx(2 - 2.0 / 3));
}

TEST_CASE("configuration polynomials") {
    auto dist = configuration_polynomial(ConfigDescriptor::distance(2, 0.5));
    std::vector<double> x{0, 0, 0.3, 0.4};
    CHECK(dist.evaluate(x)[0] == doctest::Approx(0).epsilon(1e-14).scale(1));
    CHECK(dist.codomain() == 1);
    CHECK(dist.degree() == 2);

    auto ang = configuration_polynomial(ConfigDescriptor::angle(2, 0));
    std::vector<double> y{0, 0, 0, 1, 1, 1};
    CHECK(ang.evaluate(y)[0] == doctest::Approx(0));
    CHECK(ang.degree() == 4);

    auto vol = configuration_polynomial(ConfigDescriptor::volume(2, 0.5));
    std::vector<double> z{0, 0, 1, 0, 0, 1};
    CHECK(vol.evaluate(z)[0] == doctest::Approx(0));
    CHECK(vol.degree() == 2);
    // orientation flips the sign
    std::vector<double> zr{0, 0, 0, 1, 1, 0};
    CHECK(vol.evaluate(zr)[0] == doctest::Approx(-2));
    auto vol3 = configuration_polynomial(ConfigDescriptor::volume(3, 1.0 / 6));
    std::vector<double> w{0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 1};
    CHECK(std::abs(vol3.evaluate(w)[0]) < 1e-12 + 2.0);
    CHECK(vol3.degree() == 3);
    // columns (x_j, 1): det for the standard simplex in d = 3 is -1
    CHECK(vol3.evaluate(w)[0] == doctest::Approx(-2.0));

    auto iso = configuration_polynomial(ConfigDescriptor::isometric({0, 0, 1, 0, 0, 2}));
    CHECK(iso.codomain() == 3);
    std::vector<double> r{1, 1, 1, 2, -1, 1};  // rotated copy
    CHECK(iso.evaluate(r).norm() == doctest::Approx(0).scale(1));
    std::vector<double> bad{1, 1, 1, 2, 1, -1};
    CHECK(iso.evaluate(bad).norm() > 0.5);

    auto tri = configuration_polynomial(ConfigDescriptor::triangle(2, 1, 1));
    CHECK(tri.codomain() == 2);
    std::vector<double> eq{0, 0, 1, 0, 0.5, std::sqrt(3.0) / 2};
    CHECK(tri.evaluate(eq).norm() < 1e-12);

    auto poly = configuration_polynomial(ConfigDescriptor::polygon({0, 0, 1, 0, 1, 1, 0, 1}));
    CHECK(poly.codomain() == 4);
    std::vector<double> sq{0.2, 0.2, 0.2, 0.6, -0.2, 0.6, -0.2, 0.2};
    CHECK(poly.evaluate(sq).norm() < 1e-12);

    CHECK_THROWS_AS(configuration_polynomial(ConfigDescriptor::homothetic(1, {0, 1})), std::invalid_argument);
    CHECK_THROWS_AS(configuration_plane(ConfigDescriptor::distance(1, 0.1)), std::invalid_argument);
}

TEST_CASE("configuration planes") {
    auto v = configuration_plane(ConfigDescriptor::homothetic(1, {1, 0}));
    CHECK(v.dim() == 2);
    CHECK(v.ambient() == 2);

    auto h = configuration_plane(ConfigDescriptor::homothetic(2, {0, 0, 1, 0, 0, 1}));
    CHECK(h.dim() == 3);
    Eigen::VectorXd diag(6);
    diag << 0.3, 0.7, 0.3, 0.7, 0.3, 0.7;
    CHECK(h.distance(diag) < 1e-12);
    Eigen::VectorXd copy(6);
    copy << 0.1, 0.1, 0.6, 0.1, 0.1, 0.6;
    CHECK(h.distance(copy) < 1e-12);

    auto t = configuration_plane(ConfigDescriptor::translate(2, {0, 0, 0.25, 0.5}));
    CHECK(t.dim() == 2);
    CHECK(t.ambient() == 4);
    Eigen::VectorXd pt(4);
    pt << 0.1, 0.2, 0.35, 0.7;
    CHECK(t.distance(pt) < 1e-12);
}

TEST_CASE("side conditions") {
    auto a = ConfigDescriptor::angle(2, 0.5);
    std::vector<double> acute{1, 0, 0, 0, 0.5, std::sqrt(3.0) / 2};
    std::vector<double> obtuse{1, 0, 0, 0, -0.5, std::sqrt(3.0) / 2};
    CHECK(satisfies_side_conditions(a, acute));
    CHECK_FALSE(satisfies_side_conditions(a, obtuse));
    auto p = ConfigDescriptor::polygon({0, 0, 1, 0, 1, 1, 0, 1});
    std::vector<double> sq{0, 0, 1, 0, 1, 1, 0, 1};
    std::vector<double> mirrored{0, 0, 1, 0, 1, -1, 0, -1};
    std::vector<double> mixed{0, 0, 1, 0, 1, 1, 0, -1};
    CHECK(satisfies_side_conditions(p, sq));
    CHECK(satisfies_side_conditions(p, mirrored));
    CHECK_FALSE(satisfies_side_conditions(p, mixed));
}

TEST_CASE("detection examples") {
    auto desc = ConfigDescriptor::homothetic(1, {0, 1, 2});
    auto cubes = codes_1d({0, 1, 2}, 2);
    auto res = detect_configuration(cubes, 2, desc);
    REQUIRE(res.present);
    CHECK(res.tolerance == 0.25);
    CHECK(res.witness->params[0] == doctest::Approx(0.25));
    CHECK(res.witness->params[1] == doctest::Approx(0.125));
    CHECK(verify_witness(cubes, 2, desc, {}, *res.witness));

    CHECK_FALSE(detect_configuration(std::vector<CubeCode>{}, 3, desc).present);
    CHECK_FALSE(detect_configuration(codes_1d({0, 1}, 2), 2, desc).present);

    const std::vector<ConfigDescriptor> all{
        ConfigDescriptor::homothetic(2, {0, 0, 1, 0, 0, 1}),
        ConfigDescriptor::translate(2, {0, 0, 0.25, 0.5}),
        ConfigDescriptor::distance(2, 0.6),
        ConfigDescriptor::angle(2, std::cos(1.0)),
        ConfigDescriptor::volume(2, 0.1),
        ConfigDescriptor::isometric({0, 0, 0.3, 0, 0, 0.4}),
        ConfigDescriptor::triangle(2, 1.2, 0.9),
        ConfigDescriptor::polygon({0, 0, 1, 0, 1, 1, 0, 1}),
    };
    const auto grid = full_grid(2, 3);
    for (const auto& d : all) {
        CAPTURE(d.to_string());
        auto r = detect_configuration(grid, 3, d);
        REQUIRE(r.present);
        CHECK(verify_witness(grid, 3, d, {}, *r.witness));
        CHECK_FALSE(detect_configuration(std::vector<CubeCode>{}, 3, d).present);
    }
}

TEST_CASE("detection budget and tolerance checks") {
    auto five = ConfigDescriptor::homothetic(1, {0, 1, 2, 3, 4});
    CHECK_THROWS_AS(detect_configuration(full_grid(1, 9), 9, five), BudgetError);
    DetectionOptions small;
    small.C = 0.5;
    CHECK_THROWS_AS(detect_configuration(full_grid(2, 2), 2, ConfigDescriptor::distance(2, 0.3), small),
                    std::invalid_argument);
    DetectionOptions tiny;
    tiny.max_visits = 3;
    CHECK_THROWS_AS(detect_configuration(full_grid(1, 6), 6, ConfigDescriptor::homothetic(1, {0, 1, 2}), tiny),
                    BudgetError);
}

TEST_CASE("detector equals independent oracles") {
    std::size_t checked = 0, positive = 0;
    for (std::uint64_t k = 0; k < 60; ++k) {
        const int n = 2 + static_cast<int>(k % 3);
        auto sub1 = random_subset(1, n + 1, 0.35, make_key(11, {k}));
        auto sub2 = random_subset(2, n - 1 + (n == 2), 0.3, make_key(12, {k}));
        const int n2 = n - 1 + (n == 2);
        const auto hom1 = ConfigDescriptor::homothetic(1, {0, 1, 3});
        const auto hom2 = ConfigDescriptor::homothetic(2, {0, 0, 1, 0, 0, 1});
        const auto tr1 = ConfigDescriptor::translate(1, {0, 0.3, 0.45});
        const auto tr2 = ConfigDescriptor::translate(2, {0, 0, 0.25, 0.5});
        const auto dist2 = ConfigDescriptor::distance(2, 0.35);
        const auto dist1 = ConfigDescriptor::distance(1, 0.4);
        const auto vol1 = ConfigDescriptor::volume(1, 0.3);

        bool got = detect_configuration(sub1, n + 1, hom1).present;
        CHECK(got == homothetic_oracle(sub1, n + 1, hom1));
        positive += got;
        got = detect_configuration(sub2, n2, hom2).present;
        CHECK(got == homothetic_oracle(sub2, n2, hom2));
        positive += got;
        CHECK(detect_configuration(sub1, n + 1, tr1).present == translate_oracle(sub1, n + 1, tr1));
        CHECK(detect_configuration(sub2, n2, tr2).present == translate_oracle(sub2, n2, tr2));
        CHECK(detect_configuration(sub2, n2, dist2).present == distance_oracle(sub2, 2, n2, 0.35));
        CHECK(detect_configuration(sub1, n + 1, dist1).present == distance_oracle(sub1, 1, n + 1, 0.4));
        CHECK(detect_configuration(sub1, n + 1, vol1).present == volume1_oracle(sub1, n + 1, 0.3));
        checked += 7;
    }
    CHECK(checked == 420);
    for (std::uint64_t k = 0; k < 10; ++k) {
        auto sub = random_subset(2, 2, 0.45, make_key(13, {k}));
        const auto vol2 = ConfigDescriptor::volume(2, 0.2);
        CHECK(detect_configuration(sub, 2, vol2).present == volume2_oracle(sub, 2, 0.2));
    }
    CHECK(positive > 10);
}

TEST_CASE("pruned search equals unpruned enumeration") {
    const std::vector<ConfigDescriptor> fams{
        ConfigDescriptor::angle(2, std::cos(2.0)),
        ConfigDescriptor::volume(2, 0.2),
        ConfigDescriptor::isometric({0, 0, 0.5, 0, 0, 0.25}),
        ConfigDescriptor::triangle(2, 1.5, 0.8),
    };
    DetectionOptions raw;
    raw.prune = false;
    int agree = 0, present = 0;
    for (std::uint64_t k = 0; k < 12; ++k) {
        auto sub = random_subset(2, 2, 0.35, make_key(21, {k}));
        for (const auto& f : fams) {
            const bool a = detect_configuration(sub, 2, f).present;
            const bool b = detect_configuration(sub, 2, f, raw).present;
            CHECK(a == b);
            agree += a == b;
            present += a;
        }
    }
    CHECK(agree == 48);
    CHECK(present > 0);
}

TEST_CASE("monotone under supersets and exact under index halving") {
    const std::vector<ConfigDescriptor> fams{
        ConfigDescriptor::homothetic(2, {0, 0, 1, 0, 0, 1}),
        ConfigDescriptor::angle(2, 0.3),
        ConfigDescriptor::triangle(2, 1.0, 1.0),
    };
    for (std::uint64_t k = 0; k < 20; ++k) {
        auto small = random_subset(2, 3, 0.12, make_key(31, {k}));
        auto large = small;
        for (CubeCode c : random_subset(2, 3, 0.12, make_key(32, {k}))) large.push_back(c);
        std::sort(large.begin(), large.end());
        large.erase(std::unique(large.begin(), large.end()), large.end());
        for (const auto& f : fams) {
            const bool a = detect_configuration(small, 3, f).present;
            const bool b = detect_configuration(large, 3, f).present;
            CHECK((!a || b));
            CHECK(detect_configuration(halved(small, 2, 3), 4, f).present == a);
        }
    }
}

TEST_CASE("realized value sets") {
    // two cubes
    std::vector<std::uint32_t> i0{0, 0}, i1{3, 1};
    std::vector<CubeCode> two{encode(i0, 2), encode(i1, 2)};
    std::sort(two.begin(), two.end());
    auto set = realized_value_set(two, 2, 2, Functional::distance);
    REQUIRE(set.size() == 1);
    const double c = std::sqrt(10.0) / 4, h = std::sqrt(2.0) / 4;
    CHECK(set[0].lo == doctest::Approx(c - h));
    CHECK(set[0].hi == doctest::Approx(c + h));

    auto full = realized_value_set(full_grid(2, 4), 2, 4, Functional::distance);
    CHECK(covers(full, 0.0, std::sqrt(2.0) - 0.1));
    CHECK(full.size() == 1);

    auto angles = realized_value_set(full_grid(2, 2), 2, 2, Functional::angle);
    CHECK(covers(angles, 0.0, std::numbers::pi));

    auto vols = realized_value_set(full_grid(2, 2), 2, 2, Functional::volume);
    CHECK(covers(vols, 0.0, 0.3));
    CHECK(vols.back().hi >= 0.28);

    CHECK(realized_value_set(std::vector<CubeCode>{}, 2, 3, Functional::distance).empty());
    CHECK(total_length(merge_intervals({{0, 1}, {0.5, 2}, {3, 4}})) == doctest::Approx(3));
}

TEST_CASE("threshold sweep basics") {
    auto desc = ConfigDescriptor::homothetic(1, {0, 1, 2});
    std::vector<double> grid{0.6, 0.8, 0.999};
    SweepOptions opt;
    opt.coupled = true;
    opt.seed = 5;
    auto res = threshold_sweep(desc, grid, 6, 40, opt);
    CHECK(res.monotone);
    CHECK(res.rows[2].frequency == 1.0);
    opt.coupled = false;
    opt.threads = 3;
    auto a = threshold_sweep(desc, grid, 6, 20, opt);
    opt.threads = 1;
    auto b = threshold_sweep(desc, grid, 6, 20, opt);
    CHECK(a.presence == b.presence);
    std::vector<double> low{0.4};
    CHECK_THROWS_AS(threshold_sweep(desc, low, 4, 2, opt), std::invalid_argument);
}

TEST_CASE("parameter dimension") {
    auto desc = ConfigDescriptor::homothetic(1, {0, 1});
    auto full = sample_tree(make_law(1, 1.0), Variant::surviving, 1, 9);
    auto pd = pattern_parameter_dimension(full, desc, 9, 3, 7);
    CHECK(pd.predicted == doctest::Approx(2.0));
    CHECK(pd.slope == doctest::Approx(2.0).epsilon(0.1));

    auto dead = sample_tree(make_law(1, 0.3), Variant::extinction, 4, 8);
    REQUIRE(dead.level(8).empty());
    auto empty = pattern_parameter_dimension(dead, desc, 8, 2, 5);
    for (auto c : empty.counts) CHECK(c == 0);
}

TEST_CASE("percolation dimension test") {
    // single cube: retained with probability p^n
    std::vector<std::uint32_t> idx{1, 2};
    std::vector<CubeCode> one{encode(idx, 3)};
    std::vector<double> grid{0.5, 0.8};
    auto r = percolation_dimension_test(one, 2, 3, grid, 4000, 9);
    CHECK(r.frequency[0] == doctest::Approx(0.125).epsilon(0.2));
    CHECK(r.frequency[1] == doctest::Approx(0.512).epsilon(0.08));

    std::vector<double> a{0.1, 0.2}, b{0.9, 0.75};
    auto seg = segment_cubes(a, b, 5);
    CHECK(seg.size() >= 32);
    CHECK(seg.size() <= 3 * 32);
    CHECK_THROWS_AS(percolation_dimension_test(std::vector<CubeCode>{}, 2, 3, grid, 1, 0), std::invalid_argument);
}

TEST_CASE("stress test") {
    auto desc = ConfigDescriptor::homothetic(1, {0, 1, 2});
    auto tree = sample_tree(make_law(1, 0.9), Variant::surviving, 3, 7);
    const auto& cubes = tree.level(7);
    const bool base = detect_configuration(cubes, 7, desc).present;
    CHECK(stress_once(cubes, 7, desc, 0.0, Removal::random, 1) == base);
    CHECK(stress_once(cubes, 7, desc, 0.0, Removal::greedy, 1) == base);
    CHECK_FALSE(stress_once(cubes, 7, desc, 0.99, Removal::random, 1));
    CHECK_FALSE(stress_once(cubes, 7, desc, 0.99, Removal::greedy, 1));
    CHECK_THROWS_AS(stress_once(cubes, 7, desc, 1.0, Removal::random, 1), std::invalid_argument);
    auto res = subset_stress_test(make_law(1, 0.9), Variant::surviving, desc, 0.0, Removal::random, 6, 10, 4);
    CHECK(res.present == res.before);
}

TEST_CASE("harris checks") {
    const auto law = make_law(2, 0.6);
    auto always = parse_event("always", 2);
    auto right = parse_event("right", 2);
    auto r = harris_check(always, right, law, Variant::surviving, 5, 500, 3);
    CHECK_FALSE(r.violation);
    CHECK(r.p1 == 1.0);

    auto cube = parse_event("cube:1:0,0", 2);
    auto ext = harris_check(cube, cube, make_law(2, 0.6), Variant::extinction, 3, 4000, 8);
    CHECK(ext.p12 == doctest::Approx(0.6).epsilon(0.06));
    CHECK_FALSE(ext.violation);

    TreeEvent shrinking = [](const PercolationTree& t, int n) { return t.level(n).size() <= 2; };
    CHECK_FALSE(check_monotone(shrinking, 2, 4, 1));
    CHECK_THROWS_AS(harris_check(shrinking, always, law, Variant::surviving, 3, 10, 1), std::invalid_argument);
    CHECK_THROWS_AS(parse_event("sometimes", 2), std::invalid_argument);
}

TEST_CASE("box dimension") {
    auto full = sample_tree(make_law(2, 1.0), Variant::surviving, 1, 5);
    CHECK(box_dimension_estimate(full, 1, 5).slope == doctest::Approx(2.0));
    // a single-cube chain
    std::vector<std::vector<CubeCode>> levels{{0}, {1}, {4}, {17}};
    PercolationTree chain(make_law(2, 0.5), Variant::extinction, 0, levels);
    CHECK(box_dimension_estimate(chain, 0, 3).slope == doctest::Approx(0.0));
    CHECK_THROWS_AS(box_dimension_estimate(full, 1, 2), std::invalid_argument);
}
