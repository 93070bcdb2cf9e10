#include <doctest.h>

#include <cmath>
#include <numeric>
#include <sstream>

#include "fracperc/dyadic.hpp"
#include "fracperc/errors.hpp"
#include "fracperc/percolation.hpp"
#include "fracperc/random.hpp"
#include "fracperc/stats.hpp"

using namespace fracperc;

TEST_CASE("dyadic codes round trip and nest") {
    DyadicCube q{3, {5, 2}};
    const auto code = encode(q);
    CHECK(cube_from_code(code, 2, 3) == q);
    for (unsigned j = 0; j < 4; ++j) {
        auto c = q.child(j);
        CHECK(c.parent() == q);
        CHECK(q.contains(c));
        CHECK(encode(c) == ((code << 2) | j));
    }
    auto [lo, hi] = descendant_range(code, 2, 3, 5);
    CHECK(hi - lo == 16);
    CHECK(q.lower(0) == doctest::Approx(5.0 / 8));
    CHECK(q.upper(1) == doctest::Approx(3.0 / 8));
}

TEST_CASE("extinction probability fixed points") {
    CHECK(std::fabs(extinction_probability(1, 0.7) - 9.0 / 49.0) < 1e-12);
    CHECK(extinction_probability(2, 0.25) == 1.0);
    CHECK(extinction_probability(1, 0.3) == 1.0);
    CHECK(extinction_probability(3, 1.0 - 1e-12) < 1e-9);
    for (int d = 1; d <= 3; ++d)
        for (double p : {0.3, 0.55, 0.8, 0.95}) {
            const double q = extinction_probability(d, p);
            const double f = std::pow(1 - p + p * q, 1 << d);
            CHECK(std::fabs(f - q) <= 1e-12);
            if (p > std::ldexp(1.0, -d)) CHECK(q < 1.0);
        }
}

TEST_CASE("offspring law") {
    auto law = offspring_distribution(1, 0.7);
    CHECK(std::fabs(law[1] - 0.6) < 1e-12);
    CHECK(std::fabs(law[2] - 0.4) < 1e-12);
    CHECK_THROWS_AS(offspring_distribution(2, 0.25), std::invalid_argument);
    for (int d = 1; d <= 3; ++d)
        for (double p : {0.55, 0.7, 0.99}) {
            auto pk = offspring_distribution(d, p);
            double total = std::accumulate(pk.begin(), pk.end(), 0.0);
            double mean = 0;
            for (std::size_t k = 0; k < pk.size(); ++k) mean += k * pk[k];
            CHECK(std::fabs(total - 1.0) < 1e-12);
            CHECK(std::fabs(mean - (1 << d) * p) < 1e-10);
        }
    auto near_one = offspring_distribution(1, 1.0 - 1e-12);
    CHECK(near_one[1] < 1e-9);
}

TEST_CASE("tree invariants") {
    auto law = make_law(2, 0.6);
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        for (auto variant : {Variant::extinction, Variant::surviving}) {
            auto t = sample_tree(law, variant, seed, 6);
            auto again = sample_tree(law, variant, seed, 6);
            for (int n = 1; n <= 6; ++n) {
                CHECK(t.level(n) == again.level(n));
                for (auto c : t.level(n)) CHECK(t.contains(n - 1, c >> 2));
                if (variant == Variant::surviving)
                    for (auto c : t.level(n - 1)) CHECK(!t.children(n - 1, c).empty());
            }
        }
    }
    auto root_only = sample_tree(law, Variant::surviving, 1, 0);
    CHECK(root_only.depth() == 0);
    CHECK(root_only.survivor_count(0) == 1);
}

TEST_CASE("coupled slices are nested") {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        auto a = coupled_slice(2, seed, 0.3, 6);
        auto b = coupled_slice(2, seed, 0.6, 6);
        for (int n = 0; n <= 6; ++n)
            CHECK(std::includes(b.level(n).begin(), b.level(n).end(), a.level(n).begin(), a.level(n).end()));
    }
    auto full = coupled_slice(2, 9, 1.0, 3);
    CHECK(full.survivor_count(3) == 64);
    auto empty = coupled_slice(2, 9, 0.0, 3);
    CHECK(empty.survivor_count(1) == 0);
    // the extinction variant reads the same field
    auto ext = sample_tree(make_law(2, 0.6), Variant::extinction, 4, 5);
    CHECK(ext.level(5) == coupled_slice(2, 4, 0.6, 5).level(5));
}

TEST_CASE("natural measure") {
    auto full = coupled_slice(2, 1, 1.0, 4);
    for (int n = 0; n <= 4; ++n) CHECK(natural_measure(full, n).total_mass() == doctest::Approx(1.0));
    auto nu = natural_measure(full, 3);
    std::vector<DyadicCube> half{{1, {0, 0}}, {1, {1, 0}}};
    CHECK(nu.mass(half) == doctest::Approx(0.5));
    std::vector<DyadicCube> deep{{4, {0, 0}}};
    CHECK_THROWS_AS(nu.mass(deep), std::invalid_argument);
    auto empty = coupled_slice(2, 1, 0.0, 2);
    CHECK(natural_measure(empty, 2).total_mass() == 0.0);
}

TEST_CASE("level text round trip") {
    auto t = sample_tree(make_law(2, 0.7), Variant::surviving, 11, 5);
    std::stringstream ss;
    write_level(ss, t, 5);
    auto rec = read_level(ss);
    CHECK(rec.level == 5);
    CHECK(rec.dim == 2);
    CHECK(rec.codes == t.level(5));
    std::stringstream again;
    write_level(again, rec.codes, rec.dim, rec.level);
    std::stringstream first;
    write_level(first, t, 5);
    CHECK(again.str() == first.str());
}

TEST_CASE("budget") {
    auto law = make_law(2, 1.0);
    Budget small{1000};
    CHECK_THROWS_AS(sample_tree(law, Variant::extinction, 1, 6, small), BudgetError);
    CHECK_THROWS_AS(sample_tree(law, Variant::extinction, 1, 40), BudgetError);
}

TEST_CASE("keyed stream below stays in range") {
    KeyedStream rng(make_key(1, {2}));
    for (int i = 0; i < 10000; ++i) CHECK(rng.below(7) < 7);
}

TEST_CASE("stats helpers") {
    stats::Moments m;
    for (int i = 0; i < 10; ++i) m.add(3.0);
    CHECK(m.variance() == 0.0);
    CHECK(m.mean() == 3.0);
    auto w = stats::wilson(50, 100);
    CHECK(w.lo < 0.5);
    CHECK(w.hi > 0.5);
    std::vector<double> x{1, 2, 3, 4, 5, 6, 7}, y{1, 3, 2, 5, 4, 7, 9};
    auto sp = stats::spearman(x, y);
    CHECK(sp.rho > 0.8);
    CHECK(sp.p_increasing < 0.05);
    auto fit = stats::least_squares(x, x);
    CHECK(fit.slope == doctest::Approx(1.0));
}
