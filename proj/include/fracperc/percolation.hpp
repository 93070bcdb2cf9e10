#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "fracperc/dyadic.hpp"

namespace fracperc {

// Offspring law of the 2^d-ary tree behind fractal percolation with
// retention probability p.
struct GaltonWatsonLaw {
    int d = 1;
    double p = 0.5;
    double q = 1.0;                 // extinction probability
    std::vector<double> offspring;  // offspring[k], k = 0..2^d; empty unless p > 2^-d
    double s = 0.0;                 // d + log2(p)

    int children() const { return 1 << d; }
    bool survivable() const { return !offspring.empty(); }
};

double extinction_probability(int d, double p);
// Law of the number of surviving children of a surviving cube, k = 1..2^d
// (entry 0 is zero). Requires p > 2^-d.
std::vector<double> offspring_distribution(int d, double p);
double dimension_value(int d, double p);
GaltonWatsonLaw make_law(int d, double p);

enum class Variant { extinction, surviving, coupled };

const char* to_string(Variant v);
Variant parse_variant(const std::string& name);

struct Budget {
    std::size_t max_cubes = std::size_t{1} << 25;  // over all levels of one tree
};

// Per-level sorted Morton code lists, A_0 = {root}. Immutable once built.
class PercolationTree {
public:
    PercolationTree(GaltonWatsonLaw law, Variant variant, std::uint64_t seed, std::vector<std::vector<CubeCode>> levels);

    const GaltonWatsonLaw& law() const { return law_; }
    Variant variant() const { return variant_; }
    std::uint64_t seed() const { return seed_; }
    int dim() const { return law_.d; }
    int depth() const { return static_cast<int>(levels_.size()) - 1; }

    const std::vector<CubeCode>& level(int n) const;
    std::size_t survivor_count(int n) const { return level(n).size(); }
    bool contains(int n, CubeCode code) const;
    // Children of `code` (a level-n cube) present at level n+1.
    std::span<const CubeCode> children(int n, CubeCode code) const;
    std::size_t total_cubes() const;

    // Same levels 0..n; level n+1 onwards regrown with a fresh key.
    PercolationTree regrown(int n, std::uint64_t new_seed, int new_depth, const Budget& budget = {}) const;
    PercolationTree truncated(int n) const;

private:
    GaltonWatsonLaw law_;
    Variant variant_;
    std::uint64_t seed_;
    std::vector<std::vector<CubeCode>> levels_;
};

// Retention uniform U_Q in (0,1] of a cube, shared by the extinction variant
// and the coupled ensemble.
double retention_uniform(std::uint64_t seed, int level, CubeCode code);

// Children of the sorted level-`parent_level` list under the given law.
std::vector<CubeCode> expand_level(std::span<const CubeCode> parents, int parent_level, const GaltonWatsonLaw& law,
                                   Variant variant, std::uint64_t seed);

PercolationTree sample_tree(const GaltonWatsonLaw& law, Variant variant, std::uint64_t seed, int n_max,
                            const Budget& budget = {});

// Realization A_p of the coupled ensemble: cube kept iff U_Q <= p at every
// ancestor. Monotone in p for a fixed seed.
PercolationTree coupled_slice(int d, std::uint64_t seed, double p, int n_max, const Budget& budget = {});

std::size_t survivor_count(const PercolationTree& tree, int n);

// nu_n = p^-n 1[A_n].
class NaturalMeasure {
public:
    NaturalMeasure(const PercolationTree& tree, int n);

    int level() const { return n_; }
    double density() const { return density_; }
    double total_mass() const;
    // Mass of a union of dyadic cubes of level <= n.
    double mass(std::span<const DyadicCube> region) const;

private:
    const PercolationTree* tree_;
    int n_;
    double density_;
};

NaturalMeasure natural_measure(const PercolationTree& tree, int n);

// Text form of one level: "n idx_1 ... idx_d" per cube, lexicographic order.
void write_level(std::ostream& out, const PercolationTree& tree, int n);
void write_level(std::ostream& out, std::span<const CubeCode> codes, int dim, int n);
struct LevelRecord {
    int level = 0;
    int dim = 0;
    std::vector<CubeCode> codes;  // sorted
};
LevelRecord read_level(std::istream& in);

}  // namespace fracperc
