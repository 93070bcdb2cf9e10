#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fracperc/geometry.hpp"
#include "fracperc/percolation.hpp"

namespace fracperc {

enum class ProductMode { independent, cartesian_power, weighted };

const char* to_string(ProductMode mode);
ProductMode parse_product_mode(const std::string& name);

struct ProductMeasureSpec {
    int m = 2;
    GaltonWatsonLaw law = make_law(1, 0.8);
    Variant variant = Variant::extinction;
    ProductMode mode = ProductMode::independent;
    std::uint64_t seed = 0;
    // weighted mode: retention probability of the extra tree on R^{md}
    double extra_p = 1.0;
    // cartesian power: the region is the union of level-n0 product cubes
    // whose factor cubes are pairwise distinct
    int diagonal_level = 1;
    Budget budget{};

    int ambient() const { return m * law.d; }
};

// Factor trees of one realization of mu_n, grown to a fixed depth.
class ProductMeasure {
public:
    static ProductMeasure sample(const ProductMeasureSpec& spec, int depth);
    // Given factor trees (one in cartesian-power mode); depth is the smallest tree depth.
    static ProductMeasure from_trees(const ProductMeasureSpec& spec, std::vector<PercolationTree> trees);

    const ProductMeasureSpec& spec() const { return spec_; }
    int depth() const { return depth_; }
    // Factor tree j; in cartesian-power mode every factor is the same tree.
    const PercolationTree& factor(int j) const;
    bool weighted() const { return spec_.mode == ProductMode::weighted; }
    // Extra-tree retention of a level-l product cube, given its parent survived.
    bool extra_retained(int level, CubeCode product_code) const;
    double density(int level) const;

    // Levels <= n kept, deeper levels regrown under a fresh key.
    ProductMeasure regrown(int n, std::uint64_t key, int depth) const;

private:
    ProductMeasureSpec spec_;
    int depth_ = 0;
    std::vector<std::shared_ptr<const PercolationTree>> factors_;
    std::vector<std::uint64_t> extra_seeds_;  // per level, weighted mode only
};

// What a product measure is integrated against: an affine plane (exact or
// sampled kernel) or a variety through its additive per-cell measures.
class Target {
public:
    static Target plane(AffinePlane v, const KernelSettings& settings = {});
    // Cell measures are computed once on the level-`grid_level` grid.
    static Target variety(const PolynomialMap& p, int grid_level);

    int ambient() const { return ambient_; }
    int dim() const { return dim_; }
    bool is_plane() const { return plane_.has_value(); }
    const AffinePlane& affine() const { return *plane_; }
    bool exact() const;
    int grid_level() const { return cells_ ? cells_->level() : -1; }

    // Conservative: false only if the target misses the closed box. The
    // product code is read by variety targets only.
    bool hits(const Box& box, CubeCode code, int level) const;
    Measure measure(const Box& box, CubeCode code, int level) const;
    bool needs_code() const { return cells_ != nullptr; }

private:
    int ambient_ = 0;
    int dim_ = 0;
    std::optional<AffinePlane> plane_;
    KernelSettings settings_;
    std::shared_ptr<const VarietyCells> cells_;
};

struct MassSeries {
    std::string param_id;
    std::uint64_t seed = 0;
    std::vector<double> Y;   // Y_0 .. Y_n
    std::vector<double> se;  // kernel standard errors (zero for exact kernels)
    std::vector<std::size_t> cubes;  // product cubes contributing per level
    std::string kernel;      // "exact", "sampled" or "cells"
};

struct TraversalOptions {
    bool prune = true;                    // skip cubes whose closure the target misses
    std::size_t max_visits = std::size_t{1} << 28;
};

// Y_j = density_j * sum over supported level-j product cubes of the target
// measure inside the cube, j = 0..n.
MassSeries intersection_mass(const ProductMeasure& mu, const Target& target, int n, const TraversalOptions& options = {});
MassSeries intersection_mass(const ProductMeasureSpec& spec, const Target& target, int n, const TraversalOptions& options = {});

// Per-cube contributions at level n in traversal order (for additivity and
// dependency checks).
struct CubeContribution {
    std::vector<CubeCode> factors;  // level-n factor codes
    double mass = 0.0;              // density * kernel
};
std::vector<CubeContribution> level_contributions(const ProductMeasure& mu, const Target& target, int n);

struct MartingaleCheck {
    double Y_n = 0.0;
    double mean_next = 0.0;
    double std_error = 0.0;
    double z = 0.0;  // |mean - Y_n| / se, zero when both vanish
    std::size_t replicates = 0;
};
MartingaleCheck martingale_resample_check(const ProductMeasureSpec& spec, const Target& target, int n, std::size_t R,
                                          int threads = 1);

struct DependencyReport {
    int level = 0;
    std::size_t vertices = 0;
    std::size_t edges = 0;
    std::size_t max_degree = 0;
    std::map<std::size_t, std::size_t> degree_histogram;
    std::map<std::size_t, std::size_t> bucket_sizes;  // projection bucket size -> count
    std::vector<std::vector<std::size_t>> adjacency;
};
DependencyReport dependency_graph(const ProductMeasure& mu, const Target& target, int n);

struct SecondMoment {
    double mean = 0.0;
    double second = 0.0;
    double ratio = 1.0;             // E[Y^2] / E[Y]^2
    double paley_zygmund = 0.0;     // E[Y]^2 / E[Y^2]
    double survival = 0.0;          // empirical P(Y > 0)
    double mean_se = 0.0;
    std::size_t replicates = 0;
};
// Replicate r uses the spec seed combined with (salt, r).
SecondMoment second_moment_estimate(const ProductMeasureSpec& spec, const Target& target, int n, std::size_t R,
                                    int threads = 1, std::uint64_t salt = 0);

struct HolderTable {
    std::vector<double> gammas;
    std::vector<double> sup_ratio;                 // per gamma, at level n
    std::vector<std::vector<double>> growth;       // [gamma][level] sup_t 2^{-gamma j} Y_j^t
    std::vector<MassSeries> series;                // per grid target
};
// One realization; `distance[i][k]` is the metric between grid targets i, k.
HolderTable holder_modulus(const ProductMeasure& mu, std::span<const Target> grid,
                           const std::vector<std::vector<double>>& distance, int n, std::span<const double> gammas,
                           int threads = 1);

}  // namespace fracperc
