#include "fracperc/percolation.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "fracperc/errors.hpp"
#include "fracperc/random.hpp"

namespace fracperc {

namespace {

void check_dimension(int d) {
    if (d < 1 || d > 8) throw std::invalid_argument("dimension d must be in [1, 8]");
}

double binomial(int n, int k) {
    double r = 1.0;
    for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
    return r;
}

}  // namespace

double extinction_probability(int d, double p) {
    check_dimension(d);
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("p must lie in [0, 1]");
    const int children = 1 << d;
    if (p <= std::ldexp(1.0, -d)) return 1.0;
    if (p == 1.0) return 0.0;

    auto f = [&](double t) { return std::pow(1.0 - p + p * t, children); };
    auto df = [&](double t) { return children * p * std::pow(1.0 - p + p * t, children - 1); };

    // g(t) = f(t) - t is convex with g(0) > 0 and g'(0) < 0, so Newton from
    // t = 0 increases monotonically to the smallest root.
    double t = 0.0;
    for (int it = 0; it < 10000; ++it) {
        const double g = f(t) - t;
        const double dg = df(t) - 1.0;
        if (dg >= 0.0) break;
        const double next = t - g / dg;
        if (!(next > t)) break;
        t = std::min(next, 1.0);
        if (g < 1e-18) break;
    }
    return t;
}

std::vector<double> offspring_distribution(int d, double p) {
    check_dimension(d);
    if (!(p > std::ldexp(1.0, -d) && p <= 1.0))
        throw std::invalid_argument("surviving law requires 2^-d < p <= 1");
    const int children = 1 << d;
    const double q = extinction_probability(d, p);
    const double alive = 1.0 - q;
    std::vector<double> law(children + 1, 0.0);
    for (int k = 1; k <= children; ++k) {
        law[k] = binomial(children, k) * std::pow(p, k) * std::pow(alive, k - 1) *
                 std::pow(1.0 - p * alive, children - k);
    }
    return law;
}

double dimension_value(int d, double p) { return d + std::log2(p); }

GaltonWatsonLaw make_law(int d, double p) {
    check_dimension(d);
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("p must lie in [0, 1]");
    GaltonWatsonLaw law;
    law.d = d;
    law.p = p;
    law.q = extinction_probability(d, p);
    law.s = dimension_value(d, p);
    if (p > std::ldexp(1.0, -d)) law.offspring = offspring_distribution(d, p);
    return law;
}

const char* to_string(Variant v) {
    switch (v) {
        case Variant::extinction: return "extinction";
        case Variant::surviving: return "surviving";
        case Variant::coupled: return "coupled";
    }
    return "?";
}

Variant parse_variant(const std::string& name) {
    if (name == "extinction") return Variant::extinction;
    if (name == "surviving") return Variant::surviving;
    if (name == "coupled") return Variant::coupled;
    throw std::invalid_argument("unknown variant '" + name + "'");
}

double retention_uniform(std::uint64_t seed, int level, CubeCode code) {
    const auto key = make_key(seed, {static_cast<std::uint64_t>(Domain::retention), static_cast<std::uint64_t>(level), code});
    // (0, 1]: U <= 1 always holds and U <= 0 never does.
    return (static_cast<double>(mix64(key) >> 11) + 1.0) * 0x1.0p-53;
}

std::vector<CubeCode> expand_level(std::span<const CubeCode> parents, int parent_level, const GaltonWatsonLaw& law,
                                   Variant variant, std::uint64_t seed) {
    const int d = law.d;
    const unsigned children = 1U << d;
    if (d * (parent_level + 1) > kMaxCodeBits) throw BudgetError("tree depth exceeds the 64-bit cube code");
    std::vector<CubeCode> out;
    if (variant == Variant::surviving) {
        if (!law.survivable()) throw std::invalid_argument("surviving variant requires p > 2^-d");
        std::vector<double> cdf(law.offspring.size());
        std::partial_sum(law.offspring.begin(), law.offspring.end(), cdf.begin());
        std::vector<unsigned> slots(children);
        out.reserve(parents.size() * 2);
        for (CubeCode parent : parents) {
            KeyedStream rng(make_key(seed, {static_cast<std::uint64_t>(Domain::surviving),
                                            static_cast<std::uint64_t>(parent_level), parent}));
            const double u = rng.uniform() * cdf.back();
            unsigned k = 1;
            while (k < children && cdf[k] <= u) ++k;
            std::iota(slots.begin(), slots.end(), 0U);
            for (unsigned i = 0; i < k; ++i) {
                const auto j = i + static_cast<unsigned>(rng.below(children - i));
                std::swap(slots[i], slots[j]);
            }
            std::sort(slots.begin(), slots.begin() + k);
            for (unsigned i = 0; i < k; ++i) out.push_back((parent << d) | slots[i]);
        }
    } else {
        const double p = law.p;
        out.reserve(static_cast<std::size_t>(static_cast<double>(parents.size()) * children * p) + 1);
        for (CubeCode parent : parents) {
            for (unsigned j = 0; j < children; ++j) {
                const CubeCode child = (parent << d) | j;
                if (retention_uniform(seed, parent_level + 1, child) <= p) out.push_back(child);
            }
        }
    }
    return out;
}

PercolationTree::PercolationTree(GaltonWatsonLaw law, Variant variant, std::uint64_t seed,
                                 std::vector<std::vector<CubeCode>> levels)
    : law_(std::move(law)), variant_(variant), seed_(seed), levels_(std::move(levels)) {
    if (levels_.empty()) levels_.push_back({0});
}

const std::vector<CubeCode>& PercolationTree::level(int n) const {
    if (n < 0 || n > depth()) throw std::out_of_range("level " + std::to_string(n) + " beyond tree depth");
    return levels_[n];
}

bool PercolationTree::contains(int n, CubeCode code) const {
    const auto& lv = level(n);
    return std::binary_search(lv.begin(), lv.end(), code);
}

std::span<const CubeCode> PercolationTree::children(int n, CubeCode code) const {
    const auto& lv = level(n + 1);
    const auto [first, last] = descendant_range(code, dim(), n, n + 1);
    auto lo = std::lower_bound(lv.begin(), lv.end(), first);
    auto hi = std::lower_bound(lo, lv.end(), last);
    return {lo, hi};
}

std::size_t PercolationTree::total_cubes() const {
    std::size_t total = 0;
    for (const auto& lv : levels_) total += lv.size();
    return total;
}

PercolationTree PercolationTree::truncated(int n) const {
    if (n > depth()) throw std::out_of_range("cannot truncate below the tree depth");
    return PercolationTree(law_, variant_, seed_, {levels_.begin(), levels_.begin() + n + 1});
}

PercolationTree PercolationTree::regrown(int n, std::uint64_t new_seed, int new_depth, const Budget& budget) const {
    if (n > depth() || new_depth < n) throw std::out_of_range("invalid regrow levels");
    std::vector<std::vector<CubeCode>> levels(levels_.begin(), levels_.begin() + n + 1);
    std::size_t total = 0;
    for (const auto& lv : levels) total += lv.size();
    const Variant rule = variant_ == Variant::coupled ? Variant::extinction : variant_;
    for (int l = n; l < new_depth; ++l) {
        levels.push_back(expand_level(levels.back(), l, law_, rule, new_seed));
        total += levels.back().size();
        if (total > budget.max_cubes) throw BudgetError("tree exceeds the cube budget");
    }
    return PercolationTree(law_, variant_, seed_, std::move(levels));
}

PercolationTree sample_tree(const GaltonWatsonLaw& law, Variant variant, std::uint64_t seed, int n_max,
                            const Budget& budget) {
    if (n_max < 0) throw std::invalid_argument("n_max must be non-negative");
    if (variant == Variant::surviving && !law.survivable())
        throw std::invalid_argument("surviving variant requires p > 2^-d");
    if (law.d * n_max > kMaxCodeBits) throw BudgetError("tree depth exceeds the 64-bit cube code");
    PercolationTree root(law, variant, seed, {{0}});
    return root.regrown(0, seed, n_max, budget);
}

PercolationTree coupled_slice(int d, std::uint64_t seed, double p, int n_max, const Budget& budget) {
    return sample_tree(make_law(d, p), Variant::coupled, seed, n_max, budget);
}

std::size_t survivor_count(const PercolationTree& tree, int n) { return tree.survivor_count(n); }

NaturalMeasure::NaturalMeasure(const PercolationTree& tree, int n)
    : tree_(&tree), n_(n), density_(std::pow(tree.law().p, -n)) {
    if (n < 0 || n > tree.depth()) throw std::out_of_range("measure level beyond tree depth");
}

double NaturalMeasure::total_mass() const {
    const int d = tree_->dim();
    if (tree_->survivor_count(n_) == 0) return 0.0;
    return static_cast<double>(tree_->survivor_count(n_)) * density_ * std::ldexp(1.0, -d * n_);
}

double NaturalMeasure::mass(std::span<const DyadicCube> region) const {
    const int d = tree_->dim();
    std::vector<std::pair<CubeCode, CubeCode>> ranges;
    ranges.reserve(region.size());
    for (const auto& cube : region) {
        if (cube.dim() != d) throw std::invalid_argument("region cube has the wrong dimension");
        if (cube.level > n_) throw std::invalid_argument("region is not a union of level-n cubes");
        ranges.push_back(descendant_range(encode(cube), d, cube.level, n_));
    }
    std::sort(ranges.begin(), ranges.end());
    const auto& lv = tree_->level(n_);
    std::size_t count = 0;
    CubeCode covered = 0;
    for (auto [first, last] : ranges) {
        first = std::max(first, covered);
        if (first >= last) continue;
        auto lo = std::lower_bound(lv.begin(), lv.end(), first);
        auto hi = std::lower_bound(lo, lv.end(), last);
        count += static_cast<std::size_t>(hi - lo);
        covered = last;
    }
    if (count == 0) return 0.0;
    return static_cast<double>(count) * density_ * std::ldexp(1.0, -d * n_);
}

NaturalMeasure natural_measure(const PercolationTree& tree, int n) { return NaturalMeasure(tree, n); }

void write_level(std::ostream& out, std::span<const CubeCode> codes, int dim, int n) {
    std::vector<std::vector<std::uint32_t>> rows;
    rows.reserve(codes.size());
    for (CubeCode c : codes) rows.push_back(decode(c, dim, n));
    std::sort(rows.begin(), rows.end());
    for (const auto& row : rows) {
        out << n;
        for (auto i : row) out << ' ' << i;
        out << '\n';
    }
}

void write_level(std::ostream& out, const PercolationTree& tree, int n) { write_level(out, tree.level(n), tree.dim(), n); }

LevelRecord read_level(std::istream& in) {
    LevelRecord rec;
    rec.dim = -1;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream row(line);
        int n = 0;
        if (!(row >> n) || n < 0) throw std::invalid_argument("bad level on line " + std::to_string(line_no));
        std::vector<std::uint32_t> index;
        std::uint64_t v = 0;
        while (row >> v) {
            if (v >= (std::uint64_t{1} << n)) throw std::invalid_argument("index out of range on line " + std::to_string(line_no));
            index.push_back(static_cast<std::uint32_t>(v));
        }
        if (!row.eof()) throw std::invalid_argument("malformed line " + std::to_string(line_no));
        if (rec.dim < 0) {
            rec.dim = static_cast<int>(index.size());
            rec.level = n;
        } else if (rec.dim != static_cast<int>(index.size()) || rec.level != n) {
            throw std::invalid_argument("inconsistent cube on line " + std::to_string(line_no));
        }
        rec.codes.push_back(encode(index, n));
    }
    if (rec.dim < 0) rec.dim = 0;
    std::sort(rec.codes.begin(), rec.codes.end());
    rec.codes.erase(std::unique(rec.codes.begin(), rec.codes.end()), rec.codes.end());
    return rec;
}

}  // namespace fracperc
