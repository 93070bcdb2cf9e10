#include "fracperc/intersect.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <unordered_map>

#include "fracperc/errors.hpp"
#include "fracperc/parallel.hpp"
#include "fracperc/random.hpp"
#include "fracperc/stats.hpp"

namespace fracperc {

const char* to_string(ProductMode mode) {
    switch (mode) {
        case ProductMode::independent: return "independent";
        case ProductMode::cartesian_power: return "cartesian";
        case ProductMode::weighted: return "weighted";
    }
    return "?";
}

ProductMode parse_product_mode(const std::string& name) {
    if (name == "independent") return ProductMode::independent;
    if (name == "cartesian" || name == "cartesian_power" || name == "cartesian-power") return ProductMode::cartesian_power;
    if (name == "weighted") return ProductMode::weighted;
    throw std::invalid_argument("unknown product mode '" + name + "'");
}

// --- product measures

ProductMeasure ProductMeasure::sample(const ProductMeasureSpec& spec, int depth) {
    if (spec.m < 1) throw std::invalid_argument("product needs m >= 1");
    if (spec.ambient() * depth > kMaxCodeBits) throw BudgetError("product cube codes exceed 64 bits at this depth");
    if (spec.mode == ProductMode::weighted && !(spec.extra_p > 0.0 && spec.extra_p <= 1.0))
        throw std::invalid_argument("weighted mode needs 0 < extra_p <= 1");
    ProductMeasure mu;
    mu.spec_ = spec;
    mu.depth_ = depth;
    const int trees = spec.mode == ProductMode::cartesian_power ? 1 : spec.m;
    for (int j = 0; j < trees; ++j) {
        const auto key = make_key(spec.seed, {static_cast<std::uint64_t>(Domain::replicate), static_cast<std::uint64_t>(j)});
        mu.factors_.push_back(std::make_shared<const PercolationTree>(sample_tree(spec.law, spec.variant, key, depth, spec.budget)));
    }
    if (spec.mode == ProductMode::weighted)
        mu.extra_seeds_.assign(depth + 1, make_key(spec.seed, {static_cast<std::uint64_t>(Domain::replicate), 0xe7e7ULL}));
    return mu;
}

ProductMeasure ProductMeasure::from_trees(const ProductMeasureSpec& spec, std::vector<PercolationTree> trees) {
    const std::size_t expected = spec.mode == ProductMode::cartesian_power ? 1 : static_cast<std::size_t>(spec.m);
    if (trees.size() != expected) throw std::invalid_argument("wrong number of factor trees for the product mode");
    ProductMeasure mu;
    mu.spec_ = spec;
    mu.depth_ = std::numeric_limits<int>::max();
    for (auto& t : trees) {
        if (t.dim() != spec.law.d) throw std::invalid_argument("factor tree dimension mismatch");
        mu.depth_ = std::min(mu.depth_, t.depth());
        mu.factors_.push_back(std::make_shared<const PercolationTree>(std::move(t)));
    }
    if (spec.mode == ProductMode::weighted)
        mu.extra_seeds_.assign(mu.depth_ + 1, make_key(spec.seed, {static_cast<std::uint64_t>(Domain::replicate), 0xe7e7ULL}));
    return mu;
}

const PercolationTree& ProductMeasure::factor(int j) const {
    if (j < 0 || j >= spec_.m) throw std::out_of_range("factor index out of range");
    return *factors_[factors_.size() == 1 ? 0 : j];
}

bool ProductMeasure::extra_retained(int level, CubeCode product_code) const {
    if (!weighted() || level == 0) return true;
    return retention_uniform(extra_seeds_.at(level), level, product_code) <= spec_.extra_p;
}

double ProductMeasure::density(int level) const {
    double d = std::pow(spec_.law.p, -spec_.m * level);
    if (weighted()) d *= std::pow(spec_.extra_p, -level);
    return d;
}

ProductMeasure ProductMeasure::regrown(int n, std::uint64_t key, int depth) const {
    if (n > depth_ || depth < n) throw std::out_of_range("invalid regrow levels");
    ProductMeasure mu = *this;
    mu.depth_ = depth;
    for (std::size_t j = 0; j < factors_.size(); ++j) {
        const auto k = make_key(key, {static_cast<std::uint64_t>(Domain::resample), j});
        mu.factors_[j] = std::make_shared<const PercolationTree>(factors_[j]->regrown(n, k, depth, spec_.budget));
    }
    if (weighted()) {
        mu.extra_seeds_.resize(depth + 1);
        const auto k = make_key(key, {static_cast<std::uint64_t>(Domain::resample), 0xe7e7ULL});
        for (int l = n + 1; l <= depth; ++l) mu.extra_seeds_[l] = k;
    }
    return mu;
}

// --- targets

Target Target::plane(AffinePlane v, const KernelSettings& settings) {
    Target t;
    t.ambient_ = v.ambient();
    t.dim_ = v.dim();
    if (t.dim_ < 1) throw std::invalid_argument("target plane must have dimension >= 1");
    t.plane_ = std::move(v);
    t.settings_ = settings;
    return t;
}

Target Target::variety(const PolynomialMap& p, int grid_level) {
    Target t;
    t.ambient_ = p.ambient();
    t.dim_ = p.ambient() - p.codomain();
    if (t.dim_ < 1) throw std::invalid_argument("target variety must have dimension >= 1");
    t.cells_ = std::make_shared<const VarietyCells>(p, grid_level);
    return t;
}

bool Target::exact() const {
    if (cells_) return false;
    return dim_ == 1 || dim_ >= ambient_ - 1;
}

bool Target::hits(const Box& box, CubeCode code, int level) const {
    if (plane_) return plane_hits_box(*plane_, box);
    return cells_->measure(code, level) > 0.0;
}

Measure Target::measure(const Box& box, CubeCode code, int level) const {
    if (plane_) return plane_cube_measure(*plane_, box, settings_);
    return {cells_->measure(code, level), 0.0, false};
}

// --- traversal

namespace {

// Morton code in R^{md} of the product of level-l factor cubes: axis j*d + a
// of the product is axis a of factor j.
CubeCode product_code(std::span<const CubeCode> factors, int d, int level) {
    const int m = static_cast<int>(factors.size());
    const int md = m * d;
    CubeCode code = 0;
    for (int l = 0; l < level; ++l)
        for (int j = 0; j < m; ++j)
            for (int a = 0; a < d; ++a) code |= ((factors[j] >> (l * d + a)) & 1ULL) << (l * md + j * d + a);
    return code;
}

Box product_box(std::span<const CubeCode> factors, int d, int level) {
    const int m = static_cast<int>(factors.size());
    Box box{Eigen::VectorXd(m * d), Eigen::VectorXd(m * d)};
    const double side = std::ldexp(1.0, -level);
    for (int j = 0; j < m; ++j) {
        const auto idx = decode(factors[j], d, level);
        for (int a = 0; a < d; ++a) {
            box.lo[j * d + a] = idx[a] * side;
            box.hi[j * d + a] = (idx[a] + 1) * side;
        }
    }
    return box;
}

bool pairwise_distinct(std::span<const CubeCode> codes) {
    for (std::size_t i = 0; i < codes.size(); ++i)
        for (std::size_t k = i + 1; k < codes.size(); ++k)
            if (codes[i] == codes[k]) return false;
    return true;
}

class Traversal {
public:
    Traversal(const ProductMeasure& mu, const Target& target, int n, const TraversalOptions& options)
        : mu_(mu), target_(target), n_(n), options_(options), d_(mu.spec().law.d), m_(mu.spec().m) {
        if (target.ambient() != mu.spec().ambient()) throw std::invalid_argument("target ambient dimension must be m*d");
        if (n < 0 || n > mu.depth()) throw std::out_of_range("level beyond the product measure depth");
        if (target.grid_level() >= 0 && n > target.grid_level())
            throw std::invalid_argument("level finer than the variety grid");
        cartesian_ = mu.spec().mode == ProductMode::cartesian_power;
        n0_ = mu.spec().diagonal_level;
        if (cartesian_ && (n0_ < 1 || m_ * d_ * n0_ > kMaxCodeBits)) throw std::invalid_argument("invalid diagonal level");
        if (cartesian_ && target.grid_level() >= 0 && n0_ > target.grid_level())
            throw std::invalid_argument("diagonal level finer than the variety grid");
    }

    // visit(level, factor codes, kernel measure)
    template <typename Visit>
    void run(Visit&& visit) {
        std::vector<CubeCode> codes(m_, 0);
        walk(0, codes, visit);
    }

private:
    template <typename Visit>
    void walk(int level, std::vector<CubeCode>& codes, Visit& visit) {
        if (++visits_ > options_.max_visits) throw BudgetError("intersection traversal exceeds the visit budget");
        CubeCode pcode = 0;
        if (target_.needs_code() || mu_.weighted()) pcode = product_code(codes, d_, level);
        if (!mu_.extra_retained(level, pcode)) return;
        if (cartesian_ && level >= n0_) {
            std::vector<CubeCode> anc(m_);
            for (int j = 0; j < m_; ++j) anc[j] = codes[j] >> (d_ * (level - n0_));
            if (!pairwise_distinct(anc)) return;
        }
        const Box box = product_box(codes, d_, level);
        if (options_.prune && !target_.hits(box, pcode, level)) return;
        Measure k = (cartesian_ && level < n0_) ? region_measure(level, codes) : target_.measure(box, pcode, level);
        visit(level, codes, k);
        if (level == n_) return;
        // children of each factor, lexicographic over factors
        std::vector<std::span<const CubeCode>> kids(m_);
        for (int j = 0; j < m_; ++j) {
            kids[j] = mu_.factor(j).children(level, codes[j]);
            if (kids[j].empty()) return;
        }
        std::vector<std::size_t> pos(m_, 0);
        for (;;) {
            for (int j = 0; j < m_; ++j) codes[j] = kids[j][pos[j]];
            walk(level + 1, codes, visit);
            int j = m_ - 1;
            while (j >= 0 && ++pos[j] == kids[j].size()) pos[j--] = 0;
            if (j < 0) break;
        }
        for (int j = 0; j < m_; ++j) codes[j] >>= d_;
    }

    // Target measure inside the off-diagonal part of a level-l product cube,
    // l < n0, summed over its level-n0 descendants.
    Measure region_measure(int level, const std::vector<CubeCode>& codes) {
        Measure total{0.0, 0.0, true};
        double var = 0.0;
        std::vector<CubeCode> sub(codes);
        auto rec = [&](auto&& self, int l) -> void {
            CubeCode pcode = target_.needs_code() ? product_code(sub, d_, l) : 0;
            const Box box = product_box(sub, d_, l);
            if (!target_.hits(box, pcode, l)) return;
            if (l == n0_) {
                if (!pairwise_distinct(sub)) return;
                const Measure k = target_.measure(box, pcode, l);
                total.value += k.value;
                var += k.std_error * k.std_error;
                total.exact = total.exact && k.exact;
                return;
            }
            const unsigned kids = 1U << d_;
            std::vector<unsigned> pos(m_, 0);
            for (;;) {
                for (int j = 0; j < m_; ++j) sub[j] = (sub[j] << d_) | pos[j];
                self(self, l + 1);
                for (int j = 0; j < m_; ++j) sub[j] >>= d_;
                int j = m_ - 1;
                while (j >= 0 && ++pos[j] == kids) pos[j--] = 0;
                if (j < 0) break;
            }
        };
        rec(rec, level);
        total.std_error = std::sqrt(var);
        return total;
    }

    const ProductMeasure& mu_;
    const Target& target_;
    int n_;
    TraversalOptions options_;
    int d_;
    int m_;
    bool cartesian_ = false;
    int n0_ = 1;
    std::size_t visits_ = 0;
};

}  // namespace

MassSeries intersection_mass(const ProductMeasure& mu, const Target& target, int n, const TraversalOptions& options) {
    MassSeries out;
    out.seed = mu.spec().seed;
    out.kernel = target.is_plane() ? (target.exact() ? "exact" : "sampled") : "cells";
    std::vector<double> sum(n + 1, 0.0), var(n + 1, 0.0);
    out.cubes.assign(n + 1, 0);
    Traversal walk(mu, target, n, options);
    walk.run([&](int level, const std::vector<CubeCode>&, const Measure& k) {
        sum[level] += k.value;
        var[level] += k.std_error * k.std_error;
        if (k.value > 0.0) ++out.cubes[level];
    });
    out.Y.resize(n + 1);
    out.se.resize(n + 1);
    for (int j = 0; j <= n; ++j) {
        const double dens = mu.density(j);
        out.Y[j] = sum[j] == 0.0 ? 0.0 : dens * sum[j];
        out.se[j] = var[j] == 0.0 ? 0.0 : dens * std::sqrt(var[j]);
    }
    return out;
}

MassSeries intersection_mass(const ProductMeasureSpec& spec, const Target& target, int n, const TraversalOptions& options) {
    return intersection_mass(ProductMeasure::sample(spec, n), target, n, options);
}

std::vector<CubeContribution> level_contributions(const ProductMeasure& mu, const Target& target, int n) {
    std::vector<CubeContribution> out;
    const double dens = mu.density(n);
    Traversal walk(mu, target, n, {});
    walk.run([&](int level, const std::vector<CubeCode>& codes, const Measure& k) {
        if (level == n && k.value > 0.0) out.push_back({codes, dens * k.value});
    });
    return out;
}

MartingaleCheck martingale_resample_check(const ProductMeasureSpec& spec, const Target& target, int n, std::size_t R,
                                          int threads) {
    if (R < 100) throw std::invalid_argument("martingale check needs R >= 100 replicates");
    if (spec.mode == ProductMode::cartesian_power && n < spec.diagonal_level)
        throw std::invalid_argument("cartesian power: martingale check needs n >= the diagonal level");
    const auto base = ProductMeasure::sample(spec, n);
    MartingaleCheck out;
    out.Y_n = intersection_mass(base, target, n).Y[n];
    std::vector<double> next(R);
    parallel_for(R, threads, [&](std::size_t r) {
        const auto key = make_key(spec.seed, {static_cast<std::uint64_t>(Domain::resample), static_cast<std::uint64_t>(n), r});
        next[r] = intersection_mass(base.regrown(n, key, n + 1), target, n + 1).Y[n + 1];
    });
    stats::Moments mom;
    for (double y : next) mom.add(y);
    out.replicates = R;
    out.mean_next = mom.mean();
    out.std_error = mom.std_error();
    const double diff = std::fabs(out.mean_next - out.Y_n);
    if (out.std_error > 0.0) out.z = diff / out.std_error;
    else out.z = diff <= 1e-12 * std::max(1.0, std::fabs(out.Y_n)) ? 0.0 : std::numeric_limits<double>::infinity();
    return out;
}

DependencyReport dependency_graph(const ProductMeasure& mu, const Target& target, int n) {
    DependencyReport rep;
    rep.level = n;
    const auto verts = level_contributions(mu, target, n);
    rep.vertices = verts.size();
    std::unordered_map<CubeCode, std::vector<std::size_t>> buckets;
    for (std::size_t v = 0; v < verts.size(); ++v) {
        auto codes = verts[v].factors;
        std::sort(codes.begin(), codes.end());
        codes.erase(std::unique(codes.begin(), codes.end()), codes.end());
        for (CubeCode c : codes) buckets[c].push_back(v);
    }
    for (const auto& [code, members] : buckets) ++rep.bucket_sizes[members.size()];
    rep.adjacency.resize(verts.size());
    for (std::size_t v = 0; v < verts.size(); ++v) {
        auto& adj = rep.adjacency[v];
        for (CubeCode c : verts[v].factors)
            for (std::size_t u : buckets[c])
                if (u != v) adj.push_back(u);
        std::sort(adj.begin(), adj.end());
        adj.erase(std::unique(adj.begin(), adj.end()), adj.end());
        rep.edges += adj.size();
        rep.max_degree = std::max(rep.max_degree, adj.size());
        ++rep.degree_histogram[adj.size()];
    }
    rep.edges /= 2;
    return rep;
}

SecondMoment second_moment_estimate(const ProductMeasureSpec& spec, const Target& target, int n, std::size_t R, int threads,
                                    std::uint64_t salt) {
    if (R < 1000) throw std::invalid_argument("second moment estimate needs R >= 1000 replicates");
    std::vector<double> ys(R);
    parallel_for(R, threads, [&](std::size_t r) {
        ProductMeasureSpec s = spec;
        s.seed = make_key(spec.seed, {static_cast<std::uint64_t>(Domain::replicate), salt, r});
        ys[r] = intersection_mass(s, target, n).Y[n];
    });
    stats::Moments mom;
    std::size_t positive = 0;
    for (double y : ys) {
        mom.add(y);
        if (y > 0.0) ++positive;
    }
    SecondMoment out;
    out.replicates = R;
    out.mean = mom.mean();
    out.second = mom.second_moment();
    out.mean_se = mom.std_error();
    out.ratio = out.mean > 0.0 ? out.second / (out.mean * out.mean) : std::numeric_limits<double>::infinity();
    out.paley_zygmund = out.second > 0.0 ? out.mean * out.mean / out.second : 0.0;
    out.survival = static_cast<double>(positive) / static_cast<double>(R);
    return out;
}

HolderTable holder_modulus(const ProductMeasure& mu, std::span<const Target> grid,
                           const std::vector<std::vector<double>>& distance, int n, std::span<const double> gammas,
                           int threads) {
    if (grid.size() < 2) throw std::invalid_argument("holder modulus needs at least two grid targets");
    if (distance.size() != grid.size()) throw std::invalid_argument("distance matrix does not match the grid");
    for (std::size_t i = 0; i < grid.size(); ++i)
        for (std::size_t k = i + 1; k < grid.size(); ++k)
            if (!(distance[i][k] > 0.0)) throw std::invalid_argument("grid targets must be pairwise at positive distance");
    HolderTable t;
    t.gammas.assign(gammas.begin(), gammas.end());
    t.series.resize(grid.size());
    parallel_for(grid.size(), threads, [&](std::size_t i) {
        t.series[i] = intersection_mass(mu, grid[i], n);
        t.series[i].param_id = std::to_string(i);
    });
    for (double g : gammas) {
        double sup = 0.0;
        for (std::size_t i = 0; i < grid.size(); ++i)
            for (std::size_t k = i + 1; k < grid.size(); ++k)
                sup = std::max(sup, std::fabs(t.series[i].Y[n] - t.series[k].Y[n]) / std::pow(distance[i][k], g));
        t.sup_ratio.push_back(sup);
        std::vector<double> growth(n + 1, 0.0);
        for (int j = 0; j <= n; ++j)
            for (const auto& s : t.series) growth[j] = std::max(growth[j], s.Y[j] * std::pow(2.0, -g * j));
        t.growth.push_back(std::move(growth));
    }
    return t;
}

}  // namespace fracperc
