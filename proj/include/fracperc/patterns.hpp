#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fracperc/geometry.hpp"
#include "fracperc/percolation.hpp"
#include "fracperc/polynomial.hpp"
#include "fracperc/stats.hpp"

namespace fracperc {

enum class Family { homothetic, translate, distance, angle, volume, isometric, triangle, polygon };

const char* to_string(Family f);
Family parse_family(const std::string& name);

// A class of point configurations. Points are stored flattened, m * d values.
//   homothetic, translate: points = the pattern S
//   distance: lambda = the distance
//   angle:    lambda = cosine of the angle at the middle point
//   volume:   lambda = simplex volume v (m = d + 1)
//   isometric: points = the template triangle (d = 2)
//   triangle: a = |x3-x1| / |x2-x1|, b = |x3-x2| / |x2-x1|
//   polygon:  points = template vertices, no three collinear (d = 2)
struct ConfigDescriptor {
    Family family = Family::distance;
    int d = 1;
    int m = 2;
    std::vector<double> points;
    double lambda = 0.0;
    double a = 0.0;
    double b = 0.0;

    bool scale_invariant() const;
    bool is_plane_family() const { return family == Family::homothetic || family == Family::translate; }
    std::span<const double> point(int j) const { return {points.data() + j * d, static_cast<std::size_t>(d)}; }
    // Lengths multiplied by `factor` (identity for scale-invariant families).
    ConfigDescriptor scaled(double factor) const;
    // Throws std::invalid_argument on inconsistent shapes or parameters.
    void validate() const;

    // "family=distance d=2 lambda=0.5"
    std::string to_string() const;
    // Everything but the family, for CSV params columns.
    std::string params() const;
    static ConfigDescriptor parse(const std::string& text);

    static ConfigDescriptor homothetic(int d, std::vector<double> points);
    static ConfigDescriptor translate(int d, std::vector<double> points);
    static ConfigDescriptor distance(int d, double lambda);
    static ConfigDescriptor angle(int d, double cosine);
    static ConfigDescriptor volume(int d, double v);
    static ConfigDescriptor isometric(std::vector<double> points);
    static ConfigDescriptor triangle(int d, double a, double b);
    static ConfigDescriptor polygon(std::vector<double> points);
};

struct ThresholdTable {
    Family family = Family::distance;
    int d = 1;
    int m = 2;
    double critical_s = 0.0;  // existence of the configuration class
    double relative_s = 0.0;  // positive-measure subsets; NaN when not stated
    bool applicable = true;   // the statement's restrictions on d and m hold

    double critical_p() const;  // 2^(s_c - d)
    double relative_p() const;
};
ThresholdTable threshold_table(const ConfigDescriptor& desc);

PolynomialMap configuration_polynomial(const ConfigDescriptor& desc);
AffinePlane configuration_plane(const ConfigDescriptor& desc);
// Side conditions that the polynomial alone does not impose (angle sign,
// polygon orientation). Points are flattened, m * d.
bool satisfies_side_conditions(const ConfigDescriptor& desc, std::span<const double> x);

struct DetectionOptions {
    double C = 0.0;          // tolerance = C 2^-n; <= 0 selects sqrt(d)
    double min_scale = 0.0;  // scale-invariant families: smallest pairwise distance floor
    std::size_t max_visits = std::size_t{1} << 26;
    bool prune = true;       // false: visit every tuple down to level n
};

struct Witness {
    std::vector<double> params;    // (a, b) or b for plane families, else the points
    std::vector<CubeCode> cubes;   // one level-n cube per point
    std::vector<double> points;    // m * d
};

struct DetectionResult {
    bool present = false;
    std::optional<Witness> witness;
    double tolerance = 0.0;
    int n = 0;
    std::size_t visits = 0;
};

// `cubes` is the sorted Morton code list of A_n.
DetectionResult detect_configuration(std::span<const CubeCode> cubes, int n, const ConfigDescriptor& desc,
                                     const DetectionOptions& options = {});
DetectionResult detect_configuration(const PercolationTree& tree, int n, const ConfigDescriptor& desc,
                                     const DetectionOptions& options = {});

// Calls `visit` for every cube tuple that carries a witness, in search order.
// Returning false from `visit` stops the search. Returns the number visited.
std::size_t enumerate_witnesses(std::span<const CubeCode> cubes, int n, const ConfigDescriptor& desc,
                                const DetectionOptions& options, const std::function<bool(const Witness&)>& visit);

// Checks a witness against A_n, the tolerance and the defining equations.
bool verify_witness(std::span<const CubeCode> cubes, int n, const ConfigDescriptor& desc,
                    const DetectionOptions& options, const Witness& witness);

double detection_tolerance(const ConfigDescriptor& desc, int n, const DetectionOptions& options);

// --- realized values ------------------------------------------------------

enum class Functional { distance, angle, volume };
const char* to_string(Functional f);
Functional parse_functional(const std::string& name);

// Union of closed intervals, sorted and disjoint.
using IntervalSet = std::vector<stats::Interval>;
IntervalSet merge_intervals(std::vector<stats::Interval> pieces);
bool covers(const IntervalSet& set, double lo, double hi);
double total_length(const IntervalSet& set);

// Values of the functional over surviving cube tuples, each widened by the
// range over the cubes. Distances use an FFT autocorrelation of A_n.
IntervalSet realized_value_set(std::span<const CubeCode> cubes, int d, int n, Functional f,
                               std::size_t max_tuples = std::size_t{1} << 24);

// --- experiments ----------------------------------------------------------

struct SweepOptions {
    Variant variant = Variant::surviving;
    bool coupled = false;
    std::uint64_t seed = 0;
    int threads = 1;
    DetectionOptions detection{};
    Budget budget{};
};

struct SweepRow {
    double p = 0.0;
    std::size_t present = 0;
    std::size_t replicates = 0;
    double frequency = 0.0;
    stats::Interval ci{};
};

struct SweepResult {
    std::vector<SweepRow> rows;
    std::vector<std::vector<std::uint8_t>> presence;  // [replicate][p index]
    bool monotone = true;  // every replicate nondecreasing in p (meaningful when coupled)
};

// Replicate r at p index i uses tree seed make_key(seed, {replicate, i, r});
// coupled mode slices one field per replicate, make_key(seed, {replicate, r}).
SweepResult threshold_sweep(const ConfigDescriptor& desc, std::span<const double> p_grid, int n, std::size_t R,
                            const SweepOptions& options = {});
// Pieces of a sweep with the same seeding, for callers that emit rows as
// they go. Both run replicates on options.threads workers.
std::vector<std::uint8_t> sweep_column(const ConfigDescriptor& desc, double p, std::size_t p_index, int n,
                                       std::size_t r_begin, std::size_t r_end, const SweepOptions& options);
std::vector<std::vector<std::uint8_t>> coupled_rows(const ConfigDescriptor& desc, std::span<const double> p_grid,
                                                    int n, std::size_t r_begin, std::size_t r_end,
                                                    const SweepOptions& options);
SweepRow sweep_row(double p, std::size_t present, std::size_t replicates);
void check_sweep_grid(const ConfigDescriptor& desc, std::span<const double> p_grid, const SweepOptions& options);

struct ParameterDimension {
    std::vector<int> levels;
    std::vector<std::size_t> counts;  // grid boxes of side 2^-j holding a witness
    double slope = 0.0;
    double predicted = 0.0;           // m(s - d) + d + 1
    std::size_t witnesses = 0;
};
// Box counts of {(a, b) : aS + b within tolerance of A_n} at scales 2^-j, j in [j_lo, j_hi].
ParameterDimension pattern_parameter_dimension(const PercolationTree& tree, const ConfigDescriptor& desc, int n,
                                               int j_lo, int j_hi, const DetectionOptions& options = {});

struct PercolationDimensionResult {
    std::vector<double> p_grid;
    std::vector<double> frequency;
    std::vector<stats::Interval> ci;
    double p_star = 0.0;     // midpoint of the steepest increase
    double dimension = 0.0;  // d - s(d, p*) = -log2 p*
};
// Probability that an independent percolation retains a level-n cube of B.
PercolationDimensionResult percolation_dimension_test(std::span<const CubeCode> B, int d, int n,
                                                      std::span<const double> p_grid, std::size_t R,
                                                      std::uint64_t seed, int threads = 1);
// Level-n cubes meeting the segment from a to b.
std::vector<CubeCode> segment_cubes(std::span<const double> a, std::span<const double> b, int n);

enum class Removal { random, greedy };
const char* to_string(Removal r);
Removal parse_removal(const std::string& name);

struct StressResult {
    std::size_t present = 0;
    std::size_t replicates = 0;
    double frequency = 0.0;
    stats::Interval ci{};
    std::size_t before = 0;  // replicates with the configuration before removal
};
// Removes ceil(f N_n) level-n cubes from A_n and re-runs detection.
bool stress_once(std::span<const CubeCode> cubes, int n, const ConfigDescriptor& desc, double f, Removal strategy,
                 std::uint64_t key, const DetectionOptions& options = {},
                 std::size_t max_tuples = std::size_t{1} << 22);
StressResult subset_stress_test(const GaltonWatsonLaw& law, Variant variant, const ConfigDescriptor& desc, double f,
                                Removal strategy, int n, std::size_t R, std::uint64_t seed, int threads = 1,
                                const DetectionOptions& options = {});

using TreeEvent = std::function<bool(const PercolationTree&, int)>;

// Named increasing events: "always", "left" / "right" (A_n meets the lower /
// upper half along axis 0), "count:K" (N_n >= K), "cube:L:i1,...,id" (that
// level-L cube is retained).
TreeEvent parse_event(const std::string& text, int d);

struct HarrisResult {
    double p1 = 0.0;
    double p2 = 0.0;
    double p12 = 0.0;
    stats::Interval ci1{}, ci2{}, ci12{};
    double margin = 0.0;  // p12 - (1 - q) p1 p2
    double sigma = 0.0;   // delta-method standard error of the margin
    bool violation = false;
    std::size_t replicates = 0;
};
// Throws std::invalid_argument when either event fails the superset check.
HarrisResult harris_check(const TreeEvent& c1, const TreeEvent& c2, const GaltonWatsonLaw& law, Variant variant,
                          int n, std::size_t R, std::uint64_t seed, int threads = 1);
bool check_monotone(const TreeEvent& event, int d, int n, std::uint64_t seed, int pairs = 100);

struct BoxDimension {
    std::vector<int> levels;
    std::vector<double> log_counts;
    double slope = 0.0;
};
BoxDimension box_dimension_estimate(const PercolationTree& tree, int j_lo, int j_hi);

}  // namespace fracperc
