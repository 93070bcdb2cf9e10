#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fracperc/dyadic.hpp"
#include "fracperc/polynomial.hpp"

namespace fracperc {

inline constexpr double kRankTolerance = 1e-8;
inline constexpr double kOrthonormalTolerance = 1e-10;

// Axis-aligned half-open box [lo, hi).
struct Box {
    Eigen::VectorXd lo;
    Eigen::VectorXd hi;

    static Box unit(int dim);
    static Box from_cube(const DyadicCube& q);
    int dim() const { return static_cast<int>(lo.size()); }
    double volume() const;
    Eigen::VectorXd center() const { return 0.5 * (lo + hi); }
    double half_diagonal() const { return 0.5 * (hi - lo).norm(); }
    std::vector<Interval> intervals() const;
};

// k-dimensional affine subspace of R^M. The basis rows are orthonormal and
// the offset is the point of the plane nearest the origin.
class AffinePlane {
public:
    AffinePlane() = default;
    // Rows of `directions` span the plane; they are orthonormalized, and a
    // rank-deficient set is rejected.
    AffinePlane(const Eigen::MatrixXd& directions, const Eigen::VectorXd& point);
    static AffinePlane linear(const Eigen::MatrixXd& directions);
    // {x : normal . x = c}
    static AffinePlane hyperplane(const Eigen::VectorXd& normal, double c);

    int ambient() const { return static_cast<int>(offset_.size()); }
    int dim() const { return static_cast<int>(basis_.rows()); }
    const Eigen::MatrixXd& basis() const { return basis_; }
    const Eigen::VectorXd& offset() const { return offset_; }
    // Orthonormal rows spanning the orthogonal complement of the directions.
    Eigen::MatrixXd complement() const;
    Eigen::MatrixXd projector() const { return basis_.transpose() * basis_; }
    Eigen::VectorXd project(const Eigen::VectorXd& x) const;
    double distance(const Eigen::VectorXd& x) const { return (x - project(x)).norm(); }

private:
    Eigen::MatrixXd basis_;   // k x M
    Eigen::VectorXd offset_;  // M
};

// d(V, W) = ||pi_V - pi_W||_2 + |a_V - a_W| with a the offsets above.
double plane_distance(const AffinePlane& v, const AffinePlane& w);

// Text form "k o_1 ... o_M; b_11 ... b_1M; ...; b_k1 ... b_kM".
std::string format_plane(const AffinePlane& v);
AffinePlane parse_plane(const std::string& text);

// All min(k, l) principal angles between the direction spaces, ascending.
std::vector<double> principal_angles(const AffinePlane& v, const AffinePlane& w);
double principal_angle(const AffinePlane& v, const AffinePlane& w);

struct KernelSettings {
    std::size_t mc_samples = std::size_t{1} << 16;  // planes with 1 < k < M-1
    double epsilon_factor = 0.125;                  // coarea band width / side
    std::size_t coarea_samples = std::size_t{1} << 16;
    int subdivision_levels = 6;
};

struct Measure {
    double value = 0.0;
    double std_error = 0.0;
    bool exact = true;
};

// H^k(V cap box).
Measure plane_cube_measure(const AffinePlane& v, const Box& box, const KernelSettings& settings = {});
Measure plane_cube_measure(const AffinePlane& v, const DyadicCube& q, const KernelSettings& settings = {});
// Whether V meets the closed box.
bool plane_hits_box(const AffinePlane& v, const Box& box);

struct VarietyMeasure {
    double value = 0.0;        // coarea estimate
    double std_error = 0.0;
    double subdivision = 0.0;  // tangent-plane subdivision estimate
    double box_count = 0.0;    // raw hit count times side^(M-q)
    std::size_t hit_cells = 0;
};

// H^(M-q)(Z_P cap box). epsilon <= 0 selects epsilon_factor * side.
VarietyMeasure variety_cube_measure(const PolynomialMap& p, const Box& box, double epsilon = 0.0,
                                    const KernelSettings& settings = {});
VarietyMeasure variety_cube_measure(const PolynomialMap& p, const DyadicCube& q, double epsilon = 0.0,
                                    const KernelSettings& settings = {});

// Interval test: false only if P certainly has no zero in the closed box.
bool variety_may_hit(const PolynomialMap& p, const Box& box);

// Subdivision estimate over `box` refined to cells of side 2^-level, each hit
// cell contributing the measure of the tangent plane at its foot point.
double variety_subdivision_measure(const PolynomialMap& p, const Box& box, int level,
                                   std::size_t* hit_cells = nullptr);

// Per-cell measures of Z_P on the level-L grid of [0,1]^M, stored by Morton
// code with prefix sums. Sums over any coarser cube are exactly additive.
class VarietyCells {
public:
    VarietyCells(const PolynomialMap& p, int level);
    int level() const { return level_; }
    int dim() const { return dim_; }
    std::size_t size() const { return codes_.size(); }
    double total() const { return prefix_.back(); }
    double measure(const DyadicCube& q) const;
    double measure(CubeCode code, int level) const;

private:
    int level_;
    int dim_;
    std::vector<CubeCode> codes_;
    std::vector<double> prefix_;
};

struct Tangent {
    bool regular = false;
    int rank = 0;
    std::optional<AffinePlane> plane;  // ker DP(x) through x, when regular
};
Tangent variety_tangent(const PolynomialMap& p, std::span<const double> x);

// Damped Newton projection (minimum-norm steps) onto Z_P.
std::optional<Eigen::VectorXd> project_to_variety(const PolynomialMap& p, const Eigen::VectorXd& start,
                                                  int max_iterations = 60);

// H^I and H^{I,j,i} in R^{md}; I is a bitmask over the m blocks.
AffinePlane coordinate_plane(int m, int d, std::uint32_t I, int j = -1, int i = -1);

struct TransversalityEntry {
    int plane = 0;         // index into the checked list
    std::uint32_t I = 0;   // bitmask
    int j = -1;            // -1 for H^I itself
    int i = -1;
    double angle = 0.0;
    bool pass = false;
};

struct TransversalityReport {
    std::vector<TransversalityEntry> entries;
    double min_angle = 0.0;
    bool pass = false;
};

TransversalityReport transversality_check(std::span<const AffinePlane> planes, int m, int d, double c);

// Sufficient gradient criterion at a point a in R^{md}: for every block j the
// q vectors dP_i/dx_j(a) are independent (d = q), or stay independent after
// adding any canonical e_k (d > q). Empty when q > d.
std::optional<bool> gradient_transversality(const PolynomialMap& p, std::span<const double> a, int m, int d);

// Deterministic low-discrepancy points in [0,1)^dim.
class SobolPoints {
public:
    explicit SobolPoints(int dim);
    ~SobolPoints();
    void next(std::span<double> out);

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
    int dim_;
};

}  // namespace fracperc
