#include "fracperc/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include <boost/random/sobol.hpp>

#include "fracperc/errors.hpp"

namespace fracperc {

// --- boxes

Box Box::unit(int dim) { return {Eigen::VectorXd::Zero(dim), Eigen::VectorXd::Ones(dim)}; }

Box Box::from_cube(const DyadicCube& q) {
    Box b{Eigen::VectorXd(q.dim()), Eigen::VectorXd(q.dim())};
    for (int a = 0; a < q.dim(); ++a) {
        b.lo[a] = q.lower(a);
        b.hi[a] = q.upper(a);
    }
    return b;
}

double Box::volume() const { return (hi - lo).prod(); }

std::vector<Interval> Box::intervals() const {
    std::vector<Interval> r(dim());
    for (int a = 0; a < dim(); ++a) r[a] = {lo[a], hi[a]};
    return r;
}

// --- Sobol points

struct SobolPoints::Impl {
    explicit Impl(int dim) : engine(static_cast<std::size_t>(dim)) {}
    boost::random::sobol engine;
};

SobolPoints::SobolPoints(int dim) : impl_(std::make_unique<Impl>(dim)), dim_(dim) {}
SobolPoints::~SobolPoints() = default;

void SobolPoints::next(std::span<double> out) {
    for (int a = 0; a < dim_; ++a) out[a] = std::ldexp(static_cast<double>(impl_->engine()), -64);
}

// --- planes

namespace {

// Modified Gram-Schmidt with one reorthogonalization pass. Rows whose
// residual falls below the rank tolerance are reported as degenerate.
Eigen::MatrixXd orthonormal_rows(const Eigen::MatrixXd& rows) {
    Eigen::MatrixXd q(rows.rows(), rows.cols());
    for (Eigen::Index r = 0; r < rows.rows(); ++r) {
        Eigen::VectorXd v = rows.row(r).transpose();
        const double norm0 = v.norm();
        if (!(norm0 > 0.0) || !std::isfinite(norm0)) throw std::invalid_argument("degenerate plane basis");
        for (int pass = 0; pass < 2; ++pass)
            for (Eigen::Index k = 0; k < r; ++k) v -= q.row(k).dot(v) * q.row(k).transpose();
        const double norm = v.norm();
        if (norm < kRankTolerance * norm0) throw std::invalid_argument("degenerate plane basis");
        q.row(r) = (v / norm).transpose();
    }
    return q;
}

// Greedy completion by canonical vectors; exact for coordinate subspaces.
Eigen::MatrixXd complement_rows(const Eigen::MatrixXd& basis, int ambient) {
    const int k = static_cast<int>(basis.rows());
    Eigen::MatrixXd out(ambient - k, ambient);
    Eigen::MatrixXd all(ambient, ambient);
    all.topRows(k) = basis;
    for (int r = k; r < ambient; ++r) {
        Eigen::VectorXd best;
        double best_norm = -1.0;
        for (int a = 0; a < ambient; ++a) {
            Eigen::VectorXd v = Eigen::VectorXd::Unit(ambient, a);
            for (int pass = 0; pass < 2; ++pass)
                for (int s = 0; s < r; ++s) v -= all.row(s).dot(v) * all.row(s).transpose();
            const double n = v.norm();
            if (n > best_norm + 1e-12) {
                best_norm = n;
                best = v;
            }
        }
        all.row(r) = (best / best_norm).transpose();
        out.row(r - k) = all.row(r);
    }
    return out;
}

}  // namespace

AffinePlane::AffinePlane(const Eigen::MatrixXd& directions, const Eigen::VectorXd& point) {
    if (directions.rows() > 0 && directions.cols() != point.size())
        throw std::invalid_argument("plane directions and point have different ambient dimension");
    if (point.size() < 1) throw std::invalid_argument("plane needs ambient dimension >= 1");
    if (directions.rows() > point.size()) throw std::invalid_argument("plane dimension exceeds ambient dimension");
    basis_ = directions.rows() > 0 ? orthonormal_rows(directions) : Eigen::MatrixXd(0, point.size());
    offset_ = point - basis_.transpose() * (basis_ * point);
}

AffinePlane AffinePlane::linear(const Eigen::MatrixXd& directions) {
    return AffinePlane(directions, Eigen::VectorXd::Zero(directions.cols()));
}

AffinePlane AffinePlane::hyperplane(const Eigen::VectorXd& normal, double c) {
    const double norm = normal.norm();
    if (!(norm > 0.0)) throw std::invalid_argument("hyperplane normal must be nonzero");
    Eigen::MatrixXd n = (normal / norm).transpose();
    Eigen::MatrixXd dirs = complement_rows(n, static_cast<int>(normal.size()));
    return AffinePlane(dirs, normal * (c / (norm * norm)));
}

Eigen::MatrixXd AffinePlane::complement() const { return complement_rows(basis_, ambient()); }

Eigen::VectorXd AffinePlane::project(const Eigen::VectorXd& x) const {
    return offset_ + basis_.transpose() * (basis_ * (x - offset_));
}

double plane_distance(const AffinePlane& v, const AffinePlane& w) {
    if (v.ambient() != w.ambient()) throw std::invalid_argument("planes live in different ambient spaces");
    Eigen::MatrixXd diff = v.projector() - w.projector();
    const double op = diff.size() ? Eigen::JacobiSVD<Eigen::MatrixXd>(diff).singularValues()(0) : 0.0;
    return op + (v.offset() - w.offset()).norm();
}

std::string format_plane(const AffinePlane& v) {
    std::ostringstream out;
    out << std::setprecision(17) << v.dim();
    for (int a = 0; a < v.ambient(); ++a) out << ' ' << v.offset()[a];
    for (int r = 0; r < v.dim(); ++r) {
        out << ';';
        for (int a = 0; a < v.ambient(); ++a) out << ' ' << v.basis()(r, a);
    }
    return out.str();
}

AffinePlane parse_plane(const std::string& text) {
    std::vector<std::vector<double>> parts;
    std::istringstream in(text);
    for (std::string seg; std::getline(in, seg, ';');) {
        std::istringstream ss(seg);
        std::vector<double> values;
        for (std::string tok; ss >> tok;) {
            std::size_t used = 0;
            values.push_back(std::stod(tok, &used));
            if (used != tok.size()) throw std::invalid_argument("bad number '" + tok + "' in plane");
        }
        parts.push_back(std::move(values));
    }
    if (parts.empty() || parts[0].size() < 2) throw std::invalid_argument("plane text needs 'k offset; rows'");
    const double kd = parts[0][0];
    const int k = static_cast<int>(kd);
    const int M = static_cast<int>(parts[0].size()) - 1;
    if (kd != k || k < 0 || k > M || static_cast<int>(parts.size()) != k + 1)
        throw std::invalid_argument("plane text: dimension does not match the number of basis rows");
    Eigen::VectorXd offset = Eigen::Map<Eigen::VectorXd>(parts[0].data() + 1, M);
    Eigen::MatrixXd rows(k, M);
    for (int r = 0; r < k; ++r) {
        if (static_cast<int>(parts[r + 1].size()) != M) throw std::invalid_argument("plane text: basis row length mismatch");
        for (int a = 0; a < M; ++a) rows(r, a) = parts[r + 1][a];
    }
    return AffinePlane(rows, offset);
}

// --- principal angles

std::vector<double> principal_angles(const AffinePlane& v, const AffinePlane& w) {
    if (v.ambient() != w.ambient()) throw std::invalid_argument("planes live in different ambient spaces");
    const Eigen::MatrixXd& A = v.basis();
    const Eigen::MatrixXd& B = w.basis();
    const int count = static_cast<int>(std::min(A.rows(), B.rows()));
    if (count == 0) return {};
    Eigen::MatrixXd C = A * B.transpose();
    Eigen::VectorXd cosines = Eigen::JacobiSVD<Eigen::MatrixXd>(C).singularValues();  // descending
    // Sines from the part of the smaller basis orthogonal to the larger one.
    const Eigen::MatrixXd& S = A.rows() <= B.rows() ? A : B;
    const Eigen::MatrixXd& L = A.rows() <= B.rows() ? B : A;
    Eigen::MatrixXd R = S - (S * L.transpose()) * L;
    Eigen::VectorXd sines = Eigen::JacobiSVD<Eigen::MatrixXd>(R).singularValues();
    std::vector<double> s(sines.data(), sines.data() + sines.size());
    std::sort(s.begin(), s.end());
    std::vector<double> angles(count);
    for (int i = 0; i < count; ++i) {
        const double c = std::min(1.0, cosines[i]);
        const double si = std::min(1.0, s[i]);
        angles[i] = si < std::numbers::sqrt2 / 2 ? std::asin(si) : std::acos(c);
    }
    std::sort(angles.begin(), angles.end());
    return angles;
}

double principal_angle(const AffinePlane& v, const AffinePlane& w) {
    const auto angles = principal_angles(v, w);
    int shared = 0;
    for (double a : angles)
        if (a <= kRankTolerance) ++shared;
    const int generic = std::max(0, v.dim() + w.dim() - v.ambient());
    if (shared > generic) return 0.0;
    // V_0 or W_0 trivial: the infimum is over an empty set.
    if (shared >= static_cast<int>(angles.size())) return 1.0;
    return angles[shared];
}

// --- plane kernels

namespace {

Measure line_measure(const AffinePlane& v, const Box& box) {
    const Eigen::VectorXd& o = v.offset();
    const auto u = v.basis().row(0);
    double t0 = -std::numeric_limits<double>::infinity();
    double t1 = std::numeric_limits<double>::infinity();
    for (int a = 0; a < box.dim(); ++a) {
        if (std::fabs(u[a]) <= 1e-14) {
            if (!(box.lo[a] <= o[a] && o[a] < box.hi[a])) return {0.0, 0.0, true};
            continue;
        }
        double ta = (box.lo[a] - o[a]) / u[a];
        double tb = (box.hi[a] - o[a]) / u[a];
        if (ta > tb) std::swap(ta, tb);
        t0 = std::max(t0, ta);
        t1 = std::min(t1, tb);
    }
    return {std::max(0.0, t1 - t0), 0.0, true};
}

// Section of a box by {n.x = c}: Vol(box) times the density of n.X at c for X
// uniform on the box, with the density of a sum of uniforms evaluated by
// inclusion-exclusion over the vertices. Axes whose width |n_i| h_i is tiny
// next to the widest are replaced by their mean, which keeps the
// alternating sum well conditioned.
Measure hyperplane_measure(const Eigen::VectorXd& n, double c, const Box& box) {
    const int M = box.dim();
    std::vector<long double> widths;
    std::vector<int> axes;
    long double shift = c;
    long double base = 0.0L;
    long double scale = 1.0L;  // product of the extruded sides and 1/|n_i|
    double widest = 0.0;
    for (int a = 0; a < M; ++a) widest = std::max(widest, std::fabs(n[a]) * (box.hi[a] - box.lo[a]));
    for (int a = 0; a < M; ++a) {
        const double h = box.hi[a] - box.lo[a];
        const double w = std::fabs(n[a]) * h;
        if (w < 1e-6 * widest) {
            shift -= static_cast<long double>(n[a]) * 0.5L * (static_cast<long double>(box.lo[a]) + box.hi[a]);
            scale *= h;
            continue;
        }
        axes.push_back(a);
        widths.push_back(w);
        base += std::min(static_cast<long double>(n[a]) * box.lo[a], static_cast<long double>(n[a]) * box.hi[a]);
        scale /= std::fabs(static_cast<long double>(n[a]));
    }
    if (axes.size() == 1) {
        // n is (numerically) a coordinate normal: exact half-open test
        const int a = axes[0];
        const long double x = shift / n[a];
        if (!(box.lo[a] <= x && x < box.hi[a])) return {0.0, 0.0, true};
        return {static_cast<double>(scale), 0.0, true};
    }
    const int D = static_cast<int>(axes.size());
    long double total = 0.0L;
    for (auto w : widths) total += w;
    long double x = shift - base;
    if (x <= 0.0L || x >= total) return {0.0, 0.0, true};
    if (x > total / 2) x = total - x;  // the density is symmetric about its mean
    const long double W = *std::max_element(widths.begin(), widths.end());
    x /= W;
    std::vector<long double> t(D);
    for (int i = 0; i < D; ++i) t[i] = widths[i] / W;
    long double factorial = 1.0L;
    for (int i = 2; i < D; ++i) factorial *= i;
    long double sum = 0.0L;
    for (std::uint32_t mask = 0; mask < (1U << D); ++mask) {
        long double y = x;
        int bits = 0;
        for (int i = 0; i < D; ++i)
            if (mask >> i & 1U) {
                y -= t[i];
                ++bits;
            }
        if (y <= 0.0L) continue;
        long double term = 1.0L;
        for (int e = 0; e < D - 1; ++e) term *= y;
        sum += (bits & 1) ? -term : term;
    }
    // sum / (D-1)! is the density of sum t_i U_i times prod t_i; undo the W scaling
    long double value = scale * sum / factorial;
    for (int e = 0; e < D - 1; ++e) value *= W;
    return {static_cast<double>(std::max(0.0L, value)), 0.0, true};
}

bool inside(const Eigen::VectorXd& x, const Box& box) {
    for (int a = 0; a < box.dim(); ++a)
        if (!(box.lo[a] <= x[a] && x[a] < box.hi[a])) return false;
    return true;
}

Measure sampled_plane_measure(const AffinePlane& v, const Box& box, std::size_t samples) {
    const int k = v.dim();
    const Eigen::VectorXd center = box.center();
    const Eigen::VectorXd yc = v.basis() * (center - v.offset());
    const double dist = v.distance(center);
    const double r2 = box.half_diagonal() * box.half_diagonal() - dist * dist;
    if (r2 <= 0.0) return {0.0, 0.0, false};
    const double r = std::sqrt(r2);
    SobolPoints sobol(k);
    std::vector<double> u(k);
    Eigen::VectorXd y(k);
    std::size_t hits = 0;
    for (std::size_t s = 0; s < samples; ++s) {
        sobol.next(u);
        for (int i = 0; i < k; ++i) y[i] = yc[i] + r * (2.0 * u[i] - 1.0);
        if (inside(v.offset() + v.basis().transpose() * y, box)) ++hits;
    }
    const double area = std::pow(2.0 * r, k);
    const double f = static_cast<double>(hits) / static_cast<double>(samples);
    return {area * f, area * std::sqrt(f * (1.0 - f) / static_cast<double>(samples)), false};
}

}  // namespace

Measure plane_cube_measure(const AffinePlane& v, const Box& box, const KernelSettings& settings) {
    const int M = v.ambient();
    const int k = v.dim();
    if (box.dim() != M) throw std::invalid_argument("box and plane have different ambient dimension");
    if (k == 0) throw std::invalid_argument("0-dimensional planes are not supported");
    if (k == M) return {box.volume(), 0.0, true};
    if (v.distance(box.center()) > box.half_diagonal()) return {0.0, 0.0, true};
    if (k == 1) return line_measure(v, box);
    if (k == M - 1) {
        Eigen::VectorXd n = v.complement().row(0).transpose();
        return hyperplane_measure(n, n.dot(v.offset()), box);
    }
    return sampled_plane_measure(v, box, settings.mc_samples);
}

Measure plane_cube_measure(const AffinePlane& v, const DyadicCube& q, const KernelSettings& settings) {
    return plane_cube_measure(v, Box::from_cube(q), settings);
}

bool plane_hits_box(const AffinePlane& v, const Box& box) {
    const int M = v.ambient();
    const int k = v.dim();
    if (k == M) return true;
    if (v.distance(box.center()) > box.half_diagonal() * (1 + 1e-12)) return false;
    if (k == 1) {
        const Eigen::VectorXd& o = v.offset();
        const auto u = v.basis().row(0);
        double t0 = -std::numeric_limits<double>::infinity();
        double t1 = std::numeric_limits<double>::infinity();
        for (int a = 0; a < M; ++a) {
            if (u[a] == 0.0) {
                if (o[a] < box.lo[a] || o[a] > box.hi[a]) return false;
                continue;
            }
            double ta = (box.lo[a] - o[a]) / u[a];
            double tb = (box.hi[a] - o[a]) / u[a];
            if (ta > tb) std::swap(ta, tb);
            t0 = std::max(t0, ta);
            t1 = std::min(t1, tb);
        }
        return t0 <= t1 + 1e-12 * (1 + std::fabs(t1));
    }
    if (k == M - 1) {
        Eigen::VectorXd n = v.complement().row(0).transpose();
        const double c = n.dot(v.offset());
        double lo = 0.0, hi = 0.0;
        for (int a = 0; a < M; ++a) {
            lo += std::min(n[a] * box.lo[a], n[a] * box.hi[a]);
            hi += std::max(n[a] * box.lo[a], n[a] * box.hi[a]);
        }
        const double slack = 1e-12 * (1 + std::fabs(c));
        return lo - slack <= c && c <= hi + slack;
    }
    return true;
}

// --- varieties

namespace {

double coefficient_scale(const PolynomialMap& p) {
    double scale = 0.0;
    for (const auto& c : p.components()) {
        double s = 0.0;
        for (const auto& [e, v] : c.terms()) s += v * v;
        scale = std::max(scale, std::sqrt(s));
    }
    return scale;
}

std::span<const double> as_span(const Eigen::VectorXd& x) { return {x.data(), static_cast<std::size_t>(x.size())}; }

double jacobian_factor(const Eigen::MatrixXd& J) { return std::sqrt(std::max(0.0, (J * J.transpose()).determinant())); }

// Tangent plane of Z_P near x: through the Newton foot point when it exists,
// otherwise the zero set of the linearization at x.
std::optional<AffinePlane> local_plane(const PolynomialMap& p, const Eigen::VectorXd& x) {
    const int q = p.codomain();
    if (auto foot = project_to_variety(p, x)) {
        auto t = variety_tangent(p, as_span(*foot));
        if (t.regular) return t.plane;
    }
    Eigen::MatrixXd J = p.jacobian(as_span(x));
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(J, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const auto& sv = svd.singularValues();
    if (sv.size() < q || sv[q - 1] <= kRankTolerance * std::max(sv[0], coefficient_scale(p))) return std::nullopt;
    Eigen::VectorXd point = x - svd.solve(p.evaluate(as_span(x)));
    Eigen::MatrixXd dirs = svd.matrixV().rightCols(p.ambient() - q).transpose();
    return AffinePlane(dirs, point);
}

double cell_measure(const PolynomialMap& p, const Box& cell) {
    auto plane = local_plane(p, cell.center());
    if (!plane) return 0.0;
    KernelSettings coarse;
    coarse.mc_samples = 1024;
    return plane_cube_measure(*plane, cell, coarse).value;
}

Box child_box(const Box& box, unsigned offset) {
    Box c = box;
    const Eigen::VectorXd mid = box.center();
    for (int a = 0; a < box.dim(); ++a) {
        if (offset >> a & 1U) c.lo[a] = mid[a];
        else c.hi[a] = mid[a];
    }
    return c;
}

void subdivide(const PolynomialMap& p, const Box& box, int depth, const auto& leaf) {
    if (!variety_may_hit(p, box)) return;
    if (depth == 0) {
        leaf(box);
        return;
    }
    for (unsigned j = 0; j < (1U << box.dim()); ++j) subdivide(p, child_box(box, j), depth - 1, leaf);
}

void check_regular(const PolynomialMap& p, const Box& box, std::span<const Eigen::VectorXd> probes) {
    const double side = (box.hi - box.lo).maxCoeff();
    for (const auto& x : probes) {
        auto foot = project_to_variety(p, x, 200);
        if (!foot) continue;
        bool near = true;
        for (int a = 0; a < box.dim(); ++a)
            near = near && (*foot)[a] >= box.lo[a] - 1e-9 * side && (*foot)[a] <= box.hi[a] + 1e-9 * side;
        if (near && !variety_tangent(p, as_span(*foot)).regular)
            throw SingularityError("DP is rank deficient on the zero set inside the cube");
    }
}

}  // namespace

bool variety_may_hit(const PolynomialMap& p, const Box& box) {
    const auto iv = box.intervals();
    for (const auto& e : p.enclose(iv))
        if (!e.contains_zero()) return false;
    return true;
}

double variety_subdivision_measure(const PolynomialMap& p, const Box& box, int level, std::size_t* hit_cells) {
    double total = 0.0;
    std::size_t hits = 0;
    subdivide(p, box, level, [&](const Box& cell) {
        ++hits;
        total += cell_measure(p, cell);
    });
    if (hit_cells) *hit_cells = hits;
    return total;
}

VarietyMeasure variety_cube_measure(const PolynomialMap& p, const Box& box, double epsilon, const KernelSettings& settings) {
    const int M = p.ambient();
    const int q = p.codomain();
    if (box.dim() != M) throw std::invalid_argument("box and polynomial have different ambient dimension");
    if (q < 1 || q >= M) throw std::invalid_argument("variety measure needs 1 <= q < M");
    VarietyMeasure out;
    if (!variety_may_hit(p, box)) return out;
    const double side = (box.hi - box.lo).maxCoeff();
    if (epsilon <= 0.0) epsilon = settings.epsilon_factor * side;
    // epsilon is a length; the band in P-values is scaled by the local
    // Jacobian factor so that it is about epsilon thick in space
    double gradient = 1.0;
    {
        // median over foot points of the center and the corners
        std::vector<double> factors;
        for (unsigned corner = 0; corner <= (1U << M); ++corner) {
            Eigen::VectorXd x = box.center();
            if (corner < (1U << M))
                for (int a = 0; a < M; ++a) x[a] = (corner >> a & 1U) ? box.hi[a] : box.lo[a];
            const auto foot = project_to_variety(p, x);
            if (!foot || ((foot->array() < box.lo.array() - side) || (foot->array() > box.hi.array() + side)).any()) continue;
            const double g = std::pow(jacobian_factor(p.jacobian(as_span(*foot))), 1.0 / q);
            if (g > 0.0) factors.push_back(g);
        }
        if (!factors.empty()) {
            std::nth_element(factors.begin(), factors.begin() + factors.size() / 2, factors.end());
            gradient = factors[factors.size() / 2];
        }
    }
    const double band = epsilon * gradient;
    const double half = 0.5 * band;
    const double norm = std::pow(band, -q);

    SobolPoints sobol(M);
    std::vector<double> u(M);
    Eigen::VectorXd x(M);
    std::vector<Eigen::VectorXd> probes;
    double sum = 0.0, sum2 = 0.0;
    const std::size_t N = settings.coarea_samples;
    for (std::size_t s = 0; s < N; ++s) {
        sobol.next(u);
        for (int a = 0; a < M; ++a) x[a] = box.lo[a] + u[a] * (box.hi[a] - box.lo[a]);
        const Eigen::VectorXd v = p.evaluate(as_span(x));
        if ((v.array().abs() > half).any()) continue;
        const double f = jacobian_factor(p.jacobian(as_span(x))) * norm;
        sum += f;
        sum2 += f * f;
        if (probes.size() < 8) probes.push_back(x);
    }
    check_regular(p, box, probes);
    const double vol = box.volume();
    const double mean = sum / static_cast<double>(N);
    const double var = std::max(0.0, sum2 / static_cast<double>(N) - mean * mean);
    out.value = vol * mean;
    out.std_error = vol * std::sqrt(var / static_cast<double>(N));

    out.subdivision = variety_subdivision_measure(p, box, settings.subdivision_levels, &out.hit_cells);
    out.box_count = static_cast<double>(out.hit_cells) * std::pow(std::ldexp(side, -settings.subdivision_levels), M - q);
    return out;
}

VarietyMeasure variety_cube_measure(const PolynomialMap& p, const DyadicCube& q, double epsilon,
                                    const KernelSettings& settings) {
    return variety_cube_measure(p, Box::from_cube(q), epsilon, settings);
}

VarietyCells::VarietyCells(const PolynomialMap& p, int level) : level_(level), dim_(p.ambient()) {
    if (level < 0 || dim_ * level > kMaxCodeBits) throw BudgetError("variety grid level too deep for cube codes");
    std::vector<double> values;
    // Depth-first in child order visits codes in increasing Morton order.
    auto walk = [&](auto&& self, const Box& box, CubeCode code, int depth) -> void {
        if (!variety_may_hit(p, box)) return;
        if (depth == level_) {
            const double m = cell_measure(p, box);
            if (m > 0.0) {
                codes_.push_back(code);
                values.push_back(m);
            }
            return;
        }
        for (unsigned j = 0; j < (1U << dim_); ++j) self(self, child_box(box, j), (code << dim_) | j, depth + 1);
    };
    walk(walk, Box::unit(dim_), 0, 0);
    prefix_.assign(values.size() + 1, 0.0);
    long double acc = 0.0L;
    for (std::size_t i = 0; i < values.size(); ++i) {
        acc += values[i];
        prefix_[i + 1] = static_cast<double>(acc);
    }
}

double VarietyCells::measure(CubeCode code, int level) const {
    if (level > level_) throw std::invalid_argument("cube finer than the variety grid");
    const auto [first, last] = descendant_range(code, dim_, level, level_);
    const auto lo = std::lower_bound(codes_.begin(), codes_.end(), first) - codes_.begin();
    const auto hi = std::lower_bound(codes_.begin(), codes_.end(), last) - codes_.begin();
    return prefix_[hi] - prefix_[lo];
}

double VarietyCells::measure(const DyadicCube& q) const {
    if (q.dim() != dim_) throw std::invalid_argument("cube has the wrong dimension");
    return measure(encode(q), q.level);
}

Tangent variety_tangent(const PolynomialMap& p, std::span<const double> x) {
    const int q = p.codomain();
    const int M = p.ambient();
    Eigen::MatrixXd J = p.jacobian(x);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(J, Eigen::ComputeFullV);
    const auto& sv = svd.singularValues();
    const double tol = kRankTolerance * std::max(sv.size() ? sv[0] : 0.0, coefficient_scale(p));
    Tangent t;
    for (Eigen::Index i = 0; i < sv.size(); ++i)
        if (sv[i] > tol) ++t.rank;
    t.regular = t.rank == q;
    if (t.regular && q < M) {
        Eigen::MatrixXd dirs = svd.matrixV().rightCols(M - q).transpose();
        t.plane = AffinePlane(dirs, Eigen::Map<const Eigen::VectorXd>(x.data(), M));
    }
    return t;
}

std::optional<Eigen::VectorXd> project_to_variety(const PolynomialMap& p, const Eigen::VectorXd& start, int max_iterations) {
    Eigen::VectorXd x = start;
    Eigen::VectorXd v = p.evaluate(as_span(x));
    for (int it = 0; it < max_iterations; ++it) {
        const double tol = 1e-13 * (1.0 + p.magnitude(as_span(x)).maxCoeff());
        Eigen::MatrixXd J = p.jacobian(as_span(x));
        Eigen::VectorXd step = J.completeOrthogonalDecomposition().solve(v);
        if (!step.allFinite()) return std::nullopt;
        double t = 1.0;
        Eigen::VectorXd next = x - step;
        Eigen::VectorXd nv = p.evaluate(as_span(next));
        for (int h = 0; h < 20 && nv.norm() > v.norm(); ++h) {
            t *= 0.5;
            next = x - t * step;
            nv = p.evaluate(as_span(next));
        }
        const double moved = (t * step).norm();
        x = next;
        v = nv;
        if (v.norm() <= tol && moved <= 1e-12 * (1.0 + x.norm())) return x;
    }
    return std::nullopt;
}

// --- transversality

AffinePlane coordinate_plane(int m, int d, std::uint32_t I, int j, int i) {
    std::vector<int> axes;
    for (int b = 0; b < m; ++b) {
        if (I >> b & 1U) continue;
        for (int a = 0; a < d; ++a)
            if (!(b == j && a == i)) axes.push_back(b * d + a);
    }
    Eigen::MatrixXd rows = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(axes.size()), m * d);
    for (std::size_t r = 0; r < axes.size(); ++r) rows(static_cast<Eigen::Index>(r), axes[r]) = 1.0;
    return AffinePlane::linear(rows);
}

TransversalityReport transversality_check(std::span<const AffinePlane> planes, int m, int d, double c) {
    TransversalityReport report;
    report.min_angle = std::numbers::pi / 2;
    for (std::size_t k = 0; k < planes.size(); ++k) {
        if (planes[k].ambient() != m * d) throw std::invalid_argument("plane ambient dimension must be m*d");
        AffinePlane dir = AffinePlane::linear(planes[k].basis());
        for (std::uint32_t I = 0; I + 1 < (1U << m); ++I) {
            auto add = [&](int j, int i) {
                TransversalityEntry e{static_cast<int>(k), I, j, i, principal_angle(dir, coordinate_plane(m, d, I, j, i)), false};
                e.pass = e.angle >= c;
                report.min_angle = std::min(report.min_angle, e.angle);
                report.entries.push_back(e);
            };
            add(-1, -1);
            for (int j = 0; j < m; ++j) {
                if (I >> j & 1U) continue;
                for (int i = 0; i < d; ++i) add(j, i);
            }
        }
    }
    report.pass = std::all_of(report.entries.begin(), report.entries.end(), [](const auto& e) { return e.pass; });
    return report;
}

std::optional<bool> gradient_transversality(const PolynomialMap& p, std::span<const double> a, int m, int d) {
    const int q = p.codomain();
    if (p.ambient() != m * d) throw std::invalid_argument("polynomial ambient dimension must be m*d");
    if (q > d) return std::nullopt;
    Eigen::MatrixXd J = p.jacobian(a);
    auto full_rank = [](const Eigen::MatrixXd& rows) {
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(rows);
        const auto& sv = svd.singularValues();
        return sv[sv.size() - 1] > kRankTolerance * std::max(1.0, sv[0]);
    };
    for (int j = 0; j < m; ++j) {
        Eigen::MatrixXd block = J.middleCols(j * d, d);
        if (d == q) {
            if (!full_rank(block)) return false;
            continue;
        }
        for (int k = 0; k < d; ++k) {
            Eigen::MatrixXd rows(q + 1, d);
            rows.topRows(q) = block;
            rows.row(q) = Eigen::RowVectorXd::Unit(d, k);
            if (!full_rank(rows)) return false;
        }
    }
    return true;
}

}  // namespace fracperc
