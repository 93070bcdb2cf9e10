#include "fracperc/patterns.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include <fftw3.h>

#include "fracperc/errors.hpp"
#include "fracperc/parallel.hpp"
#include "fracperc/random.hpp"

namespace fracperc {

namespace {

struct FamilyName {
    Family family;
    const char* name;
    const char* alias;
};

constexpr FamilyName kFamilies[] = {
    {Family::homothetic, "homothetic", "homothetic-mpoint"},
    {Family::translate, "translate", "translate-mpoint"},
    {Family::distance, "distance", "distance"},
    {Family::angle, "angle", "angle"},
    {Family::volume, "volume", "simplex-volume"},
    {Family::isometric, "isometric", "isometric-triple"},
    {Family::triangle, "triangle", "similar-triangle"},
    {Family::polygon, "polygon", "polygon"},
};

std::string format_number(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

double parse_number(const std::string& s) {
    double v = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw std::invalid_argument("not a number: '" + s + "'");
    return v;
}

int parse_int(const std::string& s) {
    int v = 0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw std::invalid_argument("not an integer: '" + s + "'");
    return v;
}

// Numbers separated by ',' or ';'.
std::vector<double> parse_list(const std::string& text) {
    std::vector<double> out;
    std::string token;
    for (char ch : text + ",") {
        if (ch == ',' || ch == ';') {
            if (token.empty()) throw std::invalid_argument("empty entry in list '" + text + "'");
            out.push_back(parse_number(token));
            token.clear();
        } else {
            token += ch;
        }
    }
    return out;
}

double sqdist(std::span<const double> x, int d, int j, int k) {
    double s = 0.0;
    for (int i = 0; i < d; ++i) {
        const double t = x[j * d + i] - x[k * d + i];
        s += t * t;
    }
    return s;
}

double cross2(std::span<const double> x, int o, int a, int b) {
    return (x[2 * a] - x[2 * o]) * (x[2 * b + 1] - x[2 * o + 1]) - (x[2 * a + 1] - x[2 * o + 1]) * (x[2 * b] - x[2 * o]);
}

bool has_collinear_triple(std::span<const double> pts, int m) {
    double scale = 0.0;
    for (double v : pts) scale = std::max(scale, std::abs(v));
    const double eps = 1e-12 * std::max(1.0, scale * scale);
    for (int i = 0; i < m; ++i)
        for (int j = i + 1; j < m; ++j)
            for (int k = j + 1; k < m; ++k)
                if (std::abs(cross2(pts, i, j, k)) <= eps) return true;
    return false;
}

double factorial(int d) {
    double f = 1.0;
    for (int i = 2; i <= d; ++i) f *= i;
    return f;
}

Expr determinant(const std::vector<std::vector<Expr>>& a) {
    const std::size_t n = a.size();
    if (n == 1) return a[0][0];
    if (n == 2) return a[0][0] * a[1][1] - a[0][1] * a[1][0];
    Expr sum;
    for (std::size_t c = 0; c < n; ++c) {
        std::vector<std::vector<Expr>> minor;
        for (std::size_t r = 1; r < n; ++r) {
            std::vector<Expr> row;
            for (std::size_t k = 0; k < n; ++k)
                if (k != c) row.push_back(a[r][k]);
            minor.push_back(std::move(row));
        }
        Expr term = a[0][c] * determinant(minor);
        if (c == 0)
            sum = term;
        else if (c % 2 == 1)
            sum = sum - term;
        else
            sum = sum + term;
    }
    return sum;
}

}  // namespace

const char* to_string(Family f) {
    for (const auto& e : kFamilies)
        if (e.family == f) return e.name;
    return "?";
}

Family parse_family(const std::string& name) {
    for (const auto& e : kFamilies)
        if (name == e.name || name == e.alias) return e.family;
    throw std::invalid_argument("unknown family '" + name + "'");
}

// --- descriptors ----------------------------------------------------------

bool ConfigDescriptor::scale_invariant() const {
    return family == Family::homothetic || family == Family::angle || family == Family::triangle ||
           family == Family::polygon;
}

ConfigDescriptor ConfigDescriptor::scaled(double factor) const {
    ConfigDescriptor out = *this;
    switch (family) {
        case Family::distance: out.lambda *= factor; break;
        case Family::volume: out.lambda *= std::pow(factor, d); break;
        case Family::isometric:
        case Family::translate:
            for (auto& v : out.points) v *= factor;
            break;
        default: break;
    }
    return out;
}

void ConfigDescriptor::validate() const {
    auto fail = [this](const std::string& why) {
        throw std::invalid_argument(std::string(fracperc::to_string(family)) + ": " + why);
    };
    if (d < 1 || d > 8) fail("d must be in [1, 8]");
    auto need_points = [&](int min_m) {
        if (m < min_m) fail("needs at least " + std::to_string(min_m) + " points");
        if (static_cast<int>(points.size()) != m * d) fail("point list must hold m*d coordinates");
        for (double v : points)
            if (!std::isfinite(v)) fail("non-finite coordinate");
        for (int j = 0; j < m; ++j)
            for (int k = j + 1; k < m; ++k)
                if (sqdist(points, d, j, k) == 0.0) fail("repeated points");
    };
    switch (family) {
        case Family::homothetic:
        case Family::translate: need_points(2); break;
        case Family::distance:
            if (m != 2) fail("arity is 2");
            if (!(lambda > 0.0) || !std::isfinite(lambda)) fail("lambda must be positive");
            break;
        case Family::angle:
            if (m != 3) fail("arity is 3");
            if (d < 2) fail("needs d >= 2");
            if (!(lambda > -1.0 && lambda < 1.0)) fail("lambda is a cosine in (-1, 1)");
            break;
        case Family::volume:
            if (m != d + 1) fail("arity is d + 1");
            if (!(lambda > 0.0) || !std::isfinite(lambda)) fail("volume must be positive");
            break;
        case Family::isometric:
            if (d != 2) fail("defined for d = 2 only");
            if (m != 3) fail("arity is 3");
            need_points(3);
            if (has_collinear_triple(points, m)) fail("template points are collinear");
            break;
        case Family::triangle:
            if (m != 3) fail("arity is 3");
            if (d < 2) fail("needs d >= 2");
            if (!(a > 0.0 && b > 0.0 && a + b > 1.0 && std::abs(a - b) < 1.0))
                fail("side ratios must form a non-degenerate triangle");
            break;
        case Family::polygon:
            if (d != 2) fail("defined for d = 2 only");
            need_points(3);
            if (has_collinear_triple(points, m)) fail("three template vertices are collinear");
            break;
    }
}

std::string ConfigDescriptor::params() const {
    std::string out = "d=" + std::to_string(d);
    switch (family) {
        case Family::homothetic:
        case Family::translate:
        case Family::isometric:
        case Family::polygon: {
            out += " points=";
            for (int j = 0; j < m; ++j) {
                if (j) out += ';';
                for (int i = 0; i < d; ++i) {
                    if (i) out += ',';
                    out += format_number(points[j * d + i]);
                }
            }
            break;
        }
        case Family::distance:
        case Family::angle: out += " lambda=" + format_number(lambda); break;
        case Family::volume: out += " v=" + format_number(lambda); break;
        case Family::triangle: out += " a=" + format_number(a) + " b=" + format_number(b); break;
    }
    return out;
}

std::string ConfigDescriptor::to_string() const {
    return std::string("family=") + fracperc::to_string(family) + " " + params();
}

ConfigDescriptor ConfigDescriptor::parse(const std::string& text) {
    ConfigDescriptor desc;
    std::istringstream in(text);
    std::string token;
    bool have_family = false, have_d = false;
    int m_given = -1;
    while (in >> token) {
        const auto eq = token.find('=');
        if (eq == std::string::npos) throw std::invalid_argument("expected key=value, got '" + token + "'");
        const std::string key = token.substr(0, eq), value = token.substr(eq + 1);
        if (key == "family") {
            desc.family = parse_family(value);
            have_family = true;
        } else if (key == "d") {
            desc.d = parse_int(value);
            have_d = true;
        } else if (key == "m") {
            m_given = parse_int(value);
        } else if (key == "points") {
            desc.points = parse_list(value);
        } else if (key == "lambda" || key == "v" || key == "cos") {
            desc.lambda = parse_number(value);
        } else if (key == "a") {
            desc.a = parse_number(value);
        } else if (key == "b") {
            desc.b = parse_number(value);
        } else {
            throw std::invalid_argument("unknown descriptor key '" + key + "'");
        }
    }
    if (!have_family) throw std::invalid_argument("descriptor needs family=");
    if (!have_d && (desc.family == Family::isometric || desc.family == Family::polygon)) desc.d = 2;
    if (desc.d < 1) throw std::invalid_argument("d must be positive");
    switch (desc.family) {
        case Family::homothetic:
        case Family::translate:
        case Family::isometric:
        case Family::polygon:
            if (desc.points.size() % static_cast<std::size_t>(desc.d) != 0)
                throw std::invalid_argument("point list length is not a multiple of d");
            desc.m = static_cast<int>(desc.points.size()) / desc.d;
            break;
        case Family::distance: desc.m = 2; break;
        case Family::angle:
        case Family::triangle: desc.m = 3; break;
        case Family::volume: desc.m = desc.d + 1; break;
    }
    if (m_given >= 0 && m_given != desc.m) throw std::invalid_argument("m does not match the parameters");
    desc.validate();
    return desc;
}

ConfigDescriptor ConfigDescriptor::homothetic(int d, std::vector<double> points) {
    ConfigDescriptor c;
    c.family = Family::homothetic;
    c.d = d;
    c.m = d > 0 ? static_cast<int>(points.size()) / d : 0;
    c.points = std::move(points);
    c.validate();
    return c;
}

ConfigDescriptor ConfigDescriptor::translate(int d, std::vector<double> points) {
    ConfigDescriptor c = homothetic(d, std::move(points));
    c.family = Family::translate;
    return c;
}

ConfigDescriptor ConfigDescriptor::distance(int d, double lambda) {
    ConfigDescriptor c;
    c.family = Family::distance;
    c.d = d;
    c.m = 2;
    c.lambda = lambda;
    c.validate();
    return c;
}

ConfigDescriptor ConfigDescriptor::angle(int d, double cosine) {
    ConfigDescriptor c;
    c.family = Family::angle;
    c.d = d;
    c.m = 3;
    c.lambda = cosine;
    c.validate();
    return c;
}

ConfigDescriptor ConfigDescriptor::volume(int d, double v) {
    ConfigDescriptor c;
    c.family = Family::volume;
    c.d = d;
    c.m = d + 1;
    c.lambda = v;
    c.validate();
    return c;
}

ConfigDescriptor ConfigDescriptor::isometric(std::vector<double> points) {
    ConfigDescriptor c;
    c.family = Family::isometric;
    c.d = 2;
    c.m = 3;
    c.points = std::move(points);
    c.validate();
    return c;
}

ConfigDescriptor ConfigDescriptor::triangle(int d, double a, double b) {
    ConfigDescriptor c;
    c.family = Family::triangle;
    c.d = d;
    c.m = 3;
    c.a = a;
    c.b = b;
    c.validate();
    return c;
}

ConfigDescriptor ConfigDescriptor::polygon(std::vector<double> points) {
    ConfigDescriptor c;
    c.family = Family::polygon;
    c.d = 2;
    c.m = static_cast<int>(points.size()) / 2;
    c.points = std::move(points);
    c.validate();
    return c;
}

// --- thresholds -----------------------------------------------------------

double ThresholdTable::critical_p() const { return std::exp2(critical_s - d); }
double ThresholdTable::relative_p() const { return std::exp2(relative_s - d); }

ThresholdTable threshold_table(const ConfigDescriptor& desc) {
    ThresholdTable t;
    t.family = desc.family;
    t.d = desc.d;
    t.m = desc.m;
    const double d = desc.d, m = desc.m;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    switch (desc.family) {
        case Family::homothetic:
            t.critical_s = d - (d + 1) / m;
            t.relative_s = d - 1.0 / (m - 1);
            break;
        case Family::translate:
            t.critical_s = d - d / m;
            t.relative_s = nan;
            break;
        case Family::distance:
            t.critical_s = 0.5;
            t.relative_s = 1.0;
            t.applicable = desc.d >= 2;
            break;
        case Family::volume:
            t.critical_s = 1.0 / (d + 1);
            t.relative_s = 1.0 / d;
            break;
        case Family::isometric:
            t.critical_s = 1.0;
            t.relative_s = 1.5;
            t.applicable = desc.d == 2;
            break;
        case Family::angle:
            t.critical_s = 1.0 / 3.0;
            t.relative_s = 0.5;
            t.applicable = desc.d >= 2;
            break;
        case Family::triangle:
            t.critical_s = 2.0 / 3.0;
            t.relative_s = 1.0;
            t.applicable = desc.d >= 2;
            break;
        case Family::polygon:
            t.critical_s = 2.0 - 4.0 / m;
            t.relative_s = 2.0 - 2.0 / (m - 1);
            t.applicable = desc.d == 2 && desc.m >= 3;
            break;
    }
    return t;
}

// --- catalog --------------------------------------------------------------

PolynomialMap configuration_polynomial(const ConfigDescriptor& desc) {
    desc.validate();
    if (desc.is_plane_family())
        throw std::invalid_argument(std::string(to_string(desc.family)) +
                                    " placements form an affine plane; use configuration_plane");
    const int d = desc.d, m = desc.m;
    auto x = [d](int j, int i) { return Expr::variable(j * d + i); };
    auto sq = [&](int j, int k) {
        Expr s = sqr(x(j, 0) - x(k, 0));
        for (int i = 1; i < d; ++i) s = s + sqr(x(j, i) - x(k, i));
        return s;
    };
    auto c = [](double v) { return Expr::constant(v); };
    std::vector<Expr> comps;
    switch (desc.family) {
        case Family::distance: comps.push_back(sq(0, 1) - c(desc.lambda * desc.lambda)); break;
        case Family::angle: {
            Expr dot = (x(0, 0) - x(1, 0)) * (x(2, 0) - x(1, 0));
            for (int i = 1; i < d; ++i) dot = dot + (x(0, i) - x(1, i)) * (x(2, i) - x(1, i));
            comps.push_back(sqr(dot) - (desc.lambda * desc.lambda) * (sq(0, 1) * sq(2, 1)));
            break;
        }
        case Family::volume: {
            // det of the columns (x_j, 1) equals (-1)^d det[x_2 - x_1, ..., x_{d+1} - x_1]
            std::vector<std::vector<Expr>> D(d, std::vector<Expr>(d));
            for (int r = 0; r < d; ++r)
                for (int col = 0; col < d; ++col) D[r][col] = x(col + 1, r) - x(0, r);
            Expr det = determinant(D);
            if (d % 2 == 1) det = -1.0 * det;
            comps.push_back(det - c(factorial(d) * desc.lambda));
            break;
        }
        case Family::isometric: {
            const auto& y = desc.points;
            comps.push_back(sq(1, 0) - c(sqdist(y, d, 1, 0)));
            comps.push_back(sq(2, 0) - c(sqdist(y, d, 2, 0)));
            comps.push_back(sq(2, 1) - c(sqdist(y, d, 2, 1)));
            break;
        }
        case Family::triangle:
            comps.push_back(sq(2, 0) - (desc.a * desc.a) * sq(1, 0));
            comps.push_back(sq(2, 1) - (desc.b * desc.b) * sq(1, 0));
            break;
        case Family::polygon: {
            const auto& a = desc.points;
            const double base = sqdist(a, d, 1, 0);
            for (int i = 2; i < m; ++i)
                for (int j = 0; j < 2; ++j) comps.push_back(sq(j, i) - (sqdist(a, d, j, i) / base) * sq(1, 0));
            break;
        }
        default: break;
    }
    return PolynomialMap(m * d, std::move(comps));
}

AffinePlane configuration_plane(const ConfigDescriptor& desc) {
    desc.validate();
    if (!desc.is_plane_family())
        throw std::invalid_argument(std::string(to_string(desc.family)) +
                                    " is a polynomial family; use configuration_polynomial");
    const int d = desc.d, m = desc.m, M = m * d;
    const bool homothetic = desc.family == Family::homothetic;
    Eigen::MatrixXd dirs = Eigen::MatrixXd::Zero(homothetic ? d + 1 : d, M);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < m; ++j) dirs(i, j * d + i) = 1.0;
    Eigen::VectorXd point = Eigen::VectorXd::Zero(M);
    if (homothetic) {
        for (int k = 0; k < M; ++k) dirs(d, k) = desc.points[k];
    } else {
        for (int k = 0; k < M; ++k) point[k] = desc.points[k];
    }
    return AffinePlane(dirs, point);
}

bool satisfies_side_conditions(const ConfigDescriptor& desc, std::span<const double> x) {
    const int d = desc.d;
    if (desc.family == Family::angle) {
        double dot = 0.0;
        for (int i = 0; i < d; ++i) dot += (x[i] - x[d + i]) * (x[2 * d + i] - x[d + i]);
        if (desc.lambda > 0.0) return dot > 0.0;
        if (desc.lambda < 0.0) return dot < 0.0;
        return true;
    }
    if (desc.family == Family::polygon) {
        int sign = 0;
        for (int i = 2; i < desc.m; ++i) {
            const double t = cross2(desc.points, 0, 1, i);
            const double v = cross2(x, 0, 1, i);
            if (v == 0.0) return false;
            const int s = ((t > 0) == (v > 0)) ? 1 : -1;
            if (sign == 0)
                sign = s;
            else if (s != sign)
                return false;
        }
        return true;
    }
    return true;
}

// --- detection ------------------------------------------------------------

double detection_tolerance(const ConfigDescriptor& desc, int n, const DetectionOptions& options) {
    const double floor_c = std::sqrt(static_cast<double>(desc.d));
    const double c = options.C > 0.0 ? options.C : floor_c;
    if (c < floor_c * (1.0 - 1e-12))
        throw std::invalid_argument("tolerance factor C must be at least sqrt(d)");
    return std::ldexp(c, -n);
}

namespace {

constexpr double kVerifySlack = 1e-9;

double min_pairwise(std::span<const double> x, int d, int m) {
    double best = std::numeric_limits<double>::infinity();
    for (int j = 0; j < m; ++j)
        for (int k = j + 1; k < m; ++k) best = std::min(best, std::sqrt(sqdist(x, d, j, k)));
    return best;
}

// Level-n cube search. Tuple geometry is expressed in units of the
// tolerance with the first cube's center as origin, so the decisions only
// depend on index differences and on n - level.
class Engine {
public:
    Engine(std::span<const CubeCode> cubes, int n, const ConfigDescriptor& desc, const DetectionOptions& options)
        : desc_(desc), d_(desc.d), m_(desc.m), n_(n), options_(options) {
        desc_.validate();
        if (n < 0) throw std::invalid_argument("resolution must be non-negative");
        if (d_ * n > kMaxCodeBits) throw BudgetError("d * n exceeds the cube code width");
        if (m_ > 4 && n > 8) throw BudgetError("configurations with more than 4 points need n <= 8");
        tol_ = detection_tolerance(desc, n, options);
        levels_.resize(n + 1);
        levels_[n].assign(cubes.begin(), cubes.end());
        std::sort(levels_[n].begin(), levels_[n].end());
        levels_[n].erase(std::unique(levels_[n].begin(), levels_[n].end()), levels_[n].end());
        for (int l = n - 1; l >= 0; --l) {
            for (CubeCode c : levels_[l + 1]) {
                const CubeCode p = c >> d_;
                if (levels_[l].empty() || levels_[l].back() != p) levels_[l].push_back(p);
            }
        }
        sep_u_ = desc.scale_invariant() ? std::max(1.0, options.min_scale / tol_) : 0.0;
        switch (desc.family) {
            case Family::homothetic: {
                const double ms = min_pairwise(desc.points, d_, m_);
                a_floor_ = sep_u_ / ms;
                break;
            }
            case Family::translate:
                shift_u_.resize(desc.points.size());
                for (std::size_t k = 0; k < shift_u_.size(); ++k) shift_u_[k] = desc.points[k] / tol_;
                break;
            case Family::distance: lambda_u_ = desc.lambda / tol_; break;
            default: {
                poly_ = configuration_polynomial(desc.scaled(1.0 / tol_));
                const int M = m_ * d_;
                SobolPoints sobol(M);
                samples_.assign(kSamples, std::vector<double>(M));
                for (auto& s : samples_) sobol.next(s);
                break;
            }
        }
    }

    double tolerance() const { return tol_; }
    std::size_t visits() const { return visits_; }

    std::size_t run(const std::function<bool(const Witness&)>& visit, std::span<const CubeCode> all) {
        all_ = all;
        if (levels_[n_].empty()) return 0;
        std::vector<CubeCode> tuple(m_, 0);
        descend(0, tuple, visit);
        return found_;
    }

private:
    static constexpr int kSamples = 32;

    struct Geometry {
        int level = 0;
        double rho = 0.0;       // box half-width in tolerance units
        std::vector<double> u;  // m * d box centers in tolerance units
    };

    Geometry geometry(int level, const std::vector<CubeCode>& tuple) const {
        Geometry g;
        g.level = level;
        const double side = std::ldexp(1.0, -level);
        g.rho = (tol_ + 0.5 * (side - std::ldexp(1.0, -n_))) / tol_;
        g.u.resize(m_ * d_);
        const auto origin = decode(tuple[0], d_, level);
        for (int j = 0; j < m_; ++j) {
            const auto idx = j == 0 ? origin : decode(tuple[j], d_, level);
            for (int i = 0; i < d_; ++i) {
                const double diff =
                    static_cast<double>(static_cast<std::int64_t>(idx[i]) - static_cast<std::int64_t>(origin[i]));
                g.u[j * d_ + i] = diff * side / tol_;
            }
        }
        return g;
    }

    std::span<const CubeCode> children(int level, CubeCode code) const {
        const auto& next = levels_[level + 1];
        auto lo = std::lower_bound(next.begin(), next.end(), code << d_);
        auto hi = std::lower_bound(lo, next.end(), (code + 1) << d_);
        return {lo, hi};
    }

    void descend(int level, std::vector<CubeCode>& tuple, const std::function<bool(const Witness&)>& visit) {
        if (++visits_ > options_.max_visits) throw BudgetError("detection exceeded its visit budget");
        const Geometry g = geometry(level, tuple);
        if (level == n_) {
            if (desc_.family != Family::translate) {
                for (int j = 0; j < m_; ++j)
                    for (int k = j + 1; k < m_; ++k)
                        if (tuple[j] == tuple[k]) return;
            }
            Witness w;
            if (!leaf(g, tuple, w)) return;
            if (!verify_witness(all_, n_, desc_, options_, w)) return;
            ++found_;
            if (!visit(w)) stop_ = true;
            return;
        }
        if (options_.prune && !feasible(g)) return;
        std::vector<std::span<const CubeCode>> kids(m_);
        for (int j = 0; j < m_; ++j) kids[j] = children(level, tuple[j]);
        std::vector<std::size_t> pos(m_, 0);
        std::vector<CubeCode> next(m_);
        for (;;) {
            for (int j = 0; j < m_; ++j) next[j] = kids[j][pos[j]];
            descend(level + 1, next, visit);
            if (stop_) return;
            int j = m_ - 1;
            while (j >= 0 && ++pos[j] == kids[j].size()) {
                pos[j] = 0;
                --j;
            }
            if (j < 0) break;
        }
    }

    bool feasible(const Geometry& g) const {
        switch (desc_.family) {
            case Family::homothetic: {
                double lo, hi;
                return scale_range(g, lo, hi);
            }
            case Family::translate: return translate_feasible(g);
            case Family::distance: {
                double gap2, far2;
                distance_range(g, gap2, far2);
                return gap2 <= lambda_u_ * lambda_u_ && lambda_u_ * lambda_u_ <= far2;
            }
            default: return polynomial_feasible(g, box_of(g));
        }
    }

    bool leaf(const Geometry& g, const std::vector<CubeCode>& tuple, Witness& w) const {
        std::vector<double> z;  // points in tolerance units
        switch (desc_.family) {
            case Family::homothetic: {
                double lo, hi;
                if (!scale_range(g, lo, hi)) return false;
                z = homothetic_witness(g, lo, hi, w);
                break;
            }
            case Family::translate:
                if (!translate_feasible(g)) return false;
                z = translate_witness(g, w);
                break;
            case Family::distance:
                if (!distance_witness(g, z)) return false;
                break;
            default: {
                auto box = box_of(g);
                if (!polynomial_feasible(g, box)) return false;
                if (!find_zero(box, 3, z)) return false;
                break;
            }
        }
        const auto origin = decode(tuple[0], d_, n_);
        const double h = std::ldexp(1.0, -n_);
        w.cubes = tuple;
        w.points.resize(m_ * d_);
        for (int j = 0; j < m_; ++j)
            for (int i = 0; i < d_; ++i)
                w.points[j * d_ + i] = (origin[i] + 0.5) * h + tol_ * z[j * d_ + i];
        if (desc_.family == Family::homothetic) {
            // params already hold (a, b) in tolerance units relative to the origin
            w.params[0] *= tol_;
            for (int i = 0; i < d_; ++i) w.params[1 + i] = (origin[i] + 0.5) * h + tol_ * w.params[1 + i];
            for (int j = 0; j < m_; ++j)
                for (int i = 0; i < d_; ++i)
                    w.points[j * d_ + i] = w.params[0] * desc_.points[j * d_ + i] + w.params[1 + i];
        } else if (desc_.family == Family::translate) {
            for (int i = 0; i < d_; ++i) w.params[i] = (origin[i] + 0.5) * h + tol_ * w.params[i];
            for (int j = 0; j < m_; ++j)
                for (int i = 0; i < d_; ++i) w.points[j * d_ + i] = w.params[i] + desc_.points[j * d_ + i];
        } else {
            w.params = w.points;
        }
        return true;
    }

    // Feasible scales a (tolerance units): every pair of points and every
    // axis gives a linear bound a (s_j - s_k) >= (u_j - u_k) - 2 rho.
    bool scale_range(const Geometry& g, double& lo, double& hi) const {
        lo = a_floor_;
        hi = std::numeric_limits<double>::infinity();
        const auto& s = desc_.points;
        for (int j = 0; j < m_; ++j)
            for (int k = 0; k < m_; ++k) {
                if (j == k) continue;
                for (int i = 0; i < d_; ++i) {
                    const double ds = s[j * d_ + i] - s[k * d_ + i];
                    const double du = g.u[j * d_ + i] - g.u[k * d_ + i] - 2.0 * g.rho;
                    if (ds > 0.0)
                        lo = std::max(lo, du / ds);
                    else if (ds < 0.0)
                        hi = std::min(hi, du / ds);
                    else if (du > 0.0)
                        return false;
                }
            }
        return lo <= hi;
    }

    // Least-squares fit of the centers, clamped into the feasible set.
    std::vector<double> homothetic_witness(const Geometry& g, double lo, double hi, Witness& w) const {
        const auto& s = desc_.points;
        std::vector<double> sbar(d_, 0.0), ubar(d_, 0.0);
        for (int j = 0; j < m_; ++j)
            for (int i = 0; i < d_; ++i) {
                sbar[i] += s[j * d_ + i] / m_;
                ubar[i] += g.u[j * d_ + i] / m_;
            }
        double num = 0.0, den = 0.0;
        for (int j = 0; j < m_; ++j)
            for (int i = 0; i < d_; ++i) {
                num += (s[j * d_ + i] - sbar[i]) * (g.u[j * d_ + i] - ubar[i]);
                den += (s[j * d_ + i] - sbar[i]) * (s[j * d_ + i] - sbar[i]);
            }
        const double a = std::clamp(num / den, lo, hi);
        w.params.assign(1 + d_, 0.0);
        w.params[0] = a;
        std::vector<double> z(m_ * d_);
        for (int i = 0; i < d_; ++i) {
            double blo = -std::numeric_limits<double>::infinity(), bhi = -blo, mean = 0.0;
            for (int j = 0; j < m_; ++j) {
                const double v = g.u[j * d_ + i] - a * s[j * d_ + i];
                blo = std::max(blo, v - g.rho);
                bhi = std::min(bhi, v + g.rho);
                mean += v / m_;
            }
            const double b = blo <= bhi ? std::clamp(mean, blo, bhi) : 0.5 * (blo + bhi);
            w.params[1 + i] = b;
            for (int j = 0; j < m_; ++j) z[j * d_ + i] = a * s[j * d_ + i] + b;
        }
        return z;
    }

    bool translate_feasible(const Geometry& g) const {
        for (int i = 0; i < d_; ++i) {
            double lo = std::numeric_limits<double>::infinity(), hi = -lo;
            for (int j = 0; j < m_; ++j) {
                const double v = g.u[j * d_ + i] - shift_u_[j * d_ + i];
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
            if (hi - lo > 2.0 * g.rho) return false;
        }
        return true;
    }

    std::vector<double> translate_witness(const Geometry& g, Witness& w) const {
        w.params.assign(d_, 0.0);
        std::vector<double> z(m_ * d_);
        for (int i = 0; i < d_; ++i) {
            double lo = std::numeric_limits<double>::infinity(), hi = -lo, mean = 0.0;
            for (int j = 0; j < m_; ++j) {
                const double v = g.u[j * d_ + i] - shift_u_[j * d_ + i];
                lo = std::min(lo, v);
                hi = std::max(hi, v);
                mean += v / m_;
            }
            const double b = std::clamp(mean, hi - g.rho, std::max(hi - g.rho, lo + g.rho));
            w.params[i] = b;
            for (int j = 0; j < m_; ++j) z[j * d_ + i] = b + shift_u_[j * d_ + i];
        }
        return z;
    }

    // Exact range of squared distances between the two boxes.
    void distance_range(const Geometry& g, double& gap2, double& far2) const {
        gap2 = far2 = 0.0;
        for (int i = 0; i < d_; ++i) {
            const double delta = g.u[d_ + i] - g.u[i];
            const double lo = delta - 2.0 * g.rho, hi = delta + 2.0 * g.rho;
            const double mn = (lo <= 0.0 && hi >= 0.0) ? 0.0 : std::min(std::abs(lo), std::abs(hi));
            const double mx = std::max(std::abs(lo), std::abs(hi));
            gap2 += mn * mn;
            far2 += mx * mx;
        }
    }

    // Walk from a closest pair to a farthest pair; the distance is continuous
    // along the way, so bisection finds the target.
    bool distance_witness(const Geometry& g, std::vector<double>& z) const {
        double gap2, far2;
        distance_range(g, gap2, far2);
        const double l2 = lambda_u_ * lambda_u_;
        if (!(gap2 <= l2 && l2 <= far2)) return false;
        std::vector<double> near(2 * d_), far(2 * d_);
        const double r = g.rho;
        for (int i = 0; i < d_; ++i) {
            const double delta = g.u[d_ + i] - g.u[i];
            const double olo = std::max(-r, delta - r), ohi = std::min(r, delta + r);
            if (olo <= ohi) {
                near[i] = near[d_ + i] = 0.5 * (olo + ohi);
            } else if (delta > 0.0) {
                near[i] = r;
                near[d_ + i] = delta - r;
            } else {
                near[i] = -r;
                near[d_ + i] = delta + r;
            }
            if (delta >= 0.0) {
                far[i] = -r;
                far[d_ + i] = delta + r;
            } else {
                far[i] = r;
                far[d_ + i] = delta - r;
            }
        }
        auto at = [&](double t, std::vector<double>& out) {
            out.resize(2 * d_);
            for (int k = 0; k < 2 * d_; ++k) out[k] = (1.0 - t) * near[k] + t * far[k];
            return sqdist(out, d_, 0, 1) - l2;
        };
        double lo = 0.0, hi = 1.0;
        std::vector<double> tmp;
        for (int it = 0; it < 200 && hi - lo > 0.0; ++it) {
            const double mid = 0.5 * (lo + hi);
            if (mid <= lo || mid >= hi) break;
            if (at(mid, tmp) < 0.0)
                lo = mid;
            else
                hi = mid;
        }
        std::vector<double> zlo, zhi;
        const double flo = std::abs(at(lo, zlo)), fhi = std::abs(at(hi, zhi));
        z = flo <= fhi ? zlo : zhi;
        return true;
    }

    std::vector<Interval> box_of(const Geometry& g) const {
        std::vector<Interval> box(g.u.size());
        for (std::size_t k = 0; k < g.u.size(); ++k) box[k] = Interval{g.u[k] - g.rho, g.u[k] + g.rho};
        return box;
    }

    bool polynomial_feasible(const Geometry& g, const std::vector<Interval>& box) const {
        if (sep_u_ > 0.0) {
            for (int j = 0; j < m_; ++j)
                for (int k = j + 1; k < m_; ++k) {
                    double far2 = 0.0;
                    for (int i = 0; i < d_; ++i) {
                        const double delta = g.u[k * d_ + i] - g.u[j * d_ + i];
                        const double mx = std::abs(delta) + 2.0 * g.rho;
                        far2 += mx * mx;
                    }
                    if (far2 < sep_u_ * sep_u_) return false;
                }
        }
        return !excluded(box);
    }

    bool excluded(const std::vector<Interval>& box) const {
        for (const auto& v : poly_.enclose(box))
            if (!v.contains_zero()) return true;
        return false;
    }

    double scalar(const std::vector<double>& x) const {
        if (desc_.family == Family::angle) {
            // signed form: zero exactly on the right side of the sign condition
            double dot = 0.0, na = 0.0, nb = 0.0;
            for (int i = 0; i < d_; ++i) {
                const double a = x[i] - x[d_ + i], b = x[2 * d_ + i] - x[d_ + i];
                dot += a * b;
                na += a * a;
                nb += b * b;
            }
            return dot - desc_.lambda * std::sqrt(na * nb);
        }
        return poly_.evaluate(x)[0];
    }

    bool accept(const std::vector<double>& z) const {
        if (sep_u_ > 0.0 && min_pairwise(z, d_, m_) < sep_u_ * (1.0 + kVerifySlack)) return false;
        if (!satisfies_side_conditions(desc_, z)) return false;
        const Eigen::VectorXd r = poly_.evaluate(z);
        const Eigen::VectorXd mag = poly_.magnitude(z);
        for (Eigen::Index i = 0; i < r.size(); ++i)
            if (std::abs(r[i]) > 1e-10 * std::max(mag[i], 1e-300)) return false;
        return true;
    }

    static void clamp_into(std::vector<double>& x, const std::vector<Interval>& box) {
        for (std::size_t k = 0; k < x.size(); ++k) x[k] = std::clamp(x[k], box[k].lo, box[k].hi);
    }

    bool bisect(std::vector<double> a, std::vector<double> b, const std::vector<Interval>& box,
                std::vector<double>& z) const {
        // scalar(a) < 0 < scalar(b)
        std::vector<double> mid(a.size());
        for (int it = 0; it < 80; ++it) {
            for (std::size_t k = 0; k < a.size(); ++k) mid[k] = 0.5 * (a[k] + b[k]);
            const double v = scalar(mid);
            if (v == 0.0) {
                a = b = mid;
                break;
            }
            (v < 0.0 ? a : b) = mid;
        }
        z = std::abs(scalar(a)) <= std::abs(scalar(b)) ? a : b;
        clamp_into(z, box);
        return accept(z);
    }

    bool gauss_newton(std::vector<double> x, const std::vector<Interval>& box, std::vector<double>& z) const {
        Eigen::VectorXd r = poly_.evaluate(x);
        double norm = r.norm();
        for (int it = 0; it < 60; ++it) {
            if (norm <= 1e-13 * std::max(poly_.magnitude(x).norm(), 1e-300)) break;
            const Eigen::MatrixXd J = poly_.jacobian(x);
            const Eigen::VectorXd step = Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd>(J).solve(-r);
            double t = 1.0;
            bool improved = false;
            std::vector<double> y(x.size());
            for (int h = 0; h < 30; ++h, t *= 0.5) {
                for (std::size_t k = 0; k < x.size(); ++k) y[k] = x[k] + t * step[static_cast<Eigen::Index>(k)];
                clamp_into(y, box);
                const Eigen::VectorXd ry = poly_.evaluate(y);
                if (ry.norm() < norm) {
                    x = y;
                    r = ry;
                    norm = ry.norm();
                    improved = true;
                    break;
                }
            }
            if (!improved) break;
        }
        z = x;
        return accept(z);
    }

    bool try_box(const std::vector<Interval>& box, std::vector<double>& z) const {
        const std::size_t M = box.size();
        std::vector<std::vector<double>> starts;
        std::vector<double> c(M);
        for (std::size_t k = 0; k < M; ++k) c[k] = box[k].mid();
        starts.push_back(c);
        for (const auto& s : samples_) {
            std::vector<double> x(M);
            for (std::size_t k = 0; k < M; ++k) x[k] = box[k].lo + s[k] * (box[k].hi - box[k].lo);
            starts.push_back(std::move(x));
        }
        if (M <= 6) {
            for (std::size_t mask = 0; mask < (std::size_t{1} << M); ++mask) {
                std::vector<double> x(M);
                for (std::size_t k = 0; k < M; ++k) x[k] = (mask >> k) & 1 ? box[k].hi : box[k].lo;
                starts.push_back(std::move(x));
            }
        }
        std::vector<std::size_t> order(starts.size());
        std::iota(order.begin(), order.end(), 0);
        if (poly_.codomain() == 1) {
            std::vector<double> val(starts.size());
            for (std::size_t k = 0; k < starts.size(); ++k) {
                val[k] = scalar(starts[k]);
                if (val[k] == 0.0 && accept(starts[k])) {
                    z = starts[k];
                    return true;
                }
            }
            std::stable_sort(order.begin(), order.end(),
                             [&](std::size_t a, std::size_t b) { return std::abs(val[a]) < std::abs(val[b]); });
            std::vector<std::size_t> neg, pos;
            for (auto k : order) (val[k] < 0.0 ? neg : pos).push_back(k);
            for (std::size_t a = 0; a < std::min<std::size_t>(neg.size(), 4); ++a)
                for (std::size_t b = 0; b < std::min<std::size_t>(pos.size(), 4); ++b)
                    if (val[pos[b]] > 0.0 && bisect(starts[neg[a]], starts[pos[b]], box, z)) return true;
        } else {
            std::vector<double> val(starts.size());
            for (std::size_t k = 0; k < starts.size(); ++k) val[k] = poly_.evaluate(starts[k]).norm();
            std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return val[a] < val[b]; });
        }
        for (std::size_t k = 0; k < std::min<std::size_t>(order.size(), 6); ++k)
            if (gauss_newton(starts[order[k]], box, z)) return true;
        return false;
    }

    bool find_zero(const std::vector<Interval>& box, int depth, std::vector<double>& z) const {
        if (excluded(box)) return false;
        if (try_box(box, z)) return true;
        if (depth == 0) return false;
        std::size_t widest = 0;
        for (std::size_t k = 1; k < box.size(); ++k)
            if (box[k].width() > box[widest].width()) widest = k;
        const double mid = box[widest].mid();
        auto left = box, right = box;
        left[widest].hi = mid;
        right[widest].lo = mid;
        return find_zero(left, depth - 1, z) || find_zero(right, depth - 1, z);
    }

    ConfigDescriptor desc_;
    int d_, m_, n_;
    DetectionOptions options_;
    double tol_ = 0.0;
    double sep_u_ = 0.0;
    double a_floor_ = 0.0;
    double lambda_u_ = 0.0;
    std::vector<double> shift_u_;
    PolynomialMap poly_;
    std::vector<std::vector<double>> samples_;
    std::vector<std::vector<CubeCode>> levels_;
    std::span<const CubeCode> all_;
    std::size_t visits_ = 0;
    std::size_t found_ = 0;
    bool stop_ = false;
};

std::vector<CubeCode> sorted_unique(std::span<const CubeCode> cubes) {
    std::vector<CubeCode> v(cubes.begin(), cubes.end());
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    return v;
}

}  // namespace

std::size_t enumerate_witnesses(std::span<const CubeCode> cubes, int n, const ConfigDescriptor& desc,
                                const DetectionOptions& options, const std::function<bool(const Witness&)>& visit) {
    const auto sorted = sorted_unique(cubes);
    Engine engine(sorted, n, desc, options);
    return engine.run(visit, sorted);
}

DetectionResult detect_configuration(std::span<const CubeCode> cubes, int n, const ConfigDescriptor& desc,
                                     const DetectionOptions& options) {
    const auto sorted = sorted_unique(cubes);
    Engine engine(sorted, n, desc, options);
    DetectionResult res;
    res.tolerance = engine.tolerance();
    res.n = n;
    engine.run(
        [&](const Witness& w) {
            res.present = true;
            res.witness = w;
            return false;
        },
        sorted);
    res.visits = engine.visits();
    return res;
}

DetectionResult detect_configuration(const PercolationTree& tree, int n, const ConfigDescriptor& desc,
                                     const DetectionOptions& options) {
    if (desc.d != tree.dim()) throw std::invalid_argument("descriptor and tree dimensions differ");
    return detect_configuration(tree.level(n), n, desc, options);
}

bool verify_witness(std::span<const CubeCode> cubes, int n, const ConfigDescriptor& desc,
                    const DetectionOptions& options, const Witness& w) {
    const int d = desc.d, m = desc.m;
    if (static_cast<int>(w.cubes.size()) != m || static_cast<int>(w.points.size()) != m * d) return false;
    const double tol = detection_tolerance(desc, n, options);
    const double h = std::ldexp(1.0, -n);
    const bool sorted = std::is_sorted(cubes.begin(), cubes.end());
    for (int j = 0; j < m; ++j) {
        const CubeCode c = w.cubes[j];
        const bool present = sorted ? std::binary_search(cubes.begin(), cubes.end(), c)
                                    : std::find(cubes.begin(), cubes.end(), c) != cubes.end();
        if (!present) return false;
        const auto idx = decode(c, d, n);
        for (int i = 0; i < d; ++i)
            if (std::abs(w.points[j * d + i] - (idx[i] + 0.5) * h) > tol * (1.0 + kVerifySlack)) return false;
    }
    if (desc.family != Family::translate)
        for (int j = 0; j < m; ++j)
            for (int k = j + 1; k < m; ++k)
                if (w.cubes[j] == w.cubes[k]) return false;
    if (desc.scale_invariant()) {
        const double sep = std::max(tol, options.min_scale);
        if (min_pairwise(w.points, d, m) < sep * (1.0 - kVerifySlack)) return false;
    }
    if (desc.family == Family::homothetic || desc.family == Family::translate) {
        const bool hom = desc.family == Family::homothetic;
        if (static_cast<int>(w.params.size()) != (hom ? d + 1 : d)) return false;
        const double a = hom ? w.params[0] : 1.0;
        if (!(a > 0.0)) return false;
        const int off = hom ? 1 : 0;
        for (int j = 0; j < m; ++j)
            for (int i = 0; i < d; ++i) {
                const double expect = a * desc.points[j * d + i] + w.params[off + i];
                if (std::abs(w.points[j * d + i] - expect) > 1e-12 * std::max(1.0, std::abs(expect))) return false;
            }
        return true;
    }
    const PolynomialMap p = configuration_polynomial(desc);
    const Eigen::VectorXd r = p.evaluate(w.points);
    const Eigen::VectorXd mag = p.magnitude(w.points);
    for (Eigen::Index i = 0; i < r.size(); ++i)
        if (std::abs(r[i]) > 1e-7 * std::max(mag[i], 1e-300)) return false;
    return satisfies_side_conditions(desc, w.points);
}

// --- realized values ------------------------------------------------------

const char* to_string(Functional f) {
    switch (f) {
        case Functional::distance: return "distance";
        case Functional::angle: return "angle";
        case Functional::volume: return "volume";
    }
    return "?";
}

Functional parse_functional(const std::string& name) {
    if (name == "distance") return Functional::distance;
    if (name == "angle") return Functional::angle;
    if (name == "volume") return Functional::volume;
    throw std::invalid_argument("unknown functional '" + name + "'");
}

IntervalSet merge_intervals(std::vector<stats::Interval> pieces) {
    std::sort(pieces.begin(), pieces.end(), [](const auto& a, const auto& b) { return a.lo < b.lo; });
    IntervalSet out;
    for (const auto& p : pieces) {
        if (!out.empty() && p.lo <= out.back().hi)
            out.back().hi = std::max(out.back().hi, p.hi);
        else
            out.push_back(p);
    }
    return out;
}

bool covers(const IntervalSet& set, double lo, double hi) {
    for (const auto& iv : set)
        if (iv.lo <= lo && hi <= iv.hi) return true;
    return false;
}

double total_length(const IntervalSet& set) {
    double s = 0.0;
    for (const auto& iv : set) s += iv.width();
    return s;
}

namespace {

std::mutex& fftw_planner_mutex() {
    static std::mutex m;
    return m;
}

// Squared integer norms of the nonzero difference vectors of A_n, found as
// the support of the autocorrelation of its indicator on a padded grid.
std::set<std::int64_t> difference_norms(std::span<const CubeCode> cubes, int d, int n) {
    if (d * (n + 1) > 26) throw BudgetError("distance autocorrelation grid too large");
    const std::size_t G = std::size_t{1} << n, L = 2 * G;
    std::size_t total = 1;
    for (int i = 0; i < d; ++i) total *= L;
    const std::size_t complex_size = total / L * (L / 2 + 1);
    std::vector<double> grid(total, 0.0);
    for (CubeCode c : cubes) {
        const auto idx = decode(c, d, n);
        std::size_t off = 0;
        for (int i = 0; i < d; ++i) off = off * L + idx[i];
        grid[off] = 1.0;
    }
    fftw_complex* spectrum = fftw_alloc_complex(complex_size);
    std::vector<int> dims(d, static_cast<int>(L));
    fftw_plan forward, backward;
    {
        std::lock_guard lock(fftw_planner_mutex());
        forward = fftw_plan_dft_r2c(d, dims.data(), grid.data(), spectrum, FFTW_ESTIMATE);
        backward = fftw_plan_dft_c2r(d, dims.data(), spectrum, grid.data(), FFTW_ESTIMATE);
    }
    fftw_execute(forward);
    for (std::size_t k = 0; k < complex_size; ++k) {
        spectrum[k][0] = spectrum[k][0] * spectrum[k][0] + spectrum[k][1] * spectrum[k][1];
        spectrum[k][1] = 0.0;
    }
    fftw_execute(backward);
    {
        std::lock_guard lock(fftw_planner_mutex());
        fftw_destroy_plan(forward);
        fftw_destroy_plan(backward);
    }
    fftw_free(spectrum);
    std::set<std::int64_t> norms;
    const double scale = static_cast<double>(total);
    for (std::size_t off = 0; off < total; ++off) {
        if (grid[off] / scale < 0.5) continue;
        std::size_t rest = off;
        std::int64_t norm2 = 0;
        for (int i = d - 1; i >= 0; --i) {
            const auto c = static_cast<std::int64_t>(rest % L);
            rest /= L;
            const std::int64_t delta = c < static_cast<std::int64_t>(G) ? c : c - static_cast<std::int64_t>(L);
            norm2 += delta * delta;
        }
        if (norm2 > 0) norms.insert(norm2);
    }
    return norms;
}

std::vector<std::vector<double>> centers_of(std::span<const CubeCode> cubes, int d, int n) {
    const double h = std::ldexp(1.0, -n);
    std::vector<std::vector<double>> out;
    out.reserve(cubes.size());
    for (CubeCode c : cubes) {
        const auto idx = decode(c, d, n);
        std::vector<double> x(d);
        for (int i = 0; i < d; ++i) x[i] = (idx[i] + 0.5) * h;
        out.push_back(std::move(x));
    }
    return out;
}

}  // namespace

IntervalSet realized_value_set(std::span<const CubeCode> cubes, int d, int n, Functional f, std::size_t max_tuples) {
    const double h = std::ldexp(1.0, -n);
    const double slack = std::sqrt(static_cast<double>(d)) * h;
    std::vector<stats::Interval> pieces;
    const auto N = static_cast<double>(cubes.size());
    switch (f) {
        case Functional::distance: {
            for (std::int64_t norm2 : difference_norms(cubes, d, n)) {
                const double c = std::sqrt(static_cast<double>(norm2)) * h;
                pieces.push_back({std::max(0.0, c - slack), c + slack});
            }
            break;
        }
        case Functional::angle: {
            if (d < 2) throw std::invalid_argument("angles need d >= 2");
            if (N * N * N / 2 > static_cast<double>(max_tuples)) throw BudgetError("too many cube triples");
            const auto x = centers_of(cubes, d, n);
            const double pi = std::acos(-1.0);
            for (std::size_t v = 0; v < x.size(); ++v)
                for (std::size_t a = 0; a < x.size(); ++a) {
                    if (a == v) continue;
                    for (std::size_t b = a + 1; b < x.size(); ++b) {
                        if (b == v) continue;
                        double dot = 0, na = 0, nb = 0;
                        for (int i = 0; i < d; ++i) {
                            const double p = x[a][i] - x[v][i], q = x[b][i] - x[v][i];
                            dot += p * q;
                            na += p * p;
                            nb += q * q;
                        }
                        na = std::sqrt(na);
                        nb = std::sqrt(nb);
                        const double theta = std::acos(std::clamp(dot / (na * nb), -1.0, 1.0));
                        const double w = std::asin(std::min(1.0, slack / na)) + std::asin(std::min(1.0, slack / nb));
                        pieces.push_back({std::max(0.0, theta - w), std::min(pi, theta + w)});
                    }
                }
            break;
        }
        case Functional::volume: {
            const int k = d + 1;
            double combos = 1.0;
            for (int i = 0; i < k; ++i) combos *= (N - i) / (i + 1);
            if (combos > static_cast<double>(max_tuples)) throw BudgetError("too many cube tuples");
            if (static_cast<int>(cubes.size()) < k) break;
            // v = 0 leaves the determinant itself
            ConfigDescriptor desc;
            desc.family = Family::volume;
            desc.d = d;
            desc.m = k;
            desc.lambda = 1.0;
            const PolynomialMap p = configuration_polynomial(desc);
            const double shift = factorial(d);
            const auto x = centers_of(cubes, d, n);
            std::vector<int> pick(k);
            std::iota(pick.begin(), pick.end(), 0);
            const int total = static_cast<int>(cubes.size());
            std::vector<Interval> box(k * d);
            for (;;) {
                for (int j = 0; j < k; ++j)
                    for (int i = 0; i < d; ++i)
                        box[j * d + i] = Interval{x[pick[j]][i] - 0.5 * h, x[pick[j]][i] + 0.5 * h};
                const Interval det = p.enclose(box)[0] + Interval::point(shift);
                double lo = 0.0, hi = std::max(std::abs(det.lo), std::abs(det.hi));
                if (!det.contains_zero()) lo = std::min(std::abs(det.lo), std::abs(det.hi));
                pieces.push_back({lo / shift, hi / shift});
                int j = k - 1;
                while (j >= 0 && pick[j] == total - k + j) --j;
                if (j < 0) break;
                ++pick[j];
                for (int t = j + 1; t < k; ++t) pick[t] = pick[t - 1] + 1;
            }
            break;
        }
    }
    return merge_intervals(std::move(pieces));
}

// --- experiments ----------------------------------------------------------

void check_sweep_grid(const ConfigDescriptor& desc, std::span<const double> p_grid, const SweepOptions& options) {
    desc.validate();
    for (double p : p_grid) {
        if (!(p > 0.0 && p <= 1.0)) throw std::invalid_argument("p must lie in (0, 1]");
        if (!options.coupled && options.variant == Variant::surviving && p <= std::ldexp(1.0, -desc.d))
            throw std::invalid_argument("surviving variant needs p > 2^-d");
    }
}

std::vector<std::uint8_t> sweep_column(const ConfigDescriptor& desc, double p, std::size_t p_index, int n,
                                       std::size_t r_begin, std::size_t r_end, const SweepOptions& options) {
    std::vector<std::uint8_t> out(r_end - r_begin, 0);
    parallel_for(out.size(), options.threads, [&](std::size_t k) {
        const std::uint64_t key =
            make_key(options.seed, {static_cast<std::uint64_t>(Domain::replicate), p_index, r_begin + k});
        const PercolationTree t = sample_tree(make_law(desc.d, p), options.variant, key, n, options.budget);
        out[k] = detect_configuration(t.level(n), n, desc, options.detection).present;
    });
    return out;
}

std::vector<std::vector<std::uint8_t>> coupled_rows(const ConfigDescriptor& desc, std::span<const double> p_grid,
                                                    int n, std::size_t r_begin, std::size_t r_end,
                                                    const SweepOptions& options) {
    std::vector<std::vector<std::uint8_t>> out(r_end - r_begin, std::vector<std::uint8_t>(p_grid.size(), 0));
    parallel_for(out.size(), options.threads, [&](std::size_t k) {
        const std::uint64_t key = make_key(options.seed, {static_cast<std::uint64_t>(Domain::replicate), r_begin + k});
        for (std::size_t i = 0; i < p_grid.size(); ++i) {
            const PercolationTree t = coupled_slice(desc.d, key, p_grid[i], n, options.budget);
            out[k][i] = detect_configuration(t.level(n), n, desc, options.detection).present;
        }
    });
    return out;
}

SweepRow sweep_row(double p, std::size_t present, std::size_t replicates) {
    SweepRow row;
    row.p = p;
    row.present = present;
    row.replicates = replicates;
    row.frequency = replicates ? static_cast<double>(present) / static_cast<double>(replicates) : 0.0;
    row.ci = stats::wilson(present, replicates);
    return row;
}

SweepResult threshold_sweep(const ConfigDescriptor& desc, std::span<const double> p_grid, int n, std::size_t R,
                            const SweepOptions& options) {
    check_sweep_grid(desc, p_grid, options);
    const std::size_t P = p_grid.size();
    SweepResult result;
    if (options.coupled) {
        result.presence = coupled_rows(desc, p_grid, n, 0, R, options);
    } else {
        result.presence.assign(R, std::vector<std::uint8_t>(P, 0));
        for (std::size_t i = 0; i < P; ++i) {
            const auto column = sweep_column(desc, p_grid[i], i, n, 0, R, options);
            for (std::size_t r = 0; r < R; ++r) result.presence[r][i] = column[r];
        }
    }
    std::vector<std::size_t> order(P);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return p_grid[a] < p_grid[b]; });
    for (const auto& row : result.presence)
        for (std::size_t k = 1; k < P; ++k)
            if (row[order[k]] < row[order[k - 1]]) result.monotone = false;
    for (std::size_t i = 0; i < P; ++i) {
        std::size_t present = 0;
        for (std::size_t r = 0; r < R; ++r) present += result.presence[r][i];
        result.rows.push_back(sweep_row(p_grid[i], present, R));
    }
    return result;
}

ParameterDimension pattern_parameter_dimension(const PercolationTree& tree, const ConfigDescriptor& desc, int n,
                                               int j_lo, int j_hi, const DetectionOptions& options) {
    if (desc.family != Family::homothetic) throw std::invalid_argument("parameter sets are defined for homothetic patterns");
    if (desc.d != tree.dim()) throw std::invalid_argument("descriptor and tree dimensions differ");
    if (j_lo < 0 || j_hi < j_lo || j_hi > 20) throw std::invalid_argument("scale range must satisfy 0 <= j_lo <= j_hi <= 20");
    const int d = desc.d;
    ParameterDimension out;
    out.predicted = desc.m * (tree.law().s - d) + d + 1;
    const int J = j_hi - j_lo + 1;
    std::vector<std::unordered_set<std::uint64_t>> boxes(J);
    if (n <= tree.depth() && !tree.level(n).empty()) {
        out.witnesses = enumerate_witnesses(tree.level(n), n, desc, options, [&](const Witness& w) {
            const double a = w.params[0];
            if (!(a > 0.0 && a <= 1.0)) return true;
            for (int i = 0; i < d; ++i)
                if (w.params[1 + i] < 0.0 || w.params[1 + i] > 1.0) return true;
            for (int k = 0; k < J; ++k) {
                const int j = j_lo + k;
                const double scale = std::ldexp(1.0, j);
                const std::uint64_t top = (std::uint64_t{1} << j) - 1;
                std::uint64_t key = 0;
                for (int c = 0; c <= d; ++c) {
                    const double v = c == 0 ? a : w.params[c];
                    const auto cell = std::min<std::uint64_t>(static_cast<std::uint64_t>(v * scale), top);
                    key = combine(key, cell);
                }
                boxes[k].insert(key);
            }
            return true;
        });
    }
    std::vector<double> xs, ys;
    bool all_positive = true;
    for (int k = 0; k < J; ++k) {
        out.levels.push_back(j_lo + k);
        out.counts.push_back(boxes[k].size());
        if (boxes[k].empty()) all_positive = false;
        xs.push_back(j_lo + k);
        ys.push_back(boxes[k].empty() ? 0.0 : std::log2(static_cast<double>(boxes[k].size())));
    }
    out.slope = (all_positive && J >= 2) ? stats::least_squares(xs, ys).slope : 0.0;
    return out;
}

std::vector<CubeCode> segment_cubes(std::span<const double> a, std::span<const double> b, int n) {
    const int d = static_cast<int>(a.size());
    if (static_cast<int>(b.size()) != d) throw std::invalid_argument("segment endpoints differ in dimension");
    if (d * n > kMaxCodeBits) throw BudgetError("d * n exceeds the cube code width");
    const std::uint32_t top = (std::uint32_t{1} << n) - 1;
    const std::size_t steps = (std::size_t{8} << n) * static_cast<std::size_t>(d);
    std::vector<CubeCode> out;
    std::vector<std::uint32_t> idx(d);
    for (std::size_t s = 0; s <= steps; ++s) {
        const double t = static_cast<double>(s) / static_cast<double>(steps);
        bool inside = true;
        for (int i = 0; i < d; ++i) {
            const double x = (1.0 - t) * a[i] + t * b[i];
            if (x < 0.0 || x > 1.0) inside = false;
            idx[i] = std::min(top, static_cast<std::uint32_t>(std::max(0.0, x) * std::ldexp(1.0, n)));
        }
        if (inside) out.push_back(encode(idx, n));
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

PercolationDimensionResult percolation_dimension_test(std::span<const CubeCode> B, int d, int n,
                                                      std::span<const double> p_grid, std::size_t R,
                                                      std::uint64_t seed, int threads) {
    if (B.empty()) throw std::invalid_argument("the test set B is empty");
    if (p_grid.size() < 2) throw std::invalid_argument("need at least two retention values");
    if (!std::is_sorted(p_grid.begin(), p_grid.end())) throw std::invalid_argument("p grid must be increasing");
    std::vector<std::vector<CubeCode>> levels(n + 1);
    levels[n] = sorted_unique(B);
    for (int l = n - 1; l >= 0; --l)
        for (CubeCode c : levels[l + 1])
            if (levels[l].empty() || levels[l].back() != (c >> d)) levels[l].push_back(c >> d);
    // Per replicate: the smallest p at which some cube of B is retained in
    // the coupled field, i.e. min over B of the max U along its ancestry.
    std::vector<double> tau(R);
    parallel_for(R, threads, [&](std::size_t r) {
        const std::uint64_t key = make_key(seed, {static_cast<std::uint64_t>(Domain::replicate), r});
        std::vector<double> below(levels[n].size());
        for (std::size_t k = 0; k < levels[n].size(); ++k) below[k] = retention_uniform(key, n, levels[n][k]);
        for (int l = n - 1; l >= 0; --l) {
            std::vector<double> up(levels[l].size(), std::numeric_limits<double>::infinity());
            std::size_t k = 0;
            for (std::size_t c = 0; c < levels[l + 1].size(); ++c) {
                while (levels[l][k] != (levels[l + 1][c] >> d)) ++k;
                up[k] = std::min(up[k], below[c]);
            }
            if (l > 0)
                for (std::size_t c = 0; c < up.size(); ++c) up[c] = std::max(up[c], retention_uniform(key, l, levels[l][c]));
            below = std::move(up);
        }
        tau[r] = below.empty() ? std::numeric_limits<double>::infinity() : below[0];
    });
    PercolationDimensionResult out;
    out.p_grid.assign(p_grid.begin(), p_grid.end());
    for (double p : p_grid) {
        std::size_t hit = 0;
        for (double t : tau) hit += t <= p;
        out.frequency.push_back(R ? static_cast<double>(hit) / static_cast<double>(R) : 0.0);
        out.ci.push_back(stats::wilson(hit, R));
    }
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i + 1 < p_grid.size(); ++i) {
        const double slope = (out.frequency[i + 1] - out.frequency[i]) / (p_grid[i + 1] - p_grid[i]);
        if (slope > best) {
            best = slope;
            out.p_star = 0.5 * (p_grid[i] + p_grid[i + 1]);
        }
    }
    out.dimension = -std::log2(out.p_star);
    return out;
}

const char* to_string(Removal r) { return r == Removal::random ? "random" : "greedy"; }

Removal parse_removal(const std::string& name) {
    if (name == "random") return Removal::random;
    if (name == "greedy" || name == "adversarial-greedy" || name == "adversarial") return Removal::greedy;
    throw std::invalid_argument("unknown removal strategy '" + name + "'");
}

bool stress_once(std::span<const CubeCode> cubes, int n, const ConfigDescriptor& desc, double f, Removal strategy,
                 std::uint64_t key, const DetectionOptions& options, std::size_t max_tuples) {
    if (!(f >= 0.0 && f < 1.0)) throw std::invalid_argument("removal fraction must lie in [0, 1)");
    const auto all = sorted_unique(cubes);
    const std::size_t N = all.size();
    const auto k = static_cast<std::size_t>(std::ceil(f * static_cast<double>(N)));
    std::vector<std::uint8_t> removed(N, 0);
    if (strategy == Removal::random) {
        std::vector<std::size_t> perm(N);
        std::iota(perm.begin(), perm.end(), 0);
        KeyedStream stream(key);
        for (std::size_t i = 0; i < k; ++i) {
            const std::size_t j = i + stream.below(N - i);
            std::swap(perm[i], perm[j]);
            removed[perm[i]] = 1;
        }
    } else if (k > 0) {
        // witness tuples as cube indices, then greedy hitting
        std::vector<std::vector<std::size_t>> tuples;
        enumerate_witnesses(all, n, desc, options, [&](const Witness& w) {
            if (tuples.size() >= max_tuples) throw BudgetError("too many witness tuples for greedy removal");
            std::vector<std::size_t> t;
            for (CubeCode c : w.cubes)
                t.push_back(static_cast<std::size_t>(std::lower_bound(all.begin(), all.end(), c) - all.begin()));
            std::sort(t.begin(), t.end());
            t.erase(std::unique(t.begin(), t.end()), t.end());
            tuples.push_back(std::move(t));
            return true;
        });
        std::vector<std::size_t> count(N, 0);
        std::vector<std::vector<std::size_t>> incident(N);
        for (std::size_t t = 0; t < tuples.size(); ++t)
            for (auto c : tuples[t]) {
                ++count[c];
                incident[c].push_back(t);
            }
        std::vector<std::uint8_t> dead(tuples.size(), 0);
        for (std::size_t step = 0; step < k; ++step) {
            std::size_t pick = N;
            for (std::size_t c = 0; c < N; ++c)
                if (!removed[c] && (pick == N || count[c] > count[pick])) pick = c;
            removed[pick] = 1;
            for (auto t : incident[pick]) {
                if (dead[t]) continue;
                dead[t] = 1;
                for (auto c : tuples[t]) --count[c];
            }
        }
    }
    std::vector<CubeCode> kept;
    for (std::size_t c = 0; c < N; ++c)
        if (!removed[c]) kept.push_back(all[c]);
    return detect_configuration(kept, n, desc, options).present;
}

StressResult subset_stress_test(const GaltonWatsonLaw& law, Variant variant, const ConfigDescriptor& desc, double f,
                                Removal strategy, int n, std::size_t R, std::uint64_t seed, int threads,
                                const DetectionOptions& options) {
    if (desc.d != law.d) throw std::invalid_argument("descriptor and law dimensions differ");
    std::vector<std::uint8_t> before(R, 0), after(R, 0);
    parallel_for(R, threads, [&](std::size_t r) {
        const PercolationTree t =
            sample_tree(law, variant, make_key(seed, {static_cast<std::uint64_t>(Domain::replicate), r}), n);
        before[r] = detect_configuration(t.level(n), n, desc, options).present;
        after[r] = stress_once(t.level(n), n, desc, f, strategy,
                               make_key(seed, {static_cast<std::uint64_t>(Domain::removal), r}), options);
    });
    StressResult out;
    out.replicates = R;
    for (std::size_t r = 0; r < R; ++r) {
        out.present += after[r];
        out.before += before[r];
    }
    out.frequency = R ? static_cast<double>(out.present) / static_cast<double>(R) : 0.0;
    out.ci = stats::wilson(out.present, R);
    return out;
}

TreeEvent parse_event(const std::string& text, int d) {
    if (text == "always") return [](const PercolationTree&, int) { return true; };
    if (text == "left" || text == "right") {
        const std::uint64_t want = text == "right";
        return [want, d](const PercolationTree& t, int n) {
            if (n == 0) return !t.level(0).empty();
            for (CubeCode c : t.level(n))
                if (((c >> (d * (n - 1))) & 1) == want) return true;
            return false;
        };
    }
    const auto colon = text.find(':');
    const std::string head = text.substr(0, colon);
    if (colon != std::string::npos && head == "count") {
        const std::size_t k = static_cast<std::size_t>(parse_int(text.substr(colon + 1)));
        return [k](const PercolationTree& t, int n) { return t.level(n).size() >= k; };
    }
    if (colon != std::string::npos && head == "cube") {
        const auto second = text.find(':', colon + 1);
        if (second == std::string::npos) throw std::invalid_argument("cube event needs cube:L:i1,...,id");
        const int level = parse_int(text.substr(colon + 1, second - colon - 1));
        const auto coords = parse_list(text.substr(second + 1));
        if (static_cast<int>(coords.size()) != d) throw std::invalid_argument("cube event index has the wrong length");
        std::vector<std::uint32_t> idx;
        for (double v : coords) {
            if (v < 0 || v >= std::ldexp(1.0, level) || v != std::floor(v))
                throw std::invalid_argument("cube event index out of range");
            idx.push_back(static_cast<std::uint32_t>(v));
        }
        const CubeCode code = encode(idx, level);
        return [level, code](const PercolationTree& t, int n) {
            if (level > n) throw std::invalid_argument("cube event deeper than the tree");
            return t.contains(level, code);
        };
    }
    throw std::invalid_argument("unknown event '" + text + "'");
}

bool check_monotone(const TreeEvent& event, int d, int n, std::uint64_t seed, int pairs) {
    const double lo = std::ldexp(1.0, -d);
    for (int k = 0; k < pairs; ++k) {
        KeyedStream s(make_key(seed, {static_cast<std::uint64_t>(Domain::monotone_check), static_cast<std::uint64_t>(k)}));
        const double p2 = lo + (1.0 - lo) * s.uniform();
        const double p1 = p2 * s.uniform();
        const std::uint64_t field = s();
        const PercolationTree small = coupled_slice(d, field, p1, n);
        const PercolationTree large = coupled_slice(d, field, p2, n);
        if (event(small, n) && !event(large, n)) return false;
    }
    return true;
}

HarrisResult harris_check(const TreeEvent& c1, const TreeEvent& c2, const GaltonWatsonLaw& law, Variant variant,
                          int n, std::size_t R, std::uint64_t seed, int threads) {
    if (!check_monotone(c1, law.d, n, seed) || !check_monotone(c2, law.d, n, seed))
        throw std::invalid_argument("event is not closed under supersets");
    if (R == 0) throw std::invalid_argument("need at least one replicate");
    std::vector<std::uint8_t> x1(R), x2(R);
    parallel_for(R, threads, [&](std::size_t r) {
        const PercolationTree t =
            sample_tree(law, variant, make_key(seed, {static_cast<std::uint64_t>(Domain::replicate), r}), n);
        x1[r] = c1(t, n);
        x2[r] = c2(t, n);
    });
    std::size_t n1 = 0, n2 = 0, n12 = 0;
    for (std::size_t r = 0; r < R; ++r) {
        n1 += x1[r];
        n2 += x2[r];
        n12 += x1[r] && x2[r];
    }
    HarrisResult out;
    out.replicates = R;
    const double Rd = static_cast<double>(R);
    out.p1 = n1 / Rd;
    out.p2 = n2 / Rd;
    out.p12 = n12 / Rd;
    out.ci1 = stats::wilson(n1, R);
    out.ci2 = stats::wilson(n2, R);
    out.ci12 = stats::wilson(n12, R);
    const double factor = 1.0 - law.q;
    out.margin = out.p12 - factor * out.p1 * out.p2;
    stats::Moments phi;
    for (std::size_t r = 0; r < R; ++r)
        phi.add((x1[r] && x2[r]) - factor * (out.p2 * x1[r] + out.p1 * x2[r]));
    out.sigma = R > 1 ? phi.std_error() : 0.0;
    out.violation = out.margin < -4.0 * out.sigma - 1e-12;
    return out;
}

BoxDimension box_dimension_estimate(const PercolationTree& tree, int j_lo, int j_hi) {
    if (j_hi - j_lo + 1 < 3) throw std::invalid_argument("box dimension needs at least three levels");
    if (j_lo < 0 || j_hi > tree.depth()) throw std::invalid_argument("level range outside the tree");
    BoxDimension out;
    for (int j = j_lo; j <= j_hi; ++j) {
        const std::size_t count = tree.survivor_count(j);
        if (count == 0) throw std::invalid_argument("level " + std::to_string(j) + " is empty");
        out.levels.push_back(j);
        out.log_counts.push_back(std::log2(static_cast<double>(count)));
    }
    std::vector<double> xs(out.levels.begin(), out.levels.end());
    out.slope = stats::least_squares(xs, out.log_counts).slope;
    return out;
}

}  // namespace fracperc
