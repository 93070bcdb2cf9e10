#include "fracperc/harness.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <csignal>
#include <numeric>
#include <sstream>

#include "fracperc/errors.hpp"
#include "fracperc/intersect.hpp"
#include "fracperc/parallel.hpp"
#include "fracperc/patterns.hpp"
#include "fracperc/random.hpp"
#include "fracperc/stats.hpp"

namespace fracperc::harness {

namespace fs = std::filesystem;

// --- configuration ----------------------------------------------------------

namespace {

std::string join(const std::vector<std::string>& parts, const std::string& sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) out += (i ? sep : "") + parts[i];
    return out;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

template <class T>
bool parse_value(const std::string& text, T& out) {
    const auto res = std::from_chars(text.data(), text.data() + text.size(), out);
    return res.ec == std::errc() && res.ptr == text.data() + text.size();
}

}  // namespace

ConfigError::ConfigError(std::vector<std::string> issues)
    : std::runtime_error("invalid configuration: " + join(issues, "; ")), issues_(std::move(issues)) {}

Config Config::parse(std::istream& in, const std::string& origin) {
    Config c;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos || trim(line.substr(0, eq)).empty()) {
            c.issues_.push_back(origin + ":" + std::to_string(lineno) + ": expected key = value");
            continue;
        }
        c.values_[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return c;
}

Config Config::from_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError({"cannot read config file " + path.string()});
    return parse(in, path.string());
}

void Config::set(const std::string& key, const std::string& value) { values_[key] = value; }

void Config::merge(const Config& other) {
    for (const auto& [k, v] : other.values_) values_[k] = v;
    issues_.insert(issues_.end(), other.issues_.begin(), other.issues_.end());
}

std::string Config::lookup(const std::string& key, const std::string& fallback) {
    used_[key] = true;
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
}

std::string Config::get_string(const std::string& key, const std::string& fallback) {
    const std::string v = lookup(key, fallback);
    resolved_[key] = v;
    return v;
}

int Config::get_int(const std::string& key, int fallback) {
    const std::string text = lookup(key, std::to_string(fallback));
    int v = fallback;
    if (!parse_value(text, v)) {
        issues_.push_back(key + ": expected an integer, got '" + text + "'");
        v = fallback;
    }
    resolved_[key] = v;
    return v;
}

std::uint64_t Config::get_u64(const std::string& key, std::uint64_t fallback) {
    const std::string text = lookup(key, std::to_string(fallback));
    std::uint64_t v = fallback;
    if (!parse_value(text, v)) {
        issues_.push_back(key + ": expected an unsigned integer, got '" + text + "'");
        v = fallback;
    }
    resolved_[key] = v;
    return v;
}

double Config::get_double(const std::string& key, double fallback) {
    const std::string text = lookup(key, format_double(fallback));
    double v = fallback;
    if (!parse_value(text, v) || !std::isfinite(v)) {
        issues_.push_back(key + ": expected a finite number, got '" + text + "'");
        v = fallback;
    }
    resolved_[key] = v;
    return v;
}

bool Config::get_bool(const std::string& key, bool fallback) {
    const std::string text = lookup(key, fallback ? "true" : "false");
    bool v = fallback;
    if (text == "true" || text == "1" || text == "yes" || text == "on")
        v = true;
    else if (text == "false" || text == "0" || text == "no" || text == "off")
        v = false;
    else
        issues_.push_back(key + ": expected true or false, got '" + text + "'");
    resolved_[key] = v;
    return v;
}

std::vector<double> Config::get_doubles(const std::string& key, const std::vector<double>& fallback) {
    std::vector<std::string> parts;
    for (double v : fallback) parts.push_back(format_double(v));
    const std::string text = lookup(key, join(parts, ","));
    std::vector<double> out;
    bool ok = true;
    if (text.find(':') != std::string::npos) {
        double lo, hi, step;
        std::vector<std::string> f;
        std::stringstream ss(text);
        for (std::string t; std::getline(ss, t, ':');) f.push_back(trim(t));
        ok = f.size() == 3 && parse_value(f[0], lo) && parse_value(f[1], hi) && parse_value(f[2], step) && step > 0 &&
             hi >= lo;
        if (ok) {
            const auto count = static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9)) + 1;
            ok = count <= 100000;
            for (std::size_t i = 0; ok && i < count; ++i) out.push_back(lo + static_cast<double>(i) * step);
        }
    } else if (!text.empty()) {
        std::stringstream ss(text);
        for (std::string t; std::getline(ss, t, ',');) {
            double v;
            if (!parse_value(trim(t), v) || !std::isfinite(v)) ok = false;
            out.push_back(v);
        }
    }
    if (!ok) {
        issues_.push_back(key + ": expected a list 'a,b,c' or a range 'lo:hi:step', got '" + text + "'");
        out = fallback;
    }
    resolved_[key] = out;
    return out;
}

void Config::require(bool condition, const std::string& issue) {
    if (!condition) issues_.push_back(issue);
}

void Config::finish() {
    std::vector<std::string> all = issues_;
    for (const auto& [k, v] : values_)
        if (!used_.count(k)) all.push_back(k + ": unknown key for this command");
    if (!all.empty()) throw ConfigError(all);
}

// --- output helpers -----------------------------------------------------------

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

CsvWriter::CsvWriter(const fs::path& path, const std::vector<std::string>& header)
    : out_(path), columns_(header.size()) {
    if (!out_) throw std::runtime_error("cannot write " + path.string());
    for (const auto& h : header) *this << h;
    end_row();
    rows_ = 0;
}

CsvWriter& CsvWriter::operator<<(const std::string& field) {
    if (pending_) out_ << ',';
    if (field.find_first_of(",\"\n") != std::string::npos) {
        out_ << '"';
        for (char c : field) {
            if (c == '"') out_ << '"';
            out_ << c;
        }
        out_ << '"';
    } else {
        out_ << field;
    }
    ++pending_;
    return *this;
}

void CsvWriter::end_row() {
    if (pending_ != columns_) throw std::logic_error("CSV row has the wrong number of fields");
    out_ << '\n';
    out_.flush();
    pending_ = 0;
    ++rows_;
}

std::size_t CsvTable::column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
        if (header[i] == name) return i;
    throw ConfigError({"CSV column '" + name + "' missing"});
}

CsvTable read_csv(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError({"cannot read " + path.string()});
    CsvTable table;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::string cur;
        bool quoted = false;
        for (std::size_t i = 0; i < line.size(); ++i) {
            const char c = line[i];
            if (quoted) {
                if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                    cur += '"';
                    ++i;
                } else if (c == '"') {
                    quoted = false;
                } else {
                    cur += c;
                }
            } else if (c == '"') {
                quoted = true;
            } else if (c == ',') {
                fields.push_back(cur);
                cur.clear();
            } else {
                cur += c;
            }
        }
        fields.push_back(cur);
        if (first) {
            table.header = std::move(fields);
            first = false;
        } else {
            if (fields.size() != table.header.size())
                throw ConfigError({path.string() + ": row with " + std::to_string(fields.size()) + " fields, header has " +
                                   std::to_string(table.header.size())});
            table.rows.push_back(std::move(fields));
        }
    }
    return table;
}

void write_svg(const fs::path& path, const std::string& title, const std::string& x_label, const std::string& y_label,
               const std::vector<PlotSeries>& series, bool scatter) {
    constexpr double W = 640, H = 420, L = 70, R = 20, T = 40, B = 55;
    double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
    for (const auto& s : series)
        for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
            if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
            x0 = std::min(x0, s.x[i]);
            x1 = std::max(x1, s.x[i]);
            y0 = std::min(y0, s.y[i]);
            y1 = std::max(y1, s.y[i]);
        }
    if (!(x0 <= x1)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
    if (x1 - x0 < 1e-12) x0 -= 0.5, x1 += 0.5;
    if (y1 - y0 < 1e-12) y0 -= 0.5, y1 += 0.5;
    auto px = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
    auto py = [&](double y) { return H - B - (y - y0) / (y1 - y0) * (H - T - B); };
    auto num = [](double v) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.4g", v);
        return std::string(buf);
    };
    std::ofstream out(path);
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << title << "</text>\n";
    out << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
    out << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
    for (int k = 0; k <= 4; ++k) {
        const double xv = x0 + (x1 - x0) * k / 4, yv = y0 + (y1 - y0) * k / 4;
        out << "<text x=\"" << px(xv) << "\" y=\"" << H - B + 18 << "\" text-anchor=\"middle\">" << num(xv) << "</text>\n";
        out << "<text x=\"" << L - 6 << "\" y=\"" << py(yv) + 4 << "\" text-anchor=\"end\">" << num(yv) << "</text>\n";
    }
    out << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\">" << x_label << "</text>\n";
    out << "<text x=\"16\" y=\"" << (T + H - B) / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
        << (T + H - B) / 2 << ")\">" << y_label << "</text>\n";
    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
    for (std::size_t k = 0; k < series.size(); ++k) {
        const auto& s = series[k];
        const char* color = colors[k % 6];
        std::string pts;
        for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
            if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
            if (scatter)
                out << "<circle cx=\"" << px(s.x[i]) << "\" cy=\"" << py(s.y[i]) << "\" r=\"3\" fill=\"" << color << "\"/>\n";
            else
                pts += num(px(s.x[i])) + "," + num(py(s.y[i])) + " ";
        }
        if (!scatter && !pts.empty())
            out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"" << pts << "\"/>\n";
        out << "<text x=\"" << W - R - 4 << "\" y=\"" << T + 14 * (k + 1) << "\" text-anchor=\"end\" fill=\"" << color
            << "\">" << s.name << "</text>\n";
    }
    out << "</svg>\n";
}

// --- interrupts ---------------------------------------------------------------

std::atomic<bool>& interrupted() {
    static std::atomic<bool> flag{false};
    return flag;
}

namespace {
extern "C" void on_sigint(int) { interrupted().store(true); }
}  // namespace

void install_interrupt_handler() { std::signal(SIGINT, on_sigint); }

// --- experiments ----------------------------------------------------------------

namespace {

constexpr std::size_t kChunk = 64;

struct Context {
    RunOptions options;
    std::uint64_t seed = 1;
    json results = json::object();
    std::vector<std::string> files;
    bool complete = true;

    fs::path file(const std::string& name) {
        files.push_back(name);
        return options.out / name;
    }
    bool stop() {
        if (interrupted().load()) complete = false;
        return !complete;
    }
};

double mean_of(const std::vector<double>& v) {
    return v.empty() ? NAN : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double se_of(const std::vector<double>& v) {
    stats::Moments m;
    for (double x : v) m.add(x);
    return v.size() > 1 ? m.std_error() : 0.0;
}

std::uint64_t replicate_key(std::uint64_t seed, std::size_t r) {
    return make_key(seed, {static_cast<std::uint64_t>(Domain::replicate), r});
}

// Runs body(r) for r in [0, R) in fixed-size chunks, then after(begin, end).
template <class Body, class After>
void chunked(Context& ctx, std::size_t R, Body&& body, After&& after) {
    for (std::size_t b = 0; b < R; b += kChunk) {
        if (ctx.stop()) return;
        const std::size_t e = std::min(R, b + kChunk);
        parallel_for(e - b, ctx.options.threads, [&](std::size_t k) { body(b + k); });
        after(b, e);
    }
}

GaltonWatsonLaw read_law(Config& cfg, int default_d, double default_p, Variant& variant, const char* default_variant) {
    const int d = cfg.get_int("d", default_d);
    const double p = cfg.get_double("p", default_p);
    const std::string v = cfg.get_string("variant", default_variant);
    variant = Variant::extinction;
    try {
        variant = parse_variant(v);
    } catch (const std::invalid_argument&) {
        cfg.require(false, "variant: unknown variant '" + v + "'");
    }
    cfg.require(d >= 1 && d <= 8, "d: must be in [1, 8]");
    cfg.require(p > 0.0 && p <= 1.0, "p: must lie in (0, 1]");
    if (variant == Variant::surviving && d >= 1 && d <= 8)
        cfg.require(p > std::ldexp(1.0, -d), "p: the surviving variant needs p > 2^-d");
    if (d < 1 || d > 8 || !(p > 0.0 && p <= 1.0)) return make_law(1, 1.0);
    return make_law(d, p);
}

ConfigDescriptor read_descriptor(Config& cfg, const std::string& default_family, int d, const std::string& default_points,
                                 double default_lambda) {
    const std::string family = cfg.get_string("family", default_family);
    std::string text = "family=" + family + " d=" + std::to_string(d);
    Family fam = Family::distance;
    try {
        fam = parse_family(family);
    } catch (const std::invalid_argument& e) {
        cfg.require(false, std::string("family: ") + e.what());
        return ConfigDescriptor::distance(1, 1.0);
    }
    switch (fam) {
        case Family::homothetic:
        case Family::translate:
        case Family::isometric:
        case Family::polygon: text += " points=" + cfg.get_string("points", default_points); break;
        case Family::distance:
        case Family::angle: text += " lambda=" + format_double(cfg.get_double("lambda", default_lambda)); break;
        case Family::volume: text += " v=" + format_double(cfg.get_double("v", default_lambda)); break;
        case Family::triangle:
            text += " a=" + format_double(cfg.get_double("a", 1.0)) + " b=" + format_double(cfg.get_double("b", 1.0));
            break;
    }
    try {
        return ConfigDescriptor::parse(text);
    } catch (const std::invalid_argument& e) {
        cfg.require(false, std::string("descriptor: ") + e.what());
        return ConfigDescriptor::distance(1, 1.0);
    }
}

DetectionOptions read_detection(Config& cfg) {
    DetectionOptions o;
    o.C = cfg.get_double("C", 0.0);
    o.min_scale = cfg.get_double("min_scale", 0.0);
    o.max_visits = cfg.get_u64("max_visits", o.max_visits);
    cfg.require(o.min_scale >= 0.0, "min_scale: must be non-negative");
    return o;
}

std::vector<double> read_vector(Config& cfg, const std::string& key, const std::vector<double>& fallback, int size) {
    auto v = cfg.get_doubles(key, fallback);
    if (size >= 0 && static_cast<int>(v.size()) != size) {
        cfg.require(false, key + ": expected " + std::to_string(size) + " values");
        return fallback;
    }
    return v;
}

AffinePlane read_plane(Config& cfg, const std::string& key, const std::string& fallback, int ambient) {
    const std::string text = cfg.get_string(key, fallback);
    try {
        AffinePlane v = parse_plane(text);
        if (v.ambient() != ambient) {
            cfg.require(false, key + ": plane lives in R^" + std::to_string(v.ambient()) + ", expected R^" +
                                   std::to_string(ambient));
            return AffinePlane(Eigen::MatrixXd::Identity(1, ambient), Eigen::VectorXd::Zero(ambient));
        }
        return v;
    } catch (const std::exception& e) {
        cfg.require(false, key + ": " + e.what());
        return AffinePlane(Eigen::MatrixXd::Identity(1, ambient), Eigen::VectorXd::Zero(ambient));
    }
}

std::string default_line(int M) {
    // the line through (0.1, 0.3, ...) with direction (1, 0.5, 1, 0.5, ...)
    std::string s = "1";
    for (int a = 0; a < M; ++a) s += a % 2 ? " 0.3" : " 0.1";
    s += ";";
    for (int a = 0; a < M; ++a) s += a % 2 ? " 0.5" : " 1";
    return s;
}

ProductMeasureSpec read_product(Config& cfg, int default_d, int default_m, double default_p, const char* variant) {
    ProductMeasureSpec spec;
    Variant v;
    spec.law = read_law(cfg, default_d, default_p, v, variant);
    spec.variant = v;
    spec.m = cfg.get_int("m", default_m);
    cfg.require(spec.m >= 1 && spec.m <= 8, "m: must be in [1, 8]");
    const std::string mode = cfg.get_string("mode", "independent");
    try {
        spec.mode = parse_product_mode(mode);
    } catch (const std::invalid_argument&) {
        cfg.require(false, "mode: unknown product mode '" + mode + "'");
    }
    spec.extra_p = cfg.get_double("extra_p", 1.0);
    spec.diagonal_level = cfg.get_int("diagonal_level", 1);
    cfg.require(spec.extra_p > 0.0 && spec.extra_p <= 1.0, "extra_p: must lie in (0, 1]");
    return spec;
}

// --- sample ---

void cmd_sample(Config& cfg, Context& ctx) {
    Variant variant;
    const auto law = read_law(cfg, 2, 0.6, variant, "surviving");
    const int n = cfg.get_int("n", 8);
    const auto R = static_cast<std::size_t>(cfg.get_int("replicates", 1));
    const bool write_cubes = cfg.get_bool("cubes", true);
    cfg.require(n >= 0 && n <= 30, "n: must be in [0, 30]");
    cfg.require(R >= 1, "replicates: must be positive");
    cfg.finish();

    CsvWriter levels(ctx.file("levels.csv"), {"replicate", "seed", "level", "N", "log2N", "mass"});
    std::vector<std::vector<double>> counts(R), masses(R);
    std::vector<double> slopes;
    std::vector<PercolationTree> first;
    chunked(
        ctx, R,
        [&](std::size_t r) {
            const PercolationTree t = sample_tree(law, variant, replicate_key(ctx.seed, r), n);
            for (int j = 0; j <= n; ++j) {
                counts[r].push_back(static_cast<double>(t.survivor_count(j)));
                masses[r].push_back(natural_measure(t, j).total_mass());
            }
            if (r == 0 && write_cubes) {
                std::ofstream out(ctx.options.out / "cubes.txt");
                write_level(out, t, n);
            }
        },
        [&](std::size_t b, std::size_t e) {
            for (std::size_t r = b; r < e; ++r) {
                for (int j = 0; j <= n; ++j) {
                    levels << r << replicate_key(ctx.seed, r) << j << static_cast<std::size_t>(counts[r][j])
                           << (counts[r][j] > 0 ? std::log2(counts[r][j]) : NAN) << masses[r][j];
                    levels.end_row();
                }
                const int lo = n >= 3 ? 1 : 0;
                bool nonempty = n - lo + 1 >= 3;
                for (int j = lo; j <= n && nonempty; ++j) nonempty = counts[r][j] > 0;
                if (nonempty) {
                    std::vector<double> xs, ys;
                    for (int j = lo; j <= n; ++j) {
                        xs.push_back(j);
                        ys.push_back(std::log2(counts[r][j]));
                    }
                    slopes.push_back(stats::least_squares(xs, ys).slope);
                }
            }
        });
    if (write_cubes) ctx.files.push_back("cubes.txt");
    std::vector<double> xs, mean_log;
    for (int j = 0; j <= n; ++j) {
        double s = 0;
        std::size_t c = 0;
        for (std::size_t r = 0; r < levels.rows() / (n + 1); ++r)
            if (counts[r][j] > 0) s += std::log2(counts[r][j]), ++c;
        xs.push_back(j);
        mean_log.push_back(c ? s / c : NAN);
    }
    write_svg(ctx.file("levels.svg"), "surviving cubes per level", "level j", "mean log2 N_j", {{"log2 N_j", xs, mean_log}});
    ctx.results["slope"] = mean_of(slopes);
    ctx.results["slope_se"] = se_of(slopes);
    ctx.results["slope_replicates"] = slopes.size();
    ctx.results["predicted_s"] = law.s;
    std::vector<double> last_mass;
    for (std::size_t r = 0; r < levels.rows() / (n + 1); ++r) last_mass.push_back(masses[r][n]);
    ctx.results["mean_mass_n"] = mean_of(last_mass);
    ctx.results["mean_mass_n_se"] = se_of(last_mass);
}

// --- sweep ---

void cmd_sweep(Config& cfg, Context& ctx) {
    const int d = cfg.get_int("d", 1);
    const auto desc = read_descriptor(cfg, "homothetic", d, "0;1;2", 0.1);
    const auto grid = cfg.get_doubles("p_grid", {0.55, 0.63, 0.75});
    const int n = cfg.get_int("n", 9);
    const auto R = static_cast<std::size_t>(cfg.get_int("replicates", 100));
    SweepOptions opt;
    opt.coupled = cfg.get_bool("coupled", false);
    const std::string variant = cfg.get_string("variant", "surviving");
    try {
        opt.variant = parse_variant(variant);
    } catch (const std::invalid_argument&) {
        cfg.require(false, "variant: unknown variant '" + variant + "'");
    }
    opt.detection = read_detection(cfg);
    opt.seed = ctx.seed;
    opt.threads = ctx.options.threads;
    cfg.require(n >= 0 && n <= 20, "n: must be in [0, 20]");
    cfg.require(R >= 1, "replicates: must be positive");
    cfg.require(!grid.empty(), "p_grid: empty");
    try {
        check_sweep_grid(desc, grid, opt);
    } catch (const std::invalid_argument& e) {
        cfg.require(false, std::string("p_grid: ") + e.what());
    }
    cfg.finish();

    const std::string family = to_string(desc.family), params = desc.params();
    CsvWriter freq(ctx.file("frequencies.csv"),
                   {"family", "params", "p", "n", "replicates", "frequency", "ci_lo", "ci_hi"});
    std::vector<std::string> header{"replicate"};
    for (double p : grid) header.push_back("p=" + format_double(p));
    CsvWriter presence_csv(ctx.file("presence.csv"), header);
    std::vector<SweepRow> rows;
    auto emit = [&](const SweepRow& row) {
        freq << family << params << row.p << n << row.replicates << row.frequency << row.ci.lo << row.ci.hi;
        freq.end_row();
        rows.push_back(row);
    };
    bool monotone = true;
    if (opt.coupled) {
        std::vector<std::size_t> present(grid.size(), 0);
        std::size_t done = 0;
        std::vector<std::size_t> order(grid.size());
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return grid[a] < grid[b]; });
        for (std::size_t b = 0; b < R && !ctx.stop(); b += kChunk) {
            const std::size_t e = std::min(R, b + kChunk);
            const auto block = coupled_rows(desc, grid, n, b, e, opt);
            for (std::size_t k = 0; k < block.size(); ++k) {
                presence_csv << b + k;
                for (std::size_t i = 0; i < grid.size(); ++i) {
                    presence_csv << static_cast<int>(block[k][i]);
                    present[i] += block[k][i];
                }
                presence_csv.end_row();
                for (std::size_t i = 1; i < order.size(); ++i)
                    if (block[k][order[i]] < block[k][order[i - 1]]) monotone = false;
            }
            done = e;
        }
        for (std::size_t i = 0; i < grid.size() && done > 0; ++i) emit(sweep_row(grid[i], present[i], done));
    } else {
        std::vector<std::vector<std::uint8_t>> columns;
        for (std::size_t i = 0; i < grid.size() && !ctx.stop(); ++i) {
            std::vector<std::uint8_t> col;
            for (std::size_t b = 0; b < R && !ctx.stop(); b += kChunk) {
                const auto part = sweep_column(desc, grid[i], i, n, b, std::min(R, b + kChunk), opt);
                col.insert(col.end(), part.begin(), part.end());
            }
            if (col.size() != R) break;
            emit(sweep_row(grid[i], std::accumulate(col.begin(), col.end(), std::size_t{0}), R));
            columns.push_back(std::move(col));
        }
        for (std::size_t r = 0; r < R && columns.size() == grid.size(); ++r) {
            presence_csv << r;
            for (const auto& col : columns) presence_csv << static_cast<int>(col[r]);
            presence_csv.end_row();
        }
    }
    PlotSeries s{desc.to_string(), {}, {}};
    json jrows = json::array();
    for (const auto& row : rows) {
        s.x.push_back(row.p);
        s.y.push_back(row.frequency);
        jrows.push_back({{"p", row.p}, {"s", desc.d + std::log2(row.p)}, {"frequency", row.frequency},
                         {"ci", {row.ci.lo, row.ci.hi}}});
    }
    write_svg(ctx.file("sweep.svg"), "presence frequency", "p", "frequency", {s});
    const auto table = threshold_table(desc);
    ctx.results["descriptor"] = desc.to_string();
    ctx.results["rows"] = jrows;
    ctx.results["critical_s"] = table.critical_s;
    ctx.results["critical_p"] = table.critical_p();
    ctx.results["coupled"] = opt.coupled;
    if (opt.coupled) ctx.results["monotone"] = monotone;
}

// --- intersect / holder / second moment ---

struct TargetChoice {
    Target target;
    std::string id;
};

TargetChoice read_target(Config& cfg, const ProductMeasureSpec& spec, int n) {
    const int M = spec.ambient();
    const std::string kind = cfg.get_string("target", "plane");
    KernelSettings ks;
    ks.mc_samples = cfg.get_u64("mc_samples", ks.mc_samples);
    ks.epsilon_factor = cfg.get_double("epsilon_factor", ks.epsilon_factor);
    const int grid_level = cfg.get_int("grid_level", n + 2);
    std::string id = cfg.get_string("param_id", kind);
    if (kind == "plane") {
        return {Target::plane(read_plane(cfg, "plane", default_line(M), M), ks), id};
    }
    if (kind == "polynomial") {
        const std::string path = cfg.get_string("polynomial", "");
        std::ifstream in(path);
        if (!in) {
            cfg.require(false, "polynomial: cannot read '" + path + "'");
        } else {
            try {
                return {Target::variety(read_polynomial(in, M), grid_level), id};
            } catch (const std::exception& e) {
                cfg.require(false, std::string("polynomial: ") + e.what());
            }
        }
    } else if (kind == "family") {
        const auto desc = read_descriptor(cfg, "distance", spec.law.d, "0;1", 0.25);
        if (desc.m != spec.m || desc.d != spec.law.d) {
            cfg.require(false, "family: descriptor arity/dimension must match m and d");
        } else if (desc.is_plane_family()) {
            return {Target::plane(configuration_plane(desc), ks), id};
        } else {
            return {Target::variety(configuration_polynomial(desc), grid_level), id};
        }
    } else {
        cfg.require(false, "target: expected plane, polynomial or family");
    }
    return {Target::plane(AffinePlane(Eigen::MatrixXd::Identity(1, M), Eigen::VectorXd::Zero(M))), id};
}

void cmd_intersect(Config& cfg, Context& ctx) {
    auto spec = read_product(cfg, 1, 2, 0.8, "extinction");
    const int n = cfg.get_int("n", 6);
    const auto R = static_cast<std::size_t>(cfg.get_int("replicates", 8));
    cfg.require(n >= 0 && n <= 20, "n: must be in [0, 20]");
    cfg.require(R >= 1, "replicates: must be positive");
    auto choice = read_target(cfg, spec, n);
    cfg.finish();

    CsvWriter masses(ctx.file("masses.csv"), {"seed", "param_id", "n", "Y", "kernel", "se"});
    std::vector<MassSeries> series(R);
    std::vector<double> final_y;
    chunked(
        ctx, R,
        [&](std::size_t r) {
            ProductMeasureSpec s = spec;
            s.seed = replicate_key(ctx.seed, r);
            series[r] = intersection_mass(s, choice.target, n);
            series[r].seed = s.seed;
        },
        [&](std::size_t b, std::size_t e) {
            for (std::size_t r = b; r < e; ++r) {
                for (int j = 0; j <= n; ++j) {
                    masses << series[r].seed << choice.id << j << series[r].Y[j] << series[r].kernel << series[r].se[j];
                    masses.end_row();
                }
                final_y.push_back(series[r].Y[n]);
            }
        });
    std::size_t positive = 0;
    for (double y : final_y) positive += y > 0.0;
    ctx.results["mean_Y_n"] = mean_of(final_y);
    ctx.results["mean_Y_n_se"] = se_of(final_y);
    ctx.results["fraction_positive"] = final_y.empty() ? 0.0 : static_cast<double>(positive) / final_y.size();
    ctx.results["replicates"] = final_y.size();
}

void cmd_holder(Config& cfg, Context& ctx) {
    auto spec = read_product(cfg, 1, 2, 0.8, "extinction");
    const int n = cfg.get_int("n", 6);
    const auto gammas = cfg.get_doubles("gammas", {0.25, 0.5, 0.75});
    const int M = spec.ambient();
    const AffinePlane base = read_plane(cfg, "plane", default_line(M), M);
    std::vector<double> shift_default(M, 0.0);
    if (M > 1) shift_default[1] = 1.0;
    const auto shift = read_vector(cfg, "shift", shift_default, M);
    const auto offsets = cfg.get_doubles("offsets", {0.0, 0.1, 0.2, 0.3, 0.4});
    cfg.require(n >= 0 && n <= 16, "n: must be in [0, 16]");
    cfg.require(offsets.size() >= 2, "offsets: need at least two grid targets");
    cfg.finish();

    std::vector<Target> grid;
    std::vector<AffinePlane> planes;
    const Eigen::VectorXd dir = Eigen::Map<const Eigen::VectorXd>(shift.data(), M);
    for (double t : offsets) {
        planes.emplace_back(base.basis(), base.offset() + t * dir);
        grid.push_back(Target::plane(planes.back()));
    }
    std::vector<std::vector<double>> dist(grid.size(), std::vector<double>(grid.size(), 0.0));
    for (std::size_t i = 0; i < grid.size(); ++i)
        for (std::size_t k = 0; k < grid.size(); ++k) dist[i][k] = plane_distance(planes[i], planes[k]);
    spec.seed = ctx.seed;
    const ProductMeasure mu = ProductMeasure::sample(spec, n);
    const HolderTable table = holder_modulus(mu, grid, dist, n, gammas, ctx.options.threads);

    CsvWriter masses(ctx.file("masses.csv"), {"seed", "param_id", "n", "Y", "kernel", "se"});
    for (std::size_t i = 0; i < table.series.size(); ++i)
        for (int j = 0; j <= n; ++j) {
            masses << ctx.seed << "offset=" + format_double(offsets[i]) << j << table.series[i].Y[j]
                   << table.series[i].kernel << table.series[i].se[j];
            masses.end_row();
        }
    CsvWriter growth(ctx.file("holder.csv"), {"gamma", "level", "growth"});
    std::vector<PlotSeries> plot;
    json sup = json::array();
    for (std::size_t g = 0; g < gammas.size(); ++g) {
        PlotSeries s{"gamma=" + format_double(gammas[g]), {}, {}};
        for (int j = 0; j <= n; ++j) {
            growth << gammas[g] << j << table.growth[g][j];
            growth.end_row();
            s.x.push_back(j);
            s.y.push_back(table.growth[g][j]);
        }
        plot.push_back(std::move(s));
        sup.push_back({{"gamma", gammas[g]}, {"sup_ratio", table.sup_ratio[g]}});
    }
    write_svg(ctx.file("holder.svg"), "sup_t 2^(-gamma j) Y_j(t)", "level j", "growth", plot);
    ctx.results["sup_ratio"] = sup;
}

void cmd_second_moment(Config& cfg, Context& ctx) {
    auto spec = read_product(cfg, 1, 2, 0.9, "extinction");
    const int n_min = cfg.get_int("n_min", 1);
    const int n_max = cfg.get_int("n_max", 8);
    const auto R = static_cast<std::size_t>(cfg.get_int("replicates", 1000));
    const bool independent = cfg.get_bool("independent_levels", true);
    cfg.require(n_min >= 0 && n_max >= n_min && n_max <= 20, "n_min, n_max: need 0 <= n_min <= n_max <= 20");
    cfg.require(R >= 1000, "replicates: the second-moment estimate needs at least 1000");
    auto choice = read_target(cfg, spec, n_max);
    cfg.finish();

    spec.seed = ctx.seed;
    CsvWriter out(ctx.file("second_moment.csv"),
                  {"n", "mean", "second", "ratio", "paley_zygmund", "survival", "mean_se", "replicates"});
    std::vector<double> xs, ratios;
    for (int n = n_min; n <= n_max && !ctx.stop(); ++n) {
        const auto sm = second_moment_estimate(spec, choice.target, n, R, ctx.options.threads,
                                               independent ? static_cast<std::uint64_t>(n) : 0);
        out << n << sm.mean << sm.second << sm.ratio << sm.paley_zygmund << sm.survival << sm.mean_se << sm.replicates;
        out.end_row();
        xs.push_back(n);
        ratios.push_back(sm.ratio);
    }
    write_svg(ctx.file("second_moment.svg"), "E[Y^2] / E[Y]^2", "level n", "ratio", {{"ratio", xs, ratios}});
    if (xs.size() >= 2) {
        const auto sp = stats::spearman(xs, ratios);
        ctx.results["spearman_rho"] = sp.rho;
        ctx.results["p_increasing"] = sp.p_increasing;
        ctx.results["significant_growth"] = sp.p_increasing < 0.01;
    }
    ctx.results["max_ratio"] = ratios.empty() ? NAN : *std::max_element(ratios.begin(), ratios.end());
    ctx.results["s"] = spec.law.s;
}

// --- dimensions ---

void cmd_dimension(Config& cfg, Context& ctx) {
    Variant variant;
    const auto law = read_law(cfg, 2, 0.6, variant, "surviving");
    const int n = cfg.get_int("n", 10);
    const int j_lo = cfg.get_int("j_lo", 3);
    const int j_hi = cfg.get_int("j_hi", n);
    const auto R = static_cast<std::size_t>(cfg.get_int("replicates", 200));
    cfg.require(n >= 0 && n <= 24, "n: must be in [0, 24]");
    cfg.require(j_lo >= 0 && j_hi <= n && j_hi - j_lo >= 2, "j_lo, j_hi: need at least three levels within [0, n]");
    cfg.require(R >= 1, "replicates: must be positive");
    cfg.finish();

    CsvWriter out(ctx.file("dimension.csv"), {"replicate", "seed", "slope"});
    std::vector<double> slope(R, NAN);
    std::vector<std::vector<double>> logs(R);
    std::vector<double> good;
    chunked(
        ctx, R,
        [&](std::size_t r) {
            const PercolationTree t = sample_tree(law, variant, replicate_key(ctx.seed, r), n);
            for (int j = j_lo; j <= j_hi; ++j)
                logs[r].push_back(t.survivor_count(j) ? std::log2(static_cast<double>(t.survivor_count(j))) : NAN);
            if (t.survivor_count(j_hi) > 0) slope[r] = box_dimension_estimate(t, j_lo, j_hi).slope;
        },
        [&](std::size_t b, std::size_t e) {
            for (std::size_t r = b; r < e; ++r) {
                out << r << replicate_key(ctx.seed, r) << slope[r];
                out.end_row();
                if (std::isfinite(slope[r])) good.push_back(slope[r]);
            }
        });
    std::vector<double> xs, ys;
    for (int j = j_lo; j <= j_hi; ++j) {
        double s = 0;
        std::size_t c = 0;
        for (std::size_t r = 0; r < out.rows(); ++r)
            if (std::isfinite(logs[r][j - j_lo])) s += logs[r][j - j_lo], ++c;
        xs.push_back(j);
        ys.push_back(c ? s / c : NAN);
    }
    write_svg(ctx.file("dimension.svg"), "box counts", "level j", "mean log2 N_j", {{"log2 N_j", xs, ys}});
    ctx.results["mean_slope"] = mean_of(good);
    ctx.results["slope_se"] = se_of(good);
    ctx.results["predicted_s"] = law.s;
    ctx.results["replicates_used"] = good.size();
    ctx.results["replicates_extinct"] = out.rows() - good.size();
}

void cmd_pattern_dim(Config& cfg, Context& ctx) {
    Variant variant;
    const auto law = read_law(cfg, 1, 0.9, variant, "surviving");
    const std::string points = cfg.get_string("points", "0;1");
    const int n = cfg.get_int("n", 11);
    const int j_lo = cfg.get_int("j_lo", 4);
    const int j_hi = cfg.get_int("j_hi", 9);
    const auto R = static_cast<std::size_t>(cfg.get_int("replicates", 100));
    const auto det = read_detection(cfg);
    ConfigDescriptor desc;
    try {
        desc = ConfigDescriptor::parse("family=homothetic d=" + std::to_string(law.d) + " points=" + points);
    } catch (const std::invalid_argument& e) {
        cfg.require(false, std::string("points: ") + e.what());
    }
    cfg.require(n >= 0 && n <= 20, "n: must be in [0, 20]");
    cfg.require(j_lo >= 0 && j_hi >= j_lo + 1 && j_hi <= 20, "j_lo, j_hi: need 0 <= j_lo < j_hi <= 20");
    cfg.require(R >= 1, "replicates: must be positive");
    cfg.finish();

    CsvWriter counts(ctx.file("pattern_counts.csv"), {"replicate", "level", "count"});
    CsvWriter slopes_csv(ctx.file("pattern_slopes.csv"), {"replicate", "seed", "slope", "witnesses"});
    std::vector<ParameterDimension> res(R);
    std::vector<double> slopes;
    chunked(
        ctx, R,
        [&](std::size_t r) {
            const PercolationTree t = sample_tree(law, variant, replicate_key(ctx.seed, r), n);
            res[r] = pattern_parameter_dimension(t, desc, n, j_lo, j_hi, det);
        },
        [&](std::size_t b, std::size_t e) {
            for (std::size_t r = b; r < e; ++r) {
                for (std::size_t k = 0; k < res[r].levels.size(); ++k) {
                    counts << r << res[r].levels[k] << res[r].counts[k];
                    counts.end_row();
                }
                slopes_csv << r << replicate_key(ctx.seed, r) << res[r].slope << res[r].witnesses;
                slopes_csv.end_row();
                slopes.push_back(res[r].slope);
            }
        });
    ctx.results["mean_slope"] = mean_of(slopes);
    ctx.results["slope_se"] = se_of(slopes);
    ctx.results["predicted"] = desc.m * (law.s - law.d) + law.d + 1;
    ctx.results["replicates"] = slopes.size();
}

void cmd_perc_dim_test(Config& cfg, Context& ctx) {
    const int d = cfg.get_int("d", 2);
    const int n = cfg.get_int("n", 12);
    const std::string set = cfg.get_string("set", "segment");
    const auto grid = cfg.get_doubles("p_grid", {0.3, 0.35, 0.4, 0.45, 0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8});
    const auto R = static_cast<std::size_t>(cfg.get_int("replicates", 1000));
    cfg.require(d >= 1 && d <= 8 && n >= 0 && d * n <= 40, "d, n: need 1 <= d <= 8 and d * n <= 40");
    cfg.require(R >= 1, "replicates: must be positive");
    cfg.require(grid.size() >= 2 && std::is_sorted(grid.begin(), grid.end()), "p_grid: need an increasing grid");
    std::vector<CubeCode> B;
    double known_dim = NAN;
    if (set == "segment") {
        std::vector<double> da(d, 0.05), db(d, 0.95);
        if (d >= 2) da[1] = 0.3, db[1] = 0.7;
        const auto a = read_vector(cfg, "a", da, d), b = read_vector(cfg, "b", db, d);
        if (d >= 1 && d <= 8 && d * n <= 40) B = segment_cubes(a, b, n);
        known_dim = 1.0;
    } else if (set == "full") {
        if (d * n <= 24)
            for (CubeCode c = 0; c < (CubeCode{1} << (d * n)); ++c) B.push_back(c);
        cfg.require(d * n <= 24, "set=full: needs d * n <= 24");
        known_dim = d;
    } else if (set == "single") {
        const auto idx = read_vector(cfg, "cube", std::vector<double>(d, 0.0), d);
        std::vector<std::uint32_t> u;
        for (double v : idx) u.push_back(static_cast<std::uint32_t>(std::max(0.0, v)));
        if (static_cast<int>(u.size()) == d) B.push_back(encode(u, n));
        known_dim = 0.0;
    } else if (set == "file") {
        const std::string path = cfg.get_string("cubes", "");
        std::ifstream in(path);
        if (!in) {
            cfg.require(false, "cubes: cannot read '" + path + "'");
        } else {
            try {
                auto rec = read_level(in);
                cfg.require(rec.dim == d && rec.level == n, "cubes: file level/dimension differ from d, n");
                B = rec.codes;
            } catch (const std::exception& e) {
                cfg.require(false, std::string("cubes: ") + e.what());
            }
        }
    } else {
        cfg.require(false, "set: expected segment, full, single or file");
    }
    cfg.finish();
    if (B.empty()) throw ConfigError({"set: the test set is empty"});

    const auto res = percolation_dimension_test(B, d, n, grid, R, ctx.seed, ctx.options.threads);
    CsvWriter out(ctx.file("perc_dim.csv"), {"p", "n", "replicates", "frequency", "ci_lo", "ci_hi"});
    for (std::size_t i = 0; i < grid.size(); ++i) {
        out << grid[i] << n << R << res.frequency[i] << res.ci[i].lo << res.ci[i].hi;
        out.end_row();
    }
    write_svg(ctx.file("perc_dim.svg"), "retention of the test set", "p'", "frequency",
              {{"P(B meets A'_n)", grid, res.frequency}});
    ctx.results["set_size"] = B.size();
    ctx.results["p_star"] = res.p_star;
    ctx.results["dimension"] = res.dimension;
    if (std::isfinite(known_dim)) ctx.results["set_dimension"] = known_dim;
}

// --- harris / stress ---

void cmd_harris(Config& cfg, Context& ctx) {
    Variant variant;
    const auto law = read_law(cfg, 2, 0.6, variant, "surviving");
    const int n = cfg.get_int("n", 6);
    const auto R = static_cast<std::size_t>(cfg.get_int("replicates", 10000));
    const std::string pairs_text =
        cfg.get_string("pairs", "always&right;left&right;cube:1:0,0&cube:1:0,0;count:8&left;count:4&cube:1:1,1");
    cfg.require(n >= 1 && n <= 16, "n: must be in [1, 16]");
    cfg.require(R >= 2, "replicates: need at least two");
    std::vector<std::pair<std::string, std::string>> pairs;
    std::stringstream ss(pairs_text);
    for (std::string item; std::getline(ss, item, ';');) {
        const auto amp = item.find('&');
        if (amp == std::string::npos) {
            cfg.require(false, "pairs: '" + item + "' is not of the form event&event");
            continue;
        }
        pairs.emplace_back(trim(item.substr(0, amp)), trim(item.substr(amp + 1)));
        for (const auto& ev : {pairs.back().first, pairs.back().second}) {
            try {
                parse_event(ev, law.d);
            } catch (const std::invalid_argument& e) {
                cfg.require(false, "pairs: " + std::string(e.what()));
            }
        }
    }
    cfg.finish();

    CsvWriter out(ctx.file("harris.csv"), {"event1", "event2", "p1", "p2", "p12", "bound", "margin", "sigma",
                                           "violation", "replicates"});
    std::size_t violations = 0;
    for (std::size_t i = 0; i < pairs.size() && !ctx.stop(); ++i) {
        const auto e1 = parse_event(pairs[i].first, law.d), e2 = parse_event(pairs[i].second, law.d);
        const auto res = harris_check(e1, e2, law, variant, n, R, make_key(ctx.seed, {i}), ctx.options.threads);
        out << pairs[i].first << pairs[i].second << res.p1 << res.p2 << res.p12 << (1.0 - law.q) * res.p1 * res.p2
            << res.margin << res.sigma << res.violation << res.replicates;
        out.end_row();
        violations += res.violation;
    }
    ctx.results["pairs"] = out.rows();
    ctx.results["violations"] = violations;
    ctx.results["q"] = law.q;
}

void cmd_stress(Config& cfg, Context& ctx) {
    Variant variant;
    const auto law = read_law(cfg, 1, 0.9, variant, "surviving");
    const auto desc = read_descriptor(cfg, "homothetic", law.d, "0;1;2", 0.1);
    const auto fs_ = cfg.get_doubles("f", {0.0, 0.3});
    const std::string strategy = cfg.get_string("strategy", "random");
    const int n = cfg.get_int("n", 8);
    const auto R = static_cast<std::size_t>(cfg.get_int("replicates", 100));
    const auto det = read_detection(cfg);
    Removal removal = Removal::random;
    try {
        removal = parse_removal(strategy);
    } catch (const std::invalid_argument& e) {
        cfg.require(false, std::string("strategy: ") + e.what());
    }
    for (double f : fs_) cfg.require(f >= 0.0 && f < 1.0, "f: each fraction must lie in [0, 1)");
    cfg.require(n >= 0 && n <= 16, "n: must be in [0, 16]");
    cfg.require(R >= 1, "replicates: must be positive");
    cfg.require(desc.d == law.d, "d: descriptor and law dimensions differ");
    cfg.finish();

    CsvWriter out(ctx.file("stress.csv"), {"family", "params", "p", "n", "f", "strategy", "replicates", "present",
                                           "before", "frequency", "ci_lo", "ci_hi"});
    json rows = json::array();
    for (std::size_t i = 0; i < fs_.size() && !ctx.stop(); ++i) {
        const auto res = subset_stress_test(law, variant, desc, fs_[i], removal, n, R, ctx.seed,
                                            ctx.options.threads, det);
        out << to_string(desc.family) << desc.params() << law.p << n << fs_[i] << to_string(removal) << res.replicates
            << res.present << res.before << res.frequency << res.ci.lo << res.ci.hi;
        out.end_row();
        rows.push_back({{"f", fs_[i]}, {"frequency", res.frequency}, {"before", res.before}});
    }
    ctx.results["descriptor"] = desc.to_string();
    ctx.results["rows"] = rows;
    ctx.results["relative_s"] = threshold_table(desc).relative_s;
    ctx.results["s"] = law.s;
}

using Command = void (*)(Config&, Context&);

const std::map<std::string, Command>& command_table() {
    static const std::map<std::string, Command> table{
        {"sample", cmd_sample},
        {"sweep", cmd_sweep},
        {"intersect", cmd_intersect},
        {"holder", cmd_holder},
        {"second-moment", cmd_second_moment},
        {"dimension", cmd_dimension},
        {"pattern-dim", cmd_pattern_dim},
        {"perc-dim-test", cmd_perc_dim_test},
        {"harris", cmd_harris},
        {"stress", cmd_stress},
    };
    return table;
}

void write_summary(const fs::path& path, const json& summary) {
    std::ofstream out(path);
    out << summary.dump(2) << '\n';
}

}  // namespace

const std::vector<std::string>& commands() {
    static const std::vector<std::string> names{"sample",    "sweep",       "intersect",     "holder", "second-moment",
                                                "dimension", "pattern-dim", "perc-dim-test", "harris", "stress"};
    return names;
}

Config preset(const std::string& command, const std::string& name) {
    using Entries = std::vector<std::pair<std::string, std::string>>;
    static const std::map<std::string, std::pair<Entries, Entries>> table{
        {"sample", {{{"d", "2"}, {"p", "0.6"}, {"n", "8"}, {"replicates", "20"}},
                    {{"d", "2"}, {"p", "0.5"}, {"n", "6"}, {"replicates", "10000"}, {"cubes", "false"}}}},
        {"sweep",
         {{{"family", "homothetic"}, {"d", "1"}, {"points", "0;1;2"}, {"p_grid", "0.55,0.63,0.75"}, {"n", "8"},
           {"replicates", "60"}, {"coupled", "true"}},
          {{"family", "homothetic"}, {"d", "1"}, {"points", "0;1;2"}, {"p_grid", "0.55,0.6,0.63,0.7,0.75,0.8"},
           {"n", "9"}, {"replicates", "500"}}}},
        {"intersect", {{{"d", "1"}, {"m", "2"}, {"p", "0.8"}, {"n", "5"}, {"replicates", "16"}},
                       {{"d", "1"}, {"m", "2"}, {"p", "0.8"}, {"n", "8"}, {"replicates", "1000"}}}},
        {"holder", {{{"d", "1"}, {"m", "2"}, {"p", "0.9"}, {"n", "5"}},
                    {{"d", "1"}, {"m", "2"}, {"p", "0.9"}, {"n", "9"}, {"offsets", "0:0.4:0.05"}}}},
        {"second-moment", {{{"p", "0.6"}, {"n_min", "1"}, {"n_max", "5"}, {"replicates", "1000"}},
                           {{"p", "0.9"}, {"n_min", "6"}, {"n_max", "11"}, {"replicates", "3000"}}}},
        {"dimension", {{{"d", "2"}, {"p", "0.6"}, {"n", "8"}, {"j_lo", "3"}, {"replicates", "40"}},
                       {{"d", "2"}, {"p", "0.6"}, {"n", "10"}, {"j_lo", "3"}, {"replicates", "200"}}}},
        {"pattern-dim", {{{"p", "0.9"}, {"n", "8"}, {"j_lo", "3"}, {"j_hi", "7"}, {"replicates", "10"}},
                         {{"p", "0.9"}, {"n", "11"}, {"j_lo", "4"}, {"j_hi", "9"}, {"replicates", "100"}}}},
        {"perc-dim-test", {{{"d", "2"}, {"n", "8"}, {"replicates", "200"}},
                           {{"d", "2"}, {"n", "12"}, {"replicates", "1000"}, {"p_grid", "0.3:0.8:0.025"}}}},
        {"harris", {{{"d", "2"}, {"p", "0.6"}, {"n", "5"}, {"replicates", "1000"}},
                    {{"d", "2"}, {"p", "0.6"}, {"n", "6"}, {"replicates", "10000"}}}},
        {"stress", {{{"p", "0.9"}, {"n", "7"}, {"replicates", "20"}, {"f", "0,0.3"}},
                    {{"p", "0.68"}, {"n", "9"}, {"replicates", "200"}, {"f", "0,0.1,0.3,0.5"}, {"strategy", "greedy"}}}},
    };
    auto it = table.find(command);
    if (it == table.end()) throw ConfigError({"unknown command '" + command + "'"});
    if (name != "smoke" && name != "paper") throw ConfigError({"preset: expected smoke or paper, got '" + name + "'"});
    Config c;
    for (const auto& [k, v] : name == "smoke" ? it->second.first : it->second.second) c.set(k, v);
    return c;
}

json run(const std::string& command, Config config, const RunOptions& options) {
    const auto& table = command_table();
    auto it = table.find(command);
    if (it == table.end()) throw ConfigError({"unknown command '" + command + "'"});
    if (options.threads < 1) throw ConfigError({"threads: must be positive"});
    Context ctx;
    ctx.options = options;
    ctx.seed = config.get_u64("seed", options.seed);
    fs::create_directories(options.out);
    const auto start = std::chrono::steady_clock::now();
    json summary;
    summary["command"] = command;
    summary["complete"] = false;
    summary["seed"] = ctx.seed;
    summary["threads"] = options.threads;
    auto finish_summary = [&](const std::string& error) {
        summary["complete"] = ctx.complete && error.empty();
        summary["config"] = config.resolved();
        summary["results"] = ctx.results;
        summary["files"] = ctx.files;
        if (!error.empty()) summary["error"] = error;
        summary["wall_time_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        write_summary(options.out / "summary.json", summary);
    };
    try {
        it->second(config, ctx);
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        finish_summary(e.what());
        throw;
    }
    finish_summary("");
    return summary;
}

json aggregate(const std::vector<fs::path>& inputs, const fs::path& out) {
    if (inputs.empty()) throw ConfigError({"aggregate: no input files"});
    const std::vector<std::string> schema{"family", "params", "p", "n", "replicates", "frequency", "ci_lo", "ci_hi"};
    struct Pool {
        std::size_t present = 0, replicates = 0;
    };
    std::vector<std::tuple<std::string, std::string, std::string, std::string>> order;
    std::map<std::tuple<std::string, std::string, std::string, std::string>, Pool> pools;
    for (const auto& path : inputs) {
        const CsvTable t = read_csv(path);
        if (t.header != schema)
            throw ConfigError({path.string() + ": schema mismatch, expected " + join(schema, ",")});
        for (const auto& row : t.rows) {
            std::size_t reps = 0;
            double freq = 0;
            if (!parse_value(row[4], reps) || !parse_value(row[5], freq))
                throw ConfigError({path.string() + ": malformed replicates/frequency field"});
            const auto key = std::make_tuple(row[0], row[1], row[2], row[3]);
            if (!pools.count(key)) order.push_back(key);
            auto& pool = pools[key];
            pool.present += static_cast<std::size_t>(std::llround(freq * static_cast<double>(reps)));
            pool.replicates += reps;
        }
    }
    fs::create_directories(out);
    CsvWriter w(out / "aggregate.csv", schema);
    json rows = json::array();
    for (const auto& key : order) {
        const auto& pool = pools[key];
        const auto ci = stats::wilson(pool.present, pool.replicates);
        const double f = static_cast<double>(pool.present) / static_cast<double>(pool.replicates);
        w << std::get<0>(key) << std::get<1>(key) << std::get<2>(key) << std::get<3>(key) << pool.replicates << f
          << ci.lo << ci.hi;
        w.end_row();
        rows.push_back({{"family", std::get<0>(key)}, {"params", std::get<1>(key)}, {"p", std::get<2>(key)},
                        {"n", std::get<3>(key)}, {"replicates", pool.replicates}, {"frequency", f},
                        {"ci", {ci.lo, ci.hi}}});
    }
    json summary;
    summary["command"] = "aggregate";
    summary["complete"] = true;
    std::vector<std::string> names;
    for (const auto& p : inputs) names.push_back(p.string());
    summary["inputs"] = names;
    summary["results"] = {{"rows", rows}};
    summary["files"] = {"aggregate.csv"};
    write_summary(out / "summary.json", summary);
    return summary;
}

}  // namespace fracperc::harness
