#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include <json.hpp>

namespace fracperc::harness {

using json = nlohmann::ordered_json;

// Invalid configuration; `issues` lists every rejected field.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(std::vector<std::string> issues);
    const std::vector<std::string>& issues() const { return issues_; }

private:
    std::vector<std::string> issues_;
};

// Flat key=value configuration. Typed getters record the resolved value
// (including defaults) for the JSON echo, and collect parse problems instead
// of throwing so that finish() can reject them together.
class Config {
public:
    static Config parse(std::istream& in, const std::string& origin = "config");
    static Config from_file(const std::filesystem::path& path);

    void set(const std::string& key, const std::string& value);
    void merge(const Config& other);  // other's keys win
    bool has(const std::string& key) const { return values_.count(key) > 0; }
    const std::map<std::string, std::string>& values() const { return values_; }

    std::string get_string(const std::string& key, const std::string& fallback);
    int get_int(const std::string& key, int fallback);
    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback);
    double get_double(const std::string& key, double fallback);
    bool get_bool(const std::string& key, bool fallback);
    // "0.5,0.6,0.7" or "lo:hi:step" (inclusive).
    std::vector<double> get_doubles(const std::string& key, const std::vector<double>& fallback);

    void require(bool condition, const std::string& issue);
    // Throws ConfigError on unknown keys or any recorded issue.
    void finish();
    const json& resolved() const { return resolved_; }

private:
    std::string lookup(const std::string& key, const std::string& fallback);

    std::map<std::string, std::string> values_;
    std::map<std::string, bool> used_;
    json resolved_ = json::object();
    std::vector<std::string> issues_;
};

// Built-in presets per command: "smoke" (well under a minute) and "paper".
Config preset(const std::string& command, const std::string& name);
const std::vector<std::string>& commands();

struct RunOptions {
    std::filesystem::path out = "out";
    std::uint64_t seed = 1;
    int threads = 1;
};

// Runs one experiment, writing CSV/SVG files and summary.json into
// options.out. Returns the summary. Throws ConfigError, BudgetError.
json run(const std::string& command, Config config, const RunOptions& options);

// Pools frequency tables (family,params,p,n,replicates,frequency,ci_lo,ci_hi)
// by (family, params, p, n) and recomputes the Wilson intervals.
json aggregate(const std::vector<std::filesystem::path>& inputs, const std::filesystem::path& out);

// Set by the SIGINT handler; experiments stop between chunks of replicates.
std::atomic<bool>& interrupted();
void install_interrupt_handler();

// --- output helpers ---------------------------------------------------------

std::string format_double(double v);

class CsvWriter {
public:
    CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header);
    CsvWriter& operator<<(const std::string& field);
    CsvWriter& operator<<(const char* field) { return *this << std::string(field); }
    CsvWriter& operator<<(double v) { return *this << format_double(v); }
    CsvWriter& operator<<(bool v) { return *this << std::string(v ? "1" : "0"); }
    template <class T>
        requires std::is_integral_v<T>
    CsvWriter& operator<<(T v) { return *this << std::to_string(v); }
    // Ends the row and flushes.
    void end_row();
    std::size_t rows() const { return rows_; }

private:
    std::ofstream out_;
    std::size_t columns_;
    std::size_t pending_ = 0;
    std::size_t rows_ = 0;
};

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    std::size_t column(const std::string& name) const;
};
CsvTable read_csv(const std::filesystem::path& path);

struct PlotSeries {
    std::string name;
    std::vector<double> x;
    std::vector<double> y;
};
// Minimal line (or scatter) plot.
void write_svg(const std::filesystem::path& path, const std::string& title, const std::string& x_label,
               const std::string& y_label, const std::vector<PlotSeries>& series, bool scatter = false);

}  // namespace fracperc::harness
