#include <iostream>

#include <CLI11.hpp>

#include "fracperc/errors.hpp"
#include "fracperc/harness.hpp"

namespace h = fracperc::harness;

namespace {

struct RunArgs {
    std::string config;
    std::string preset;
    std::vector<std::string> sets;
    std::uint64_t seed = 1;
    std::string out = "out";
    int threads = 1;
};

h::Config build_config(const std::string& command, const RunArgs& args, bool seed_given) {
    h::Config cfg;
    if (!args.preset.empty()) cfg = h::preset(command, args.preset);
    if (!args.config.empty()) cfg.merge(h::Config::from_file(args.config));
    std::vector<std::string> bad;
    for (const auto& kv : args.sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos || eq == 0) {
            bad.push_back("--set " + kv + ": expected key=value");
            continue;
        }
        cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (!bad.empty()) throw h::ConfigError(bad);
    if (seed_given || !cfg.has("seed")) cfg.set("seed", std::to_string(args.seed));
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"fractal percolation experiments"};
    app.require_subcommand(1);

    std::map<std::string, RunArgs> args;
    std::map<std::string, CLI::Option*> seed_opts;
    for (const auto& name : h::commands()) {
        auto* sub = app.add_subcommand(name, "run the " + name + " experiment");
        auto& a = args[name];
        sub->add_option("--config", a.config, "key = value config file")->check(CLI::ExistingFile);
        sub->add_option("--preset", a.preset, "built-in parameters")->check(CLI::IsMember({"smoke", "paper"}));
        sub->add_option("--set", a.sets, "override one key (key=value), repeatable");
        seed_opts[name] = sub->add_option("--seed", a.seed, "master seed");
        sub->add_option("--out", a.out, "output directory");
        sub->add_option("--threads", a.threads, "worker threads")->check(CLI::PositiveNumber);
    }
    std::vector<std::string> inputs;
    std::string agg_out = "out";
    auto* agg = app.add_subcommand("aggregate", "pool frequency tables and recompute intervals");
    agg->add_option("inputs", inputs, "frequency CSV files")->required()->check(CLI::ExistingFile);
    agg->add_option("--out", agg_out, "output directory");

    CLI11_PARSE(app, argc, argv);
    h::install_interrupt_handler();

    try {
        if (agg->parsed()) {
            std::vector<std::filesystem::path> paths(inputs.begin(), inputs.end());
            h::aggregate(paths, agg_out);
            std::cout << "wrote " << (std::filesystem::path(agg_out) / "aggregate.csv").string() << '\n';
            return 0;
        }
        for (const auto& name : h::commands()) {
            auto* sub = app.get_subcommand(name);
            if (!sub->parsed()) continue;
            const auto& a = args[name];
            h::RunOptions opt;
            opt.out = a.out;
            opt.seed = a.seed;
            opt.threads = a.threads;
            const auto summary = h::run(name, build_config(name, a, seed_opts[name]->count() > 0), opt);
            std::cout << summary["results"].dump(2) << '\n';
            if (!summary["complete"].get<bool>()) {
                std::cerr << "interrupted; partial results in " << a.out << '\n';
                return 130;
            }
            return 0;
        }
    } catch (const h::ConfigError& e) {
        std::cerr << "configuration rejected:\n";
        for (const auto& issue : e.issues()) std::cerr << "  " << issue << '\n';
        return 2;
    } catch (const fracperc::BudgetError& e) {
        std::cerr << "budget exceeded: " << e.what() << '\n';
        return 3;
    } catch (const std::invalid_argument& e) {
        std::cerr << "invalid argument: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
