// Command-line driver: run experiments, validate configs, re-summarize traces.
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "scmal/harness.hpp"

namespace {

namespace fs = std::filesystem;

constexpr int exit_config = 1;
constexpr int exit_runtime = 2;

void write_file(const fs::path& path, auto&& writer)
{
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    writer(out);
    if (!out) throw std::runtime_error("error writing " + path.string());
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Active learning of structural causal models with GP beliefs"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir;
    std::optional<std::uint64_t> seed;
    std::optional<int> trials;
    std::vector<std::string> policies;
    bool verbose = false;

    auto* run = app.add_subcommand("run", "Run every configured policy and write trace.csv and summary.csv");
    run->add_option("-c,--config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
    run->add_option("-o,--out", out_dir, "Output directory (overrides run.output and SCMAL_OUTPUT_DIR)");
    run->add_option("--seed", seed, "Override run.seed");
    run->add_option("--trials", trials, "Override run.trials")->check(CLI::PositiveNumber);
    run->add_option("--policy", policies, "Restrict to these policies");
    run->add_flag("-v,--verbose", verbose, "Report progress on stderr");

    auto* validate = app.add_subcommand("validate", "Check a config and print the candidate count");
    validate->add_option("-c,--config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);

    std::string trace_path;
    auto* summarize = app.add_subcommand("summarize", "Recompute summary.csv from a trace");
    summarize->add_option("-t,--trace", trace_path, "Trace CSV")->required()->check(CLI::ExistingFile);
    summarize->add_option("-o,--out", out_dir, "Summary output path (default: stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : exit_config;
    }

    scmal::ExperimentConfig cfg;
    if (*run || *validate) {
        try {
            cfg = scmal::load_config(config_path);
            if (seed) cfg.run.seed = *seed;
            if (trials) cfg.run.trials = *trials;
            if (!policies.empty()) {
                std::vector<scmal::PolicyConfig> kept;
                for (const auto& name : policies) {
                    const auto kind = scmal::parse_policy(name);
                    bool found = false;
                    for (const auto& p : cfg.policies)
                        if (p.kind == kind) {
                            kept.push_back(p);
                            found = true;
                        }
                    if (!found) throw scmal::ConfigError("policy '" + name + "' is not in the config");
                }
                cfg.policies = kept;
            }
            const std::size_t count = scmal::validate_config(cfg);
            if (*validate) {
                std::cout << "ok: " << cfg.scm.nodes << " nodes, " << count << " candidates, " << cfg.policies.size()
                          << " policies\n";
                return 0;
            }
        } catch (const std::exception& e) {
            std::cerr << "config error: " << e.what() << '\n';
            return exit_config;
        }
    }

    try {
        if (*run) {
            fs::path dir = cfg.run.output;
            if (const char* env = std::getenv("SCMAL_OUTPUT_DIR"); env && *env) dir = env;
            if (!out_dir.empty()) dir = out_dir;
            fs::create_directories(dir);
            const auto rows = scmal::run_experiment(cfg, verbose ? &std::cerr : nullptr);
            write_file(dir / "trace.csv", [&](std::ostream& os) { scmal::write_trace_csv(os, rows); });
            write_file(dir / "summary.csv",
                       [&](std::ostream& os) { scmal::write_summary_csv(os, scmal::summarize(rows)); });
            std::size_t failed = 0;
            for (const auto& r : rows) failed += r.status != "ok";
            std::cout << "wrote " << rows.size() << " rows to " << (dir / "trace.csv").string() << '\n';
            if (failed) {
                std::cerr << failed << " trial(s) aborted with errors; see the status column\n";
                return exit_runtime;
            }
        } else if (*summarize) {
            std::ifstream in(trace_path);
            const auto rows = scmal::summarize(scmal::read_trace_csv(in));
            if (out_dir.empty())
                scmal::write_summary_csv(std::cout, rows);
            else
                write_file(out_dir, [&](std::ostream& os) { scmal::write_summary_csv(os, rows); });
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_runtime;
    }
    return 0;
}
