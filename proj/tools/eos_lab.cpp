// eos-lab run --config <path> [--workers N] [--seed S] [--output-dir D]
//
// Exit status: 0 on success, 2 for an invalid config or command line, 3 when
// the experiment itself fails. Errors are reported as one JSON object on
// stderr.

#include <CLI11.hpp>

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "eoslab/experiments.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

int report(const eoslab::json& err, int code) {
    std::cerr << err.dump() << '\n';
    return code;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Simulation driver for quadratic-model gradient dynamics"};
    app.require_subcommand(1);
    auto* run = app.add_subcommand("run", "Run one experiment from a JSON config");

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> workers;
    std::optional<std::string> output_dir;
    run->add_option("--config", config_path, "Experiment config (JSON)")->required();
    run->add_option("--workers", workers, "Worker threads (overrides config)");
    run->add_option("--seed", seed, "Base RNG seed (overrides config)");
    run->add_option("--output-dir", output_dir, "Output directory (overrides config)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return report(eoslab::error_report("usage", e.what()), kExitConfig);
    }

    eoslab::json cfg;
    {
        std::ifstream in(config_path);
        if (!in) return report(eoslab::error_report("config", "cannot open " + config_path), kExitConfig);
        try {
            cfg = eoslab::json::parse(in);
        } catch (const eoslab::json::parse_error& e) {
            return report(eoslab::error_report("config", std::string("malformed JSON: ") + e.what()), kExitConfig);
        }
    }

    eoslab::ParsedConfig parsed;
    try {
        parsed = eoslab::parse_config(cfg, {seed, workers, output_dir});
    } catch (const eoslab::ConfigError& e) {
        return report(eoslab::error_report("validation", e.what(), e.fields()), kExitConfig);
    }

    try {
        const auto rep = eoslab::run_experiment(parsed);
        eoslab::json ok = {{"status", "ok"},
                           {"experiment", parsed.experiment},
                           {"output_dir", rep.output_dir.string()},
                           {"files", rep.files},
                           {"wall_time_s", rep.wall_time_s}};
        std::cout << ok.dump() << '\n';
    } catch (const eoslab::Error& e) {
        return report(eoslab::error_report("runtime", e.what()), kExitRuntime);
    } catch (const std::exception& e) {
        return report(eoslab::error_report("internal", e.what()), kExitRuntime);
    }
    return 0;
}
