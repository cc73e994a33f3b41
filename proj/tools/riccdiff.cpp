#include "riccdiff/config.hpp"
#include "riccdiff/experiments.hpp"
#include "riccdiff/parallel.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

using namespace riccdiff;

namespace {

int run_command(const std::string& experiment, const std::string& config_path, const std::string& out_dir,
                const std::optional<std::uint64_t>& seed, int threads) {
    std::ifstream in(config_path, std::ios::binary);
    if (!in) {
        std::cerr << "error: cannot open config " << config_path << "\n";
        return kExitUsage;
    }
    std::stringstream buf;
    buf << in.rdbuf();
    ParseResult parsed = parse_config(buf.str());
    if (!parsed.ok()) {
        for (const auto& e : parsed.errors) std::cerr << "config error: " << e << "\n";
        return kExitUsage;
    }
    ExperimentConfig cfg = std::move(*parsed.config);
    if (experiment_name(cfg.experiment) != experiment) {
        std::cerr << "error: command " << experiment << " does not match config experiment " << experiment_name(cfg.experiment)
                  << "\n";
        return kExitUsage;
    }
    if (seed) cfg.run.seed = *seed;
    const std::string dir = out_dir.empty() ? cfg.output.directory : out_dir;
    return run_and_write(cfg, dir, threads, std::cout);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Riccati diffusion and ensemble Kalman-Bucy experiment driver"};
    app.require_subcommand(1);
    int threads = 0;
    app.add_option("--threads", threads, "Worker threads (default: RICCDIFF_THREADS or hardware)")->check(CLI::NonNegativeNumber);

    std::string config_path, out_dir;
    std::uint64_t seed_value = 0;
    std::string chosen;
    std::vector<CLI::App*> runs;
    for (const auto& name : experiment_names()) {
        CLI::App* sub = app.add_subcommand(name, "Run the " + name + " experiment");
        sub->add_option("--config", config_path, "Experiment configuration (JSON)")->required();
        sub->add_option("--out", out_dir, "Output directory (overrides output.directory)");
        sub->add_option("--seed", seed_value, "Master seed (overrides run.seed)");
        sub->add_option("--threads", threads, "Worker threads")->check(CLI::NonNegativeNumber);
        sub->callback([&chosen, name] { chosen = name; });
        runs.push_back(sub);
    }
    std::string report_dir;
    CLI::App* rep = app.add_subcommand("report", "Print the verdict table of a result directory");
    rep->add_option("directory", report_dir, "Result directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    }
    if (threads > 0) set_default_thread_count(threads);

    if (rep->parsed()) return report(report_dir, std::cout, std::cerr);
    std::optional<std::uint64_t> seed;
    for (CLI::App* sub : runs)
        if (sub->parsed() && sub->count("--seed") > 0) seed = seed_value;
    try {
        return run_command(chosen, config_path, out_dir, seed, threads);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumerical;
    }
}
