#include <cstdio>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "bandalloc/errors.hpp"
#include "bandalloc/harness.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Bandwidth allocation experiments"};
    app.require_subcommand(1);
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out_dir = "out";
    app.add_option("--config", config_path, "Experiment config (JSON)");
    app.add_option("--seed", seed, "Seed for parameters, batches and meta tasks");
    app.add_option("--out", out_dir, "Output directory");
    const std::map<std::string, std::string> help{
        {"oracle", "Iterative optimal allocation over channel samples"},
        {"train", "Train the GNN on one task and compare with the oracle"},
        {"meta-train", "Meta-train an initialization over a task family"},
        {"meta-test", "Fine-tune checkpoints on the unseen task, plus a user-count sweep"},
        {"bench", "Operation counts and oracle/GNN wall-time ratio"},
        {"robustness", "Sweep eavesdropper-gain underestimation"}};
    for (const auto& name : bandalloc::command_names()) {
        app.add_subcommand(name, help.at(name))->fallthrough();
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    const std::string command = app.get_subcommands().front()->get_name();
    try {
        bandalloc::ExperimentConfig cfg;
        if (!config_path.empty()) cfg = bandalloc::load_config(config_path);
        if (seed) cfg.seed = *seed;
        cfg.validate();
        const auto out = bandalloc::run_command(command, cfg);
        for (const auto& w : out.warnings) std::cerr << "warning: " << w << "\n";
        bandalloc::write_outputs(out, cfg, out_dir);
        for (const auto& r : out.results) {
            std::printf("%s %s epoch=%zu reward=%.6g bps", r.method.c_str(), r.task.c_str(),
                        r.epoch, r.mean_sum_reward_bps);
            if (r.setting) std::printf(" setting=%g", *r.setting);
            if (r.gap_pct) std::printf(" gap=%.3f%%", *r.gap_pct);
            std::printf("\n");
        }
    } catch (const bandalloc::ConfigError& e) {
        std::cerr << "bandalloc " << command << ": " << e.what() << "\n";
        return 2;
    } catch (const bandalloc::ParseError& e) {
        std::cerr << "bandalloc " << command << ": " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "bandalloc " << command << ": " << e.what() << "\n";
        return 1;
    }
    return 0;
}
