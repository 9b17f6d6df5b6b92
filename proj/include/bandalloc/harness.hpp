#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "bandalloc/allocation.hpp"
#include "bandalloc/channel.hpp"
#include "bandalloc/gnn.hpp"
#include "bandalloc/learning.hpp"
#include "bandalloc/qos.hpp"

namespace bandalloc {

/// Desk-scale learning rate for the budget-normalized objective.
inline constexpr double kDeskLearningRate = 1.0;

struct MethodSpec {
    std::string method;      // hml, maml, mtl_transfer, random_init, gnn
    std::string checkpoint;  // empty: fresh init_params
    bool operator==(const MethodSpec&) const = default;
};

struct ExperimentConfig {
    std::string experiment_id = "run";
    std::uint64_t seed = 0;
    TaskSpec task = fine_tune_eval_task();
    RewardModel::Options reward{};
    double block_hz = kDefaultBlockHz;
    /// Samples for the oracle command.
    std::size_t samples = 100;
    std::size_t eval_samples = 1000;
    bool oracle_reuse_marginals = true;
    FnnArchitecture arch{};
    TrainConfig train{};
    MetaConfig meta{};
    /// "support_query" or "desk_toy".
    std::string family = "desk_toy";
    std::size_t mtl_epochs = 200;
    std::size_t fine_tune_epochs = 10;
    std::vector<MethodSpec> methods;
    std::vector<int> users_sweep;
    std::vector<double> underestimate_db{0, 3, 6, 9, 12};
    /// Initial (train) or evaluated (robustness, bench) parameters.
    std::string checkpoint;
    std::size_t bench_users = 50;
    std::size_t bench_samples = 5;

    ExperimentConfig();
    void validate() const;
    TaskFamily task_family() const;
    bool operator==(const ExperimentConfig&) const = default;
};

std::string config_to_json_text(const ExperimentConfig& cfg);
/// Missing keys keep defaults; unknown keys throw ConfigError, bad text ParseError.
ExperimentConfig config_from_json_text(std::string_view text);
ExperimentConfig load_config(const std::filesystem::path& path);

struct ResultRow {
    std::string experiment_id;
    std::string task;
    std::string method;
    std::optional<double> setting;  // sweep value (users, underestimation dB)
    std::size_t epoch = 0;
    double mean_sum_reward_bps = 0.0;
    std::optional<double> gap_pct;
    OpCounters ops{};
    double wall_ms = 0.0;
};

/// 100 (oracle - method) / oracle.
double gap_percent(double oracle, double method);

/// experiment_id,task,method,setting,epoch,mean_sum_reward_bps,gap_pct,
/// objective_evals,fnn_multiplies,scheduling_ops,wall_ms
std::string results_csv(const std::vector<ResultRow>& rows, bool include_wall_time = true);

/// Drops the trailing wall_ms column of a CSV document.
std::string strip_wall_time(std::string_view csv_text);

std::string describe_task(const TaskSpec& t);

struct CommandOutput {
    std::vector<ResultRow> results;
    std::optional<TrainLog> log;
    std::optional<GnnParams> params;
    /// Additional files by name (allocations.csv, tasks.csv, bench.csv).
    std::map<std::string, std::string> files;
    std::vector<std::string> warnings;
};

CommandOutput cmd_oracle(const ExperimentConfig& cfg);
CommandOutput cmd_train(const ExperimentConfig& cfg);
CommandOutput cmd_meta_train(const ExperimentConfig& cfg);
CommandOutput cmd_meta_test(const ExperimentConfig& cfg);
CommandOutput cmd_bench(const ExperimentConfig& cfg);
CommandOutput cmd_robustness(const ExperimentConfig& cfg);

const std::vector<std::string>& command_names();
/// Dispatches by subcommand name; throws ConfigError for an unknown name.
CommandOutput run_command(std::string_view name, const ExperimentConfig& cfg);

/// Writes results.csv, log.csv, params.json, config.echo.json and extras.
void write_outputs(const CommandOutput& out, const ExperimentConfig& cfg,
                   const std::filesystem::path& dir);

/// Reads a checkpoint file; throws FileError when it is missing.
GnnParams read_checkpoint(const std::filesystem::path& path);

}  // namespace bandalloc
