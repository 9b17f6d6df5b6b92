#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "bandalloc/allocation.hpp"
#include "bandalloc/channel.hpp"
#include "bandalloc/gnn.hpp"
#include "bandalloc/qos.hpp"

namespace bandalloc {

inline constexpr std::size_t kDefaultPoolSize = 10000;
/// Query-task and query-batch child streams live above this offset.
inline constexpr std::uint64_t kQueryStreamOffset = 1u << 20;

/// Channel samples of one task, drawn and scheduled on first use.
///
/// Entry i is a pure function of (task, stream_id, i), so a pool can be
/// rebuilt at any time and batches only pay for the samples they touch.
class TaskPool {
public:
    struct Entry {
        ChannelSample sample;
        ScheduleResult sched;
        std::optional<double> oracle_sum;  // filled by oracle_sum_reward
    };

    TaskPool(const TaskSpec& task, const RewardModel::Options& opt,
             std::size_t size = kDefaultPoolSize, std::uint64_t stream_id = streams::kChannels);
    TaskPool(RewardModel model, std::size_t size, std::uint64_t stream_id);

    const TaskSpec& task() const { return model_.task; }
    const RewardModel& model() const { return model_; }
    std::size_t size() const { return entries_.size(); }

    /// Materializes the given entries (distinct indices may run concurrently).
    void prepare(const std::vector<std::size_t>& indices);
    /// Entry i; must have been prepared.
    const Entry& at(std::size_t i) const;
    const Entry& get(std::size_t i);

    /// J distinct indices drawn from `stream` (Floyd's algorithm, sorted).
    std::vector<std::size_t> draw_batch(const RngStream& stream, std::size_t j) const;
    /// Indices 0..n-1.
    std::vector<std::size_t> first(std::size_t n) const;

    /// Oracle (iterative allocator) sum reward of entry i, cached.
    double oracle_sum_reward(std::size_t i, double block_hz = kDefaultBlockHz);

private:
    void fill(std::size_t i);

    RewardModel model_;
    std::uint64_t stream_id_;
    std::vector<std::optional<Entry>> entries_;
};

struct TrainConfig {
    std::size_t epochs = 100;
    std::size_t batch_size = 32;
    double lr = 1e-4;
    /// Ascend on the batch loss divided by the task budget (bits/s/Hz)
    /// instead of the raw bits/s value.
    bool normalize_objective = true;
    std::size_t pool_size = kDefaultPoolSize;
    /// Evaluate on the evaluation set every k epochs (0 = never).
    std::size_t eval_every = 0;
    std::uint64_t batch_seed = 0;

    void validate() const;
    bool operator==(const TrainConfig&) const = default;
};

enum class MetaVariant { HML, MAML };
enum class GradientMode { FirstOrder, SecondOrderFD };

std::string_view to_string(MetaVariant v);
MetaVariant parse_meta_variant(std::string_view s);
std::string_view to_string(GradientMode g);
GradientMode parse_gradient_mode(std::string_view s);

struct MetaConfig {
    std::size_t meta_epochs = 200;
    std::size_t inner_epochs = 5;
    std::size_t support_tasks = 4;       // I
    std::size_t query_tasks = 2;         // I'
    std::size_t support_samples = 32;    // J
    std::size_t query_samples = 32;      // J'
    double inner_lr = 1e-4;
    double meta_lr = 1e-4;
    bool normalize_objective = true;
    MetaVariant variant = MetaVariant::HML;
    GradientMode gradient_mode = GradientMode::FirstOrder;
    double fd_step = 1e-5;
    std::size_t pool_size = kDefaultPoolSize;
    std::uint64_t seed = 0;
    /// Draw query tasks fresh each meta-epoch (HML). Off reproduces the
    /// support-task reuse pattern even for the HML variant.
    bool hml_query_draw = true;

    void validate() const;
    bool operator==(const MetaConfig&) const = default;
};

struct TrainLogRow {
    std::size_t epoch = 0;
    double loss_bps = 0.0;
    std::optional<double> eval_reward_bps;
    double wall_ms = 0.0;
    /// Task seeds touched in this epoch (meta-training only).
    std::vector<std::uint64_t> support_tasks;
    std::vector<std::uint64_t> query_tasks;
};

struct TrainLog {
    std::vector<TrainLogRow> rows;

    std::size_t size() const { return rows.size(); }
    /// epoch,loss_bps,eval_reward_bps,wall_ms
    std::string to_csv(bool include_wall_time = true) const;
};

/// Mean over the batch of the per-sample sum reward (bits/s); samples with an
/// empty schedule count as 0. With `grad`, accumulates scale * d(mean)/d(theta)
/// summed sample by sample in index order.
double loss_batch(const GnnParams& params, TaskPool& pool, const std::vector<std::size_t>& batch,
                  GnnParams* grad = nullptr, double scale = 1.0);

/// Same quantity for explicit samples (each is scheduled first).
double loss_batch(const GnnParams& params, const RewardModel& model,
                  const std::vector<ChannelSample>& samples);

struct EvalStats {
    double mean_sum_reward = 0.0;
    double mean_scheduled = 0.0;
    std::size_t samples = 0;
};

/// Mean GNN sum reward over pool entries `indices`.
EvalStats evaluate_gnn(const GnnParams& params, TaskPool& pool,
                       const std::vector<std::size_t>& indices);
/// Mean oracle sum reward over pool entries `indices`.
EvalStats evaluate_oracle(TaskPool& pool, const std::vector<std::size_t>& indices,
                          double block_hz = kDefaultBlockHz);

struct TrainResult {
    GnnParams params;
    TrainLog log;
};

/// Gradient ascent on one task; batches come from `pool`, optional periodic
/// evaluation on `eval_pool` entries 0..eval_samples-1.
TrainResult train_task(const GnnParams& init, TaskPool& pool, const TrainConfig& cfg,
                       TaskPool* eval_pool = nullptr, std::size_t eval_samples = 0);

/// Where meta-training tasks come from.
struct TaskSource {
    TaskFamily family = TaskFamily::support_query();
    RewardModel::Options reward{};
    /// When set, every draw returns this task (used to force support = query).
    std::optional<TaskSpec> fixed;

    TaskSpec draw(const RngStream& stream) const;
};

struct MetaResult {
    GnnParams phi;
    TrainLog log;
};

MetaResult meta_train(const GnnParams& init, const TaskSource& source, const MetaConfig& cfg);

struct MetaTestResult {
    /// Mean eval sum reward after e fine-tune epochs, e = 0..fine_tune_epochs.
    std::vector<double> eval_curve;
    TrainLog log;
    GnnParams params;
    EvalStats final_stats;
};

/// Fine-tunes a copy of `phi` on `fine_tune` batches and evaluates on the
/// first `eval_samples` entries of `eval` after every epoch.
MetaTestResult meta_test(const GnnParams& phi, TaskPool& fine_tune, TaskPool& eval,
                         std::size_t fine_tune_epochs, const TrainConfig& cfg,
                         std::size_t eval_samples = 1000);

struct MtlConfig {
    std::size_t epochs = 200;
    std::size_t batch_size = 32;
    double lr = 1e-4;
    bool normalize_objective = true;
    std::size_t pool_size = kDefaultPoolSize;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Multi-task transfer baseline: one task and one SGA step per epoch.
GnnParams baseline_mtl_pretrain(const GnnParams& init, const TaskSource& source,
                                const MtlConfig& cfg);

struct RobustnessPoint {
    double underestimate_db = 0.0;
    double oracle_reward = 0.0;
    double gnn_reward = 0.0;
};

/// Decisions use eavesdropper gains scaled down by each level; achieved
/// rewards use the true gains. Throws ConfigError for non-secrecy tasks.
std::vector<RobustnessPoint> robustness_sweep(const GnnParams& phi, TaskPool& eval,
                                              const std::vector<double>& underestimate_db,
                                              std::size_t samples,
                                              double block_hz = kDefaultBlockHz);

}  // namespace bandalloc
