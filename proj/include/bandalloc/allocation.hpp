#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bandalloc/channel.hpp"
#include "bandalloc/numerics.hpp"
#include "bandalloc/qos.hpp"

namespace bandalloc {

/// Default resource block size (10 kHz).
inline constexpr double kDefaultBlockHz = 10e3;

enum class DropReason { InfeasibleAlone, BudgetEvicted };

struct DroppedUser {
    std::size_t user;
    DropReason reason;
    double w_min_hz;  // +inf for InfeasibleAlone
};

struct ScheduleResult {
    std::vector<std::size_t> scheduled;  // ascending user index
    std::vector<double> w_min;           // Hz, aligned with `scheduled`
    std::vector<double> w_min_normalized;
    double surplus_normalized = 1.0;
    double budget_hz = 0.0;
    std::vector<DroppedUser> dropped;

    std::size_t size() const { return scheduled.size(); }
    bool empty() const { return scheduled.empty(); }
    double surplus_hz() const;
};

struct Allocation {
    std::vector<double> w;        // Hz, aligned with ScheduleResult::scheduled
    std::vector<double> rewards;  // bits/s
    double sum_reward = 0.0;
    std::uint64_t iterations_used = 0;
    bool halted_early = false;  // all marginal gains <= 0 (short blocklength)
};

struct OpCounters {
    std::uint64_t objective_evals = 0;
    std::uint64_t fnn_multiplies = 0;
    std::uint64_t scheduling_ops = 0;
};

struct ScheduleOptions {
    double block_hz = kDefaultBlockHz;  // lower edge of the short-blocklength search
    double w_lo = 1.0;
    Tolerance tol{};
};

/// Feasibility check and max-cardinality user scheduling.
ScheduleResult schedule_users(const RewardModel& model, const ChannelSample& sample,
                              const ScheduleOptions& opt = {}, OpCounters* counters = nullptr);

/// Rebuilds the normalized features from explicit minimum bandwidths.
ScheduleResult make_schedule(std::vector<std::size_t> scheduled, std::vector<double> w_min,
                             double budget_hz);

struct IterativeOptions {
    double block_hz = kDefaultBlockHz;
    /// Keep the per-user marginal gains of users that did not receive the
    /// last block instead of re-evaluating all K of them every iteration.
    /// The resulting allocation is identical; only the cost differs.
    bool reuse_marginals = false;
};

/// Greedy block-by-block allocator; optimal for concave rewards.
Allocation allocate_iterative(const ScheduleResult& sched, const RewardModel& model,
                              const ChannelSample& sample, const IterativeOptions& opt = {},
                              OpCounters* counters = nullptr);

/// Exhaustive search over every split of the surplus blocks. Throws
/// SizeError when the number of compositions exceeds 1e7.
Allocation allocate_bruteforce(const ScheduleResult& sched, const RewardModel& model,
                               const ChannelSample& sample, double block_hz = kDefaultBlockHz);

/// Number of surplus blocks floor(surplus / dw).
std::uint64_t surplus_blocks(const ScheduleResult& sched, double block_hz);

/// Evaluates per-user rewards of a given bandwidth vector.
Allocation evaluate_allocation(const ScheduleResult& sched, const RewardModel& model,
                               const ChannelSample& sample, std::vector<double> w);

/// Shaves rounding excess off the largest surplus share so that the plain
/// left-to-right sum of `w` does not exceed `budget_hz`.
void enforce_budget(std::vector<double>& w, const std::vector<double>& w_min, double budget_hz);

enum class ComplexityKind { Gnn, Iterative };

/// sum_l m_l m_{l+1}.
std::uint64_t fnn_multiplies(const std::vector<int>& layer_sizes);

/// Gnn: K (M_FNN + 2). Iterative: K (surplus / dw) omega.
double estimate_complexity(ComplexityKind kind, std::size_t num_scheduled, double surplus_hz,
                           double block_hz, const std::vector<int>& layer_sizes,
                           double omega = 1.0);

/// Rows: user_index,w_min_hz,w_hz,reward_bps.
std::string allocation_csv(const ScheduleResult& sched, const Allocation& alloc,
                           bool with_header = true);

}  // namespace bandalloc
