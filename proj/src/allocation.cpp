#include "bandalloc/allocation.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>

#include "bandalloc/csv.hpp"
#include "bandalloc/errors.hpp"

namespace bandalloc {

namespace {

double left_sum(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
}

}  // namespace

double ScheduleResult::surplus_hz() const {
    return std::max(0.0, budget_hz - left_sum(w_min));
}

ScheduleResult make_schedule(std::vector<std::size_t> scheduled, std::vector<double> w_min,
                             double budget_hz) {
    if (scheduled.size() != w_min.size()) throw DomainError("make_schedule: size mismatch");
    ScheduleResult r;
    r.scheduled = std::move(scheduled);
    r.w_min = std::move(w_min);
    r.budget_hz = budget_hz;
    r.w_min_normalized.reserve(r.w_min.size());
    for (double w : r.w_min) r.w_min_normalized.push_back(w / budget_hz);
    // Sorted summation keeps the surplus feature independent of user order.
    std::vector<double> sorted = r.w_min_normalized;
    std::sort(sorted.begin(), sorted.end());
    r.surplus_normalized = std::max(0.0, 1.0 - left_sum(sorted));
    return r;
}

ScheduleResult schedule_users(const RewardModel& model, const ChannelSample& sample,
                              const ScheduleOptions& opt, OpCounters* counters) {
    const double budget = model.budget();
    const double target = model.threshold();
    const std::size_t n = sample.num_users();
    std::vector<std::size_t> kept;
    std::vector<double> w_min;
    std::vector<DroppedUser> dropped;
    std::uint64_t ops = 0;

    for (std::size_t u = 0; u < n; ++u) {
        const LinkBudget lb = model.user_budget(sample, u);
        auto f = [&](double w) { return reward(w, lb, model.inputs); };
        ++ops;
        if (f(budget) < target) {
            dropped.push_back({u, DropReason::InfeasibleAlone,
                               std::numeric_limits<double>::infinity()});
            continue;
        }
        double hi = budget;
        if (model.qos().is_short()) {
            const double w_th = concave_region_bound(lb, model.inputs,
                                                     std::min(opt.block_hz, budget), budget);
            ++ops;
            if (f(w_th) >= target) hi = w_th;
        }
        double w;
        if (f(opt.w_lo) >= target) {
            w = opt.w_lo;
        } else {
            const Bracket b = bisect_bracket(f, opt.w_lo, hi, target, opt.tol);
            w = b.upper;
            ops += static_cast<std::uint64_t>(b.iterations);
        }
        kept.push_back(u);
        w_min.push_back(w);
    }

    // Evict the largest requirement until the minimums fit the budget.
    while (!kept.empty() && left_sum(w_min) > budget) {
        std::size_t worst = 0;
        for (std::size_t i = 1; i < kept.size(); ++i) {
            if (w_min[i] > w_min[worst]) worst = i;
        }
        dropped.push_back({kept[worst], DropReason::BudgetEvicted, w_min[worst]});
        kept.erase(kept.begin() + static_cast<std::ptrdiff_t>(worst));
        w_min.erase(w_min.begin() + static_cast<std::ptrdiff_t>(worst));
        ops += kept.size() + 1;
    }

    if (counters) counters->scheduling_ops += ops;
    ScheduleResult r = make_schedule(std::move(kept), std::move(w_min), budget);
    r.dropped = std::move(dropped);
    return r;
}

std::uint64_t surplus_blocks(const ScheduleResult& sched, double block_hz) {
    if (!(block_hz > 0.0)) throw DomainError("block size must be positive");
    return static_cast<std::uint64_t>(std::floor(sched.surplus_hz() / block_hz));
}

void enforce_budget(std::vector<double>& w, const std::vector<double>& w_min, double budget_hz) {
    for (int pass = 0; pass < 256; ++pass) {
        const double total = left_sum(w);
        if (total <= budget_hz) return;
        std::size_t best = 0;
        for (std::size_t k = 1; k < w.size(); ++k) {
            if (w[k] - w_min[k] > w[best] - w_min[best]) best = k;
        }
        if (w[best] <= w_min[best]) return;
        const double shaved = pass == 0 ? w[best] - (total - budget_hz)
                                        : std::nextafter(w[best], 0.0);
        w[best] = std::max(w_min[best], shaved);
    }
}

Allocation evaluate_allocation(const ScheduleResult& sched, const RewardModel& model,
                               const ChannelSample& sample, std::vector<double> w) {
    Allocation a;
    a.w = std::move(w);
    a.rewards.resize(a.w.size());
    for (std::size_t k = 0; k < a.w.size(); ++k) {
        a.rewards[k] = model.reward(sample, sched.scheduled[k], a.w[k]);
    }
    a.sum_reward = left_sum(a.rewards);
    return a;
}

Allocation allocate_iterative(const ScheduleResult& sched, const RewardModel& model,
                              const ChannelSample& sample, const IterativeOptions& opt,
                              OpCounters* counters) {
    if (!(opt.block_hz > 0.0)) throw DomainError("block size must be positive");
    const std::size_t K = sched.size();
    if (K == 0) return {};
    const double dw = opt.block_hz;
    const std::uint64_t blocks = surplus_blocks(sched, dw);

    std::vector<LinkBudget> budgets(K);
    for (std::size_t k = 0; k < K; ++k) budgets[k] = model.user_budget(sample, sched.scheduled[k]);
    // Reward of user k holding j extra blocks; both modes evaluate the same points.
    auto r = [&](std::size_t k, std::uint64_t j) {
        return reward(sched.w_min[k] + static_cast<double>(j) * dw, budgets[k], model.inputs);
    };

    std::vector<std::uint64_t> given(K, 0);
    std::vector<double> w = sched.w_min;
    std::vector<double> here(K);
    std::vector<double> next(K);
    std::uint64_t evals = 0;
    if (opt.reuse_marginals) {
        for (std::size_t k = 0; k < K; ++k) {
            here[k] = r(k, 0);
            next[k] = r(k, 1);
        }
        evals += 2 * K;
    }

    Allocation out;
    std::uint64_t it = 0;
    for (; it < blocks; ++it) {
        if (!opt.reuse_marginals) {
            for (std::size_t k = 0; k < K; ++k) {
                here[k] = r(k, given[k]);
                next[k] = r(k, given[k] + 1);
            }
            evals += 2 * K;
        }
        std::size_t best = 0;
        double best_gain = next[0] - here[0];
        for (std::size_t k = 1; k < K; ++k) {
            const double g = next[k] - here[k];
            if (g > best_gain) {
                best_gain = g;
                best = k;
            }
        }
        if (best_gain <= 0.0) {
            out.halted_early = true;
            break;
        }
        ++given[best];
        w[best] = sched.w_min[best] + static_cast<double>(given[best]) * dw;
        if (opt.reuse_marginals) {
            here[best] = next[best];
            next[best] = r(best, given[best] + 1);
            ++evals;
        }
    }
    if (counters) counters->objective_evals += evals;

    enforce_budget(w, sched.w_min, sched.budget_hz);
    Allocation a = evaluate_allocation(sched, model, sample, std::move(w));
    a.iterations_used = it;
    a.halted_early = out.halted_early;
    return a;
}

Allocation allocate_bruteforce(const ScheduleResult& sched, const RewardModel& model,
                               const ChannelSample& sample, double block_hz) {
    const std::size_t K = sched.size();
    if (K == 0) return {};
    const std::uint64_t B = surplus_blocks(sched, block_hz);
    // C(B+K-1, K-1), bailing out once it passes the limit.
    constexpr double kLimit = 1e7;
    double count = 1.0;
    for (std::size_t i = 1; i < K; ++i) {
        count = count * static_cast<double>(B + i) / static_cast<double>(i);
        if (count > kLimit) throw SizeError("allocate_bruteforce: too many compositions");
    }

    // table[k][j] = reward of user k with j extra blocks.
    std::vector<std::vector<double>> table(K, std::vector<double>(B + 1));
    for (std::size_t k = 0; k < K; ++k) {
        const LinkBudget lb = model.user_budget(sample, sched.scheduled[k]);
        for (std::uint64_t j = 0; j <= B; ++j) {
            table[k][j] = reward(sched.w_min[k] + static_cast<double>(j) * block_hz, lb,
                                 model.inputs);
        }
    }

    std::vector<std::uint64_t> cur(K, 0);
    std::vector<std::uint64_t> best(K, 0);
    double best_sum = -std::numeric_limits<double>::infinity();
    std::function<void(std::size_t, std::uint64_t, double)> rec =
        [&](std::size_t k, std::uint64_t left, double acc) {
            if (k + 1 == K) {
                cur[k] = left;
                const double total = acc + table[k][left];
                if (total > best_sum) {
                    best_sum = total;
                    best = cur;
                }
                return;
            }
            for (std::uint64_t j = 0; j <= left; ++j) {
                cur[k] = j;
                rec(k + 1, left - j, acc + table[k][j]);
            }
        };
    rec(0, B, 0.0);

    std::vector<double> w(K);
    for (std::size_t k = 0; k < K; ++k) {
        w[k] = sched.w_min[k] + static_cast<double>(best[k]) * block_hz;
    }
    enforce_budget(w, sched.w_min, sched.budget_hz);
    Allocation a = evaluate_allocation(sched, model, sample, std::move(w));
    a.iterations_used = B;
    return a;
}

std::uint64_t fnn_multiplies(const std::vector<int>& layer_sizes) {
    std::uint64_t m = 0;
    for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
        if (layer_sizes[l] <= 0 || layer_sizes[l + 1] <= 0) {
            throw DomainError("layer sizes must be positive");
        }
        m += static_cast<std::uint64_t>(layer_sizes[l]) * static_cast<std::uint64_t>(layer_sizes[l + 1]);
    }
    return m;
}

double estimate_complexity(ComplexityKind kind, std::size_t num_scheduled, double surplus_hz,
                           double block_hz, const std::vector<int>& layer_sizes, double omega) {
    const auto K = static_cast<double>(num_scheduled);
    if (kind == ComplexityKind::Gnn) {
        return K * static_cast<double>(fnn_multiplies(layer_sizes) + 2);
    }
    if (!(block_hz > 0.0)) throw DomainError("block size must be positive");
    return K * (surplus_hz / block_hz) * omega;
}

std::string allocation_csv(const ScheduleResult& sched, const Allocation& alloc,
                           bool with_header) {
    std::string out;
    if (with_header) out += csv::row({"user_index", "w_min_hz", "w_hz", "reward_bps"});
    for (std::size_t k = 0; k < alloc.w.size(); ++k) {
        out += csv::row({csv::number(static_cast<std::uint64_t>(sched.scheduled[k])),
                         csv::number(sched.w_min[k]), csv::number(alloc.w[k]),
                         csv::number(alloc.rewards[k])});
    }
    return out;
}

}  // namespace bandalloc
