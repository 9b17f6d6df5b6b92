#include <algorithm>
#include <cmath>
#include <numeric>

#include "bandalloc/allocation.hpp"
#include "bandalloc/csv.hpp"
#include "bandalloc/errors.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace bandalloc;

using namespace testing;

TEST_CASE("single feasible user") {
    const auto in = make_instance({Phi::DataRate, Xi::LongBlocklength}, 10e6, 5e6, {zeta_for(4e6, 5e6)});
    const auto s = schedule_users(in.model, in.sample);
    REQUIRE(s.size() == 1);
    CHECK(s.w_min[0] == doctest::Approx(4e6).epsilon(1e-8));
    CHECK(s.w_min_normalized[0] == s.w_min[0] / 10e6);
    CHECK(s.surplus_normalized == doctest::Approx(1.0 - s.w_min_normalized[0]).epsilon(1e-15));
    CHECK(s.dropped.empty());
}

TEST_CASE("deep fade is infeasible alone") {
    const auto in = make_instance({Phi::DataRate, Xi::LongBlocklength}, 10e6, 5e6, {0.0, zeta_for(4e6, 5e6)});
    const auto s = schedule_users(in.model, in.sample);
    REQUIRE(s.dropped.size() == 1);
    CHECK(s.dropped[0].user == 0);
    CHECK(s.dropped[0].reason == DropReason::InfeasibleAlone);
    CHECK(s.scheduled == std::vector<std::size_t>{1});
    const auto a = allocate_iterative(s, in.model, in.sample);
    CHECK(a.w.size() == 1);
}

TEST_CASE("budget eviction drops the largest requirement") {
    const double budget = 10e6, r = 5e6;
    const std::vector<double> want{4e6, 6e6, 2e6};  // sums to 1.2 budget
    std::vector<double> zeta;
    for (double w : want) zeta.push_back(zeta_for(w, r));
    const auto in = make_instance({Phi::DataRate, Xi::LongBlocklength}, budget, r, zeta);
    const auto s = schedule_users(in.model, in.sample);

    // Straight-line reimplementation of the eviction loop.
    std::vector<std::size_t> kept{0, 1, 2};
    std::vector<double> mins = want;
    std::vector<std::size_t> evicted;
    while (sum(mins) > budget) {
        const auto it = std::max_element(mins.begin(), mins.end());
        const auto i = static_cast<std::size_t>(it - mins.begin());
        evicted.push_back(kept[i]);
        kept.erase(kept.begin() + static_cast<std::ptrdiff_t>(i));
        mins.erase(it);
    }
    CHECK(s.scheduled == kept);
    REQUIRE(s.dropped.size() == evicted.size());
    CHECK(s.dropped[0].user == evicted[0]);
    CHECK(s.dropped[0].reason == DropReason::BudgetEvicted);
    CHECK(s.dropped[0].w_min_hz == doctest::Approx(6e6).epsilon(1e-8));
    CHECK(kept == std::vector<std::size_t>{0, 2});
}

TEST_CASE("eviction ties go to the lowest index") {
    const double r = 5e6;
    const auto z = zeta_for(6e6, r);
    const auto in = make_instance({Phi::DataRate, Xi::LongBlocklength}, 10e6, r, {zeta_for(3e6, r), z, z});
    const auto s = schedule_users(in.model, in.sample);
    REQUIRE(s.dropped.size() == 1);
    CHECK(s.dropped[0].user == 1);
    CHECK(s.scheduled == std::vector<std::size_t>{0, 2});
}

TEST_CASE("scheduling invariants on random instances for every kind") {
    for (const QosKind& q : all_qos_kinds()) {
        int scheduled_total = 0, evicted_total = 0, infeasible_total = 0;
        for (std::uint64_t t = 0; t < 100; ++t) {
            const TaskOverrides o{.qos = q};
            const TaskSpec task = sample_task(RngStream{31, streams::kTasks}.derive(t), Taskset::SupportQuery, o);
            RewardModel::Options opt;
            opt.n_mc = 100;
            const RewardModel model = RewardModel::build(task, opt);
            for (std::uint64_t i = 0; i < 10; ++i) {
                const auto sample = sample_channel(task, RngStream{task.seed, streams::kChannels}, i);
                OpCounters ops;
                const auto s = schedule_users(model, sample, {}, &ops);
                CHECK(ops.scheduling_ops >= sample.num_users());
                CHECK(sum(s.w_min) <= model.budget());
                CHECK(s.surplus_normalized >= 0.0);
                CHECK(s.surplus_normalized == doctest::Approx(1.0 - sum(s.w_min_normalized)).epsilon(1e-12));
                CHECK(std::is_sorted(s.scheduled.begin(), s.scheduled.end()));
                CHECK(s.scheduled.size() + s.dropped.size() == sample.num_users());
                double largest = 0.0;
                for (std::size_t k = 0; k < s.size(); ++k) {
                    const double wm = s.w_min[k];
                    largest = std::max(largest, wm);
                    CHECK(model.reward(sample, s.scheduled[k], wm) >= model.threshold());
                    CHECK(s.w_min_normalized[k] >= 0.0);
                    CHECK(s.w_min_normalized[k] <= 1.0);
                    if (wm > 1.0) {
                        CHECK(model.reward(sample, s.scheduled[k], wm * (1.0 - 1e-7)) < model.threshold());
                    }
                }
                for (const auto& d : s.dropped) {
                    if (d.reason == DropReason::BudgetEvicted) {
                        CHECK(largest <= d.w_min_hz);
                        ++evicted_total;
                    } else {
                        CHECK(model.reward(sample, d.user, model.budget()) < model.threshold());
                        ++infeasible_total;
                    }
                }
                scheduled_total += static_cast<int>(s.size());
            }
        }
        INFO(to_string(q));
        CHECK(scheduled_total > 0);
        MESSAGE(to_string(q) << ": scheduled " << scheduled_total << ", evicted " << evicted_total
                             << ", infeasible " << infeasible_total);
    }
}

TEST_CASE("iterative allocator examples") {
    const double dw = kDefaultBlockHz;
    SUBCASE("one user takes every whole block") {
        const auto in = make_instance({Phi::DataRate, Xi::LongBlocklength}, 10e6, 1e6, {1e7});
        const auto s = make_schedule({0}, {1.234e6}, 1.234e6 + 37.5 * dw);
        OpCounters ops;
        const auto a = allocate_iterative(s, in.model, in.sample, {}, &ops);
        CHECK(a.w[0] == doctest::Approx(1.234e6 + 37 * dw).epsilon(1e-15));
        CHECK(a.iterations_used == 37);
        CHECK(ops.objective_evals == 2 * 37);
    }
    SUBCASE("identical users split evenly") {
        const auto in = make_instance({Phi::DataRate, Xi::LongBlocklength}, 10e6, 1e6, {1e7, 1e7});
        const auto s = make_schedule({0, 1}, {1e6, 1e6}, 2e6 + 2 * 25 * dw);
        const auto a = allocate_iterative(s, in.model, in.sample);
        CHECK(a.w[0] == a.w[1]);
        CHECK(a.w[0] == doctest::Approx(1e6 + 25 * dw));
    }
    SUBCASE("three secrecy users match enumeration") {
        const auto in = make_instance({Phi::SecrecyRate, Xi::LongBlocklength}, 20 * dw, 1e3,
                                      {3e5, 1e6, 5e6}, {1e5, 2e5, 4e6});
        const auto s = make_schedule({0, 1, 2}, {2 * dw, 3 * dw, 1 * dw}, 20 * dw);
        const auto a = allocate_iterative(s, in.model, in.sample);
        const auto b = allocate_bruteforce(s, in.model, in.sample);
        CHECK(a.sum_reward == doctest::Approx(b.sum_reward).epsilon(1e-9));
    }
    SUBCASE("short blocklength halts when every marginal gain is negative") {
        // Past the rate peak for zeta = 5e5.
        const auto in = make_instance({Phi::DataRate, Xi::ShortBlocklength}, 10e6, 1e3, {5e5});
        const auto s = make_schedule({0}, {5e6}, 5e6 + 10 * dw);
        const auto a = allocate_iterative(s, in.model, in.sample);
        CHECK(a.halted_early);
        CHECK(a.iterations_used == 0);
        CHECK(a.w[0] == 5e6);
    }
    SUBCASE("empty schedule") {
        const auto in = make_instance({Phi::DataRate, Xi::LongBlocklength}, 10e6, 1e6, {1e7});
        const auto a = allocate_iterative(make_schedule({}, {}, 10e6), in.model, in.sample);
        CHECK(a.w.empty());
        CHECK(a.sum_reward == 0.0);
    }
}

TEST_CASE("brute force examples") {
    const double dw = kDefaultBlockHz;
    const auto in = make_instance({Phi::DataRate, Xi::LongBlocklength}, 10e6, 1e6, {1e6, 4e6});
    const auto zero = allocate_bruteforce(make_schedule({0, 1}, {1e5, 2e5}, 3e5 + 0.5 * dw), in.model, in.sample);
    CHECK(zero.w == std::vector<double>{1e5, 2e5});
    const auto one = allocate_bruteforce(make_schedule({1}, {2e5}, 2e5 + 12 * dw), in.model, in.sample);
    CHECK(one.w[0] == doctest::Approx(2e5 + 12 * dw));

    // Two asymmetric users with ten blocks: enumerate by hand.
    const auto s = make_schedule({0, 1}, {1e5, 1e5}, 2e5 + 10 * dw);
    double best = -1.0;
    for (int j = 0; j <= 10; ++j) {
        const double v = in.model.reward(in.sample, 0, 1e5 + j * dw) +
                         in.model.reward(in.sample, 1, 1e5 + (10 - j) * dw);
        best = std::max(best, v);
    }
    CHECK(allocate_bruteforce(s, in.model, in.sample).sum_reward == doctest::Approx(best).epsilon(1e-12));
    CHECK(allocate_iterative(s, in.model, in.sample).sum_reward == doctest::Approx(best).epsilon(1e-9));

    std::vector<double> big(4, 1e5);
    const auto huge = make_schedule({0, 1, 0, 1}, big, 4e5 + 1000 * dw);
    CHECK_THROWS_AS(allocate_bruteforce(huge, in.model, in.sample), SizeError);
}

TEST_CASE("iterative matches brute force on random concave instances") {
    Rng rng(RngStream{77, 1});
    const double dw = kDefaultBlockHz;
    const QosKind kinds[] = {{Phi::DataRate, Xi::LongBlocklength},
                             {Phi::SecrecyRate, Xi::LongBlocklength},
                             {Phi::EffectiveCapacity, Xi::LongBlocklength}};
    for (int i = 0; i < 200; ++i) {
        const QosKind q = kinds[i % 3];
        const auto K = static_cast<std::size_t>(rng.uniform_int(1, 4));
        std::vector<double> zeta(K), zeta_e(K), wmin(K);
        std::vector<std::size_t> users(K);
        for (std::size_t k = 0; k < K; ++k) {
            zeta[k] = std::pow(10.0, rng.uniform(4.0, 8.0));
            zeta_e[k] = zeta[k] * rng.uniform(0.0, 1.2);
            wmin[k] = rng.uniform(1.0, 50.0) * dw;
            users[k] = k;
        }
        const auto B = rng.uniform_int(0, 25);
        const double budget = sum(wmin) + (static_cast<double>(B) + rng.uniform01() * 0.99) * dw;
        const auto in = make_instance(q, budget, 1.0, zeta, zeta_e);
        const auto s = make_schedule(users, wmin, budget);
        REQUIRE(surplus_blocks(s, dw) == static_cast<std::uint64_t>(B));
        const auto a = allocate_iterative(s, in.model, in.sample);
        const auto b = allocate_bruteforce(s, in.model, in.sample);
        INFO("instance " << i << " K=" << K << " B=" << B);
        CHECK(std::abs(a.sum_reward - b.sum_reward) <= 1e-9 * std::max(1.0, std::abs(b.sum_reward)));
        CHECK(sum(a.w) <= budget);
        for (std::size_t k = 0; k < K; ++k) CHECK(a.w[k] >= wmin[k]);
        if (!a.halted_early) CHECK(budget - sum(a.w) < dw * (1.0 + 1e-9));
        CHECK(a.sum_reward == doctest::Approx(sum(a.rewards)).epsilon(1e-15));
    }
}

TEST_CASE("iterative sum reward grows with every extra block") {
    const auto in = make_instance({Phi::SecrecyRate, Xi::LongBlocklength}, 10e6, 1.0, {2e6, 5e6, 9e5}, {1e6, 1e6, 1e5});
    const std::vector<double> wmin{1e5, 2e5, 5e4};
    double prev = -1.0;
    for (int b = 0; b <= 60; ++b) {
        const auto s = make_schedule({0, 1, 2}, wmin, sum(wmin) + b * kDefaultBlockHz);
        const auto a = allocate_iterative(s, in.model, in.sample);
        CHECK(a.sum_reward >= prev);
        prev = a.sum_reward;
    }
}

TEST_CASE("reusing marginal gains gives the same allocation at lower cost") {
    for (const QosKind& q : all_qos_kinds()) {
        const TaskOverrides o{.qos = q};
        const TaskSpec task = sample_task(RngStream{41, streams::kTasks}, Taskset::SupportQuery, o);
        RewardModel::Options opt;
        opt.n_mc = 50;
        const auto model = RewardModel::build(task, opt);
        const auto sample = sample_channel(task, RngStream{task.seed, streams::kChannels}, 0);
        const auto s = schedule_users(model, sample);
        if (s.empty()) continue;
        OpCounters plain_ops, reuse_ops;
        const auto plain = allocate_iterative(s, model, sample, {kDefaultBlockHz, false}, &plain_ops);
        const auto reuse = allocate_iterative(s, model, sample, {kDefaultBlockHz, true}, &reuse_ops);
        CHECK(plain.w == reuse.w);
        CHECK(plain.sum_reward == reuse.sum_reward);
        CHECK(plain_ops.objective_evals == 2 * s.size() * plain.iterations_used +
                                               (plain.halted_early ? 2 * s.size() : 0));
        CHECK(reuse_ops.objective_evals <= plain_ops.objective_evals);
        if (!q.is_short()) CHECK(s.surplus_hz() - (sum(plain.w) - sum(s.w_min)) < kDefaultBlockHz * (1.0 + 1e-9));
    }
}

TEST_CASE("complexity estimates") {
    const std::vector<int> layers{2, 32, 64, 32, 1};
    std::uint64_t m = 0;
    for (std::size_t l = 0; l + 1 < layers.size(); ++l) m += static_cast<std::uint64_t>(layers[l] * layers[l + 1]);
    CHECK(fnn_multiplies(layers) == m);
    CHECK(m == 4192);
    CHECK(estimate_complexity(ComplexityKind::Gnn, 50, 0, kDefaultBlockHz, layers) == 50.0 * (m + 2));
    CHECK(estimate_complexity(ComplexityKind::Gnn, 0, 0, kDefaultBlockHz, layers) == 0.0);
    CHECK(estimate_complexity(ComplexityKind::Iterative, 0, 90e6, 10e3, layers, 3.0) == 0.0);
    CHECK(estimate_complexity(ComplexityKind::Iterative, 50, 90e6, 10e3, layers, 3.0) ==
          doctest::Approx(50.0 * 9000.0 * 3.0));
    CHECK_THROWS_AS(fnn_multiplies({2, 0, 1}), DomainError);
}

TEST_CASE("budget enforcement") {
    std::vector<double> w{0.1, 0.2, 0.7 + 1e-12};
    enforce_budget(w, {0.0, 0.0, 0.0}, 1.0);
    CHECK(w[0] + w[1] + w[2] <= 1.0);
    CHECK(w[0] == 0.1);
    std::vector<double> tight{0.5, 0.5};
    enforce_budget(tight, {0.5, 0.5}, 0.9);
    CHECK(tight == std::vector<double>{0.5, 0.5});
}

TEST_CASE("allocation csv") {
    const auto in = make_instance({Phi::DataRate, Xi::LongBlocklength}, 10e6, 1e6, {1e7, 2e7});
    const auto s = make_schedule({0, 1}, {1e5, 3e5}, 1e6);
    const auto a = allocate_iterative(s, in.model, in.sample);
    const auto rows = csv::parse(allocation_csv(s, a));
    REQUIRE(rows.size() == 3);
    CHECK(rows[0] == std::vector<std::string>{"user_index", "w_min_hz", "w_hz", "reward_bps"});
    CHECK(rows[2][0] == "1");
    CHECK(std::stod(rows[2][1]) == 3e5);
    CHECK(std::stod(rows[1][2]) == a.w[0]);
    CHECK(std::stod(rows[1][3]) == a.rewards[0]);
    CHECK(csv::parse(allocation_csv(s, a, false)).size() == 2);
}
