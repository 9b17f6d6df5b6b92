#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <set>

#include "bandalloc/errors.hpp"
#include "bandalloc/harness.hpp"
#include "bandalloc/learning.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace bandalloc;
using namespace testing;

namespace {

TaskSpec small_secrecy_task(int users = 3, std::uint64_t seed = 7) {
    TaskSpec t = fine_tune_eval_task();
    t.num_users = users;
    t.seed = seed;
    return t;
}

TrainConfig desk_train(std::size_t epochs, std::uint64_t seed = 1) {
    TrainConfig c;
    c.epochs = epochs;
    c.lr = kDeskLearningRate;
    c.pool_size = 2000;
    c.batch_seed = seed;
    return c;
}

MetaConfig small_meta(std::size_t epochs) {
    MetaConfig c;
    c.meta_epochs = epochs;
    c.inner_epochs = 2;
    c.support_tasks = 2;
    c.query_tasks = 2;
    c.support_samples = 8;
    c.query_samples = 8;
    c.inner_lr = kDeskLearningRate;
    c.meta_lr = kDeskLearningRate;
    c.pool_size = 200;
    c.seed = 3;
    return c;
}

TaskSource toy_source() {
    TaskSource s;
    s.family = TaskFamily::desk_toy();
    return s;
}

}  // namespace

TEST_CASE("loss of a single-user sample is its reward at the full budget") {
    const auto in = make_instance({Phi::DataRate, Xi::LongBlocklength}, 1e7, 1e6, {5e7});
    const auto p = init_params({}, RngStream{1, streams::kParams});
    const double one = loss_batch(p, in.model, {in.sample});
    CHECK(one == doctest::Approx(rate_long(1e7, LinkBudget{1.0, 5e7, std::nullopt, 1.0})).epsilon(1e-12));
    CHECK(loss_batch(p, in.model, {in.sample, in.sample}) == one);
    CHECK_THROWS_AS(loss_batch(p, in.model, {}), DomainError);
}

TEST_CASE("pool batch loss equals a hand-rolled recomputation") {
    TaskPool pool(small_secrecy_task(8), {}, 500);
    const auto p = init_params({}, RngStream{2, streams::kParams});
    const auto batch = pool.draw_batch(RngStream{4, streams::kBatches}, 16);
    GnnParams grad(p.arch());
    const double got = loss_batch(p, pool, batch, &grad);

    const TaskSpec task = pool.task();
    const RewardModel model = RewardModel::build(task);
    double total = 0.0;
    for (std::size_t i : batch) {
        const auto sample = sample_channel(task, RngStream{task.seed, streams::kChannels}, i);
        const auto sched = schedule_users(model, sample);
        if (sched.empty()) continue;
        const auto t = forward(p, sched);
        for (std::size_t k = 0; k < sched.size(); ++k) {
            total += model.reward(sample, sched.scheduled[k], t.w_tilde[k] * model.budget());
        }
    }
    CHECK(got == doctest::Approx(total / 16.0).epsilon(1e-12));

    std::vector<ChannelSample> samples;
    for (std::size_t i : batch) samples.push_back(pool.at(i).sample);
    CHECK(loss_batch(p, pool.model(), samples) == doctest::Approx(got).epsilon(1e-12));
}

TEST_CASE("task pool entries and batches") {
    TaskPool a(small_secrecy_task(5), {}, 100);
    TaskPool b(small_secrecy_task(5), {}, 100);
    CHECK(a.get(42).sample == b.get(42).sample);
    CHECK(a.get(42).sample == sample_channel(a.task(), RngStream{a.task().seed, streams::kChannels}, 42));
    CHECK_THROWS(a.at(43));

    const auto batch = a.draw_batch(RngStream{1, 2}, 30);
    CHECK(batch.size() == 30);
    CHECK(std::is_sorted(batch.begin(), batch.end()));
    CHECK(std::set<std::size_t>(batch.begin(), batch.end()).size() == 30);
    CHECK(batch.back() < 100);
    CHECK(batch == b.draw_batch(RngStream{1, 2}, 30));
    CHECK(a.draw_batch(RngStream{1, 2}, 100) == a.first(100));
    CHECK_THROWS(a.draw_batch(RngStream{1, 2}, 101));
    CHECK_THROWS_AS(TaskPool(small_secrecy_task(5), {}, 0), ConfigError);

    TaskPool ev(small_secrecy_task(5), {}, 100, streams::kEval);
    CHECK(!(ev.get(0).sample == a.get(0).sample));
}

TEST_CASE("zero learning rate leaves parameters unchanged") {
    TaskPool pool(small_secrecy_task(), {}, 200);
    const auto p = init_params({}, RngStream{3, streams::kParams});
    TrainConfig cfg = desk_train(5);
    cfg.lr = 0.0;
    const auto r = train_task(p, pool, cfg);
    CHECK(r.params == p);
    CHECK(r.log.size() == 5);
}

TEST_CASE("config validation") {
    TrainConfig t;
    CHECK(t.lr == 1e-4);
    CHECK(t.batch_size == 32);
    t.batch_size = 0;
    CHECK_THROWS_AS(t.validate(), ConfigError);
    MetaConfig m;
    CHECK(m.support_tasks == 4);
    CHECK(m.query_tasks == 2);
    CHECK(m.query_samples == 32);
    m.support_tasks = 0;
    CHECK_THROWS_AS(m.validate(), ConfigError);
    CHECK(parse_meta_variant("maml") == MetaVariant::MAML);
    CHECK(parse_gradient_mode(to_string(GradientMode::SecondOrderFD)) == GradientMode::SecondOrderFD);
    CHECK_THROWS_AS(parse_meta_variant("reptile"), ConfigError);
}

TEST_CASE("non-finite training state aborts with a diagnostic") {
    TaskPool pool(small_secrecy_task(), {}, 200);
    auto p = init_params({}, RngStream{3, streams::kParams});
    p.weights(0)[0] = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(train_task(p, pool, desk_train(2)), TrainingError);
}

TEST_CASE("training converges towards the oracle on a three-user secrecy task") {
    TaskPool pool(small_secrecy_task(), {}, 2000);
    TaskPool eval(small_secrecy_task(), {}, 200, streams::kEval);
    const auto p0 = init_params({}, RngStream{5, streams::kParams});
    const auto idx = eval.first(200);
    const double oracle = evaluate_oracle(eval, idx).mean_sum_reward;
    const double before = evaluate_gnn(p0, eval, idx).mean_sum_reward;
    const auto r = train_task(p0, pool, desk_train(2000));
    const double after = evaluate_gnn(r.params, eval, idx).mean_sum_reward;
    MESSAGE("gap before " << gap_percent(oracle, before) << "%, after " << gap_percent(oracle, after) << "%");
    CHECK(after > before);
    CHECK(gap_percent(oracle, after) < 5.0);
}

TEST_CASE("batch loss trends upward in a 50-epoch moving average") {
    TaskSpec task = small_secrecy_task(10);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        TaskPool pool(task, {}, 2000);
        const auto r = train_task(init_params({}, RngStream{seed, streams::kParams}), pool, desk_train(400, seed));
        std::vector<double> loss;
        for (const auto& row : r.log.rows) loss.push_back(row.loss_bps);
        const std::size_t win = 50;
        auto window = [&](std::size_t end) {
            double s = 0.0, s2 = 0.0;
            for (std::size_t e = end - win; e < end; ++e) {
                s += loss[e];
                s2 += loss[e] * loss[e];
            }
            const double mean = s / win;
            const double var = std::max(0.0, s2 / win - mean * mean);
            return std::pair{mean, std::sqrt(var / win)};
        };
        // Consecutive 50-epoch averages, with three standard errors of batch noise allowed.
        std::size_t violations = 0;
        for (std::size_t t = 2 * win; t <= loss.size(); t += win) {
            const auto [now, se_now] = window(t);
            const auto [then, se_then] = window(t - win);
            if (now < then - 3.0 * std::hypot(se_now, se_then)) ++violations;
        }
        INFO("seed " << seed);
        CHECK(violations == 0);
        CHECK(window(loss.size()).first > window(win).first);
    }
}

TEST_CASE("training is bit-reproducible and independent of the thread count") {
    const auto p = init_params({}, RngStream{6, streams::kParams});
    auto run = [&](const char* threads) {
        setenv("BANDALLOC_THREADS", threads, 1);
        TaskPool pool(small_secrecy_task(6), {}, 300);
        return train_task(p, pool, desk_train(20)).params;
    };
    const auto a = run("1");
    const auto b = run("1");
    const auto c = run("3");
    unsetenv("BANDALLOC_THREADS");
    CHECK(a == b);
    CHECK(a == c);
}

TEST_CASE("train log csv") {
    TrainLog log;
    log.rows.push_back({0, 1.5, std::nullopt, 2.0, {}, {}});
    log.rows.push_back({1, 2.5, 3.0, 4.0, {}, {}});
    CHECK(log.to_csv() == "epoch,loss_bps,eval_reward_bps,wall_ms\r\n0,1.5,,2\r\n1,2.5,3,4\r\n");
    CHECK(log.to_csv(false) == "epoch,loss_bps,eval_reward_bps\r\n0,1.5,\r\n1,2.5,3\r\n");
}

TEST_CASE("meta-training with no inner steps is multi-task ascent on the query tasks") {
    MetaConfig cfg = small_meta(1);
    cfg.inner_epochs = 0;
    const TaskSource src = toy_source();
    const auto phi0 = init_params({}, RngStream{8, streams::kParams});
    const auto r = meta_train(phi0, src, cfg);

    // Oracle: average normalized query gradient at phi0.
    GnnParams expected = phi0;
    GnnParams g(phi0.arch());
    const RngStream tasks = RngStream{cfg.seed, streams::kTasks}.derive(0);
    const RngStream batches = RngStream{cfg.seed, streams::kBatches}.derive(0);
    std::vector<std::uint64_t> seeds;
    for (std::size_t q = 0; q < cfg.query_tasks; ++q) {
        TaskPool pool(src.draw(tasks.derive(kQueryStreamOffset + q)), src.reward, cfg.pool_size);
        seeds.push_back(pool.task().seed);
        const auto batch = pool.draw_batch(batches.derive(kQueryStreamOffset + q), cfg.query_samples);
        loss_batch(phi0, pool, batch, &g, 1.0 / (pool.model().budget() * cfg.query_tasks));
    }
    expected.add_scaled(g, cfg.meta_lr);
    CHECK(r.log.rows[0].query_tasks == seeds);
    double gmax = 0.0;
    for (double x : g.flat()) gmax = std::max(gmax, std::abs(x));
    for (std::size_t i = 0; i < expected.size(); ++i) {
        CHECK(std::abs(r.phi.flat()[i] - expected.flat()[i]) <= 1e-12 * std::max(1.0, gmax));
    }
}

TEST_CASE("HML and MAML coincide on a single forced task") {
    TaskSource src = toy_source();
    src.fixed = sample_task(RngStream{9, streams::kTasks}, src.family);
    MetaConfig cfg = small_meta(3);
    cfg.support_tasks = 1;
    cfg.query_tasks = 1;
    const auto phi0 = init_params({}, RngStream{9, streams::kParams});
    const auto hml = meta_train(phi0, src, cfg);
    cfg.variant = MetaVariant::MAML;
    const auto maml = meta_train(phi0, src, cfg);
    CHECK(hml.phi == maml.phi);
    CHECK(!(hml.phi == phi0));
}

TEST_CASE("task reuse pattern per variant") {
    const TaskSource src = toy_source();
    const auto phi0 = init_params({}, RngStream{10, streams::kParams});
    MetaConfig cfg = small_meta(3);
    cfg.inner_epochs = 1;

    cfg.variant = MetaVariant::MAML;
    const auto maml = meta_train(phi0, src, cfg);
    cfg.variant = MetaVariant::HML;
    const auto hml = meta_train(phi0, src, cfg);
    cfg.hml_query_draw = false;
    const auto hml_reuse = meta_train(phi0, src, cfg);

    for (std::size_t m = 0; m < 3; ++m) {
        CHECK(maml.log.rows[m].query_tasks == maml.log.rows[m].support_tasks);
        CHECK(hml_reuse.log.rows[m].query_tasks == hml_reuse.log.rows[m].support_tasks);
        CHECK(hml.log.rows[m].support_tasks == maml.log.rows[m].support_tasks);
        CHECK(hml.log.rows[m].query_tasks.size() == cfg.query_tasks);
        CHECK(hml.log.rows[m].query_tasks != hml.log.rows[m].support_tasks);
    }
    CHECK(maml.log.rows[0].support_tasks != maml.log.rows[1].support_tasks);
    CHECK(hml_reuse.phi == maml.phi);
}

TEST_CASE("second-order mode matches first order when there is no inner loop") {
    const TaskSource src = toy_source();
    const auto phi0 = init_params(FnnArchitecture{{2, 4, 1}, Activation::Tanh}, RngStream{11, streams::kParams});
    MetaConfig cfg = small_meta(1);
    cfg.inner_epochs = 0;
    const auto first = meta_train(phi0, src, cfg);
    cfg.gradient_mode = GradientMode::SecondOrderFD;
    const auto second = meta_train(phi0, src, cfg);
    for (std::size_t i = 0; i < phi0.size(); ++i) {
        const double d1 = first.phi.flat()[i] - phi0.flat()[i];
        const double d2 = second.phi.flat()[i] - phi0.flat()[i];
        CHECK(std::abs(d1 - d2) <= 1e-4 * std::max(std::abs(d1), 1e-6));
    }
}

TEST_CASE("meta-test fine-tuning follows the training procedure") {
    const TaskSpec task = small_secrecy_task(4);
    TaskPool fine(task, {}, 300);
    TaskPool eval(task, {}, 300, streams::kEval);
    const auto phi = init_params({}, RngStream{12, streams::kParams});
    const auto copy = phi;

    const auto zero = meta_test(phi, fine, eval, 0, desk_train(0), 100);
    CHECK(phi == copy);
    REQUIRE(zero.eval_curve.size() == 1);
    CHECK(zero.eval_curve[0] == evaluate_gnn(phi, eval, eval.first(100)).mean_sum_reward);
    CHECK(zero.params == phi);

    const auto few = meta_test(phi, fine, eval, 15, desk_train(15), 100);
    CHECK(few.eval_curve.size() == 16);
    CHECK(few.log.size() == 15);
    const auto trained = train_task(phi, fine, desk_train(15));
    CHECK(few.params == trained.params);
    CHECK(few.final_stats.mean_sum_reward == few.eval_curve.back());
    CHECK_THROWS_AS(meta_test(phi, eval, eval, 1, desk_train(1), 10), ConfigError);
}

TEST_CASE("multi-task transfer baseline") {
    const auto init = init_params({}, RngStream{13, streams::kParams});
    MtlConfig cfg;
    cfg.epochs = 0;
    cfg.seed = 4;
    cfg.pool_size = 200;
    CHECK(baseline_mtl_pretrain(init, toy_source(), cfg) == init);

    TaskSource one = toy_source();
    one.fixed = sample_task(RngStream{13, streams::kTasks}, one.family);
    cfg.epochs = 10;
    cfg.lr = kDeskLearningRate;
    cfg.batch_size = 8;
    const auto mtl = baseline_mtl_pretrain(init, one, cfg);
    TaskPool pool(*one.fixed, one.reward, cfg.pool_size);
    TrainConfig tc = desk_train(10, cfg.seed);
    tc.batch_size = 8;
    tc.pool_size = cfg.pool_size;
    CHECK(mtl == train_task(init, pool, tc).params);
}

TEST_CASE("robustness sweep") {
    TaskPool eval(small_secrecy_task(6), {}, 300, streams::kEval);
    const auto phi = init_params({}, RngStream{14, streams::kParams});
    const auto pts = robustness_sweep(phi, eval, {0.0, 6.0, 12.0}, 300);
    REQUIRE(pts.size() == 3);
    const auto idx = eval.first(300);
    CHECK(pts[0].gnn_reward == doctest::Approx(evaluate_gnn(phi, eval, idx).mean_sum_reward).epsilon(1e-12));
    CHECK(pts[0].oracle_reward == doctest::Approx(evaluate_oracle(eval, idx).mean_sum_reward).epsilon(1e-12));
    CHECK(pts[0].oracle_reward >= pts[0].gnn_reward);
    CHECK(pts[2].oracle_reward <= pts[0].oracle_reward);
    CHECK(pts[2].gnn_reward <= pts[0].gnn_reward);

    TaskSpec plain = small_secrecy_task(6);
    plain.qos.phi = Phi::DataRate;
    TaskPool dr(plain, {}, 10, streams::kEval);
    CHECK_THROWS_AS(robustness_sweep(phi, dr, {0.0}, 5), ConfigError);
}

TEST_CASE("oracle dominates the GNN on every sample") {
    const TaskSpec task = small_secrecy_task(8);
    TaskPool pool(task, {}, 2000);
    TaskPool eval(task, {}, 300, streams::kEval);
    const auto p0 = init_params({}, RngStream{15, streams::kParams});
    const auto trained = train_task(p0, pool, desk_train(300)).params;
    for (const GnnParams* p : {&p0, &trained}) {
        for (std::size_t i = 0; i < 300; ++i) {
            const auto& e = eval.get(i);
            if (e.sched.empty()) continue;
            const double oracle = eval.oracle_sum_reward(i);
            const double gnn = gnn_allocate(*p, e.sched, eval.model(), e.sample).sum_reward;
            // The oracle works on whole blocks; less than one block stays unassigned.
            IterativeOptions opt;
            opt.reuse_marginals = true;
            const auto a = allocate_iterative(e.sched, eval.model(), e.sample, opt);
            double slope = 0.0;
            for (std::size_t k = 0; k < a.w.size(); ++k) {
                slope = std::max(slope, eval.model().derivative(e.sample, e.sched.scheduled[k], a.w[k]));
            }
            CHECK(oracle == a.sum_reward);
            CHECK(gnn <= oracle + slope * kDefaultBlockHz);
        }
    }
}
