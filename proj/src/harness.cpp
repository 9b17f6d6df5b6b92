#include "bandalloc/harness.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "bandalloc/config.hpp"
#include "bandalloc/csv.hpp"
#include "bandalloc/errors.hpp"
#include "bandalloc/parallel.hpp"

namespace bandalloc {

using Json = nlohmann::ordered_json;

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

void check_keys(const Json& j, std::initializer_list<const char*> keys, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + " must be an object");
    std::set<std::string> known(keys.begin(), keys.end());
    for (const auto& [key, _] : j.items()) {
        if (!known.count(key)) throw ConfigError("unknown key in " + where + ": " + key);
    }
}

template <typename T>
void read(const Json& j, const char* key, T& field) {
    if (j.contains(key)) field = j.at(key).get<T>();
}

}  // namespace

ExperimentConfig::ExperimentConfig() {
    train.epochs = 2000;
    train.lr = kDeskLearningRate;
    meta.inner_lr = kDeskLearningRate;
    meta.meta_lr = kDeskLearningRate;
}

TaskFamily ExperimentConfig::task_family() const {
    if (family == "desk_toy") return TaskFamily::desk_toy();
    if (family == "support_query") return TaskFamily::support_query();
    throw ConfigError("unknown task family: " + family);
}

void ExperimentConfig::validate() const {
    task.validate();
    arch.validate();
    train.validate();
    meta.validate();
    reward.short_block.validate();
    reward.latency.validate();
    (void)task_family();
    if (!(block_hz > 0.0)) throw ConfigError("block_hz must be positive");
    if (samples == 0 || eval_samples == 0) throw ConfigError("sample counts must be positive");
    if (reward.n_mc == 0) throw ConfigError("n_mc must be positive");
    if (bench_users == 0 || bench_samples == 0) throw ConfigError("bench sizes must be positive");
    static const std::set<std::string> methods_ok{"hml", "maml", "mtl_transfer", "random_init",
                                                  "gnn"};
    for (const auto& m : methods) {
        if (!methods_ok.count(m.method)) throw ConfigError("unknown method: " + m.method);
    }
    for (int u : users_sweep) {
        if (u <= 0) throw ConfigError("users_sweep entries must be positive");
    }
}

std::string config_to_json_text(const ExperimentConfig& c) {
    Json j;
    j["experiment_id"] = c.experiment_id;
    j["seed"] = c.seed;
    j["task"] = task_to_json(c.task);
    j["reward"] = {{"ts", c.reward.short_block.ts},
                   {"epsilon", c.reward.short_block.epsilon},
                   {"delta", c.reward.short_block.delta},
                   {"theta", c.reward.latency.theta},
                   {"tc", c.reward.latency.tc},
                   {"n_mc", c.reward.n_mc}};
    j["block_hz"] = c.block_hz;
    j["samples"] = c.samples;
    j["eval_samples"] = c.eval_samples;
    j["oracle_reuse_marginals"] = c.oracle_reuse_marginals;
    j["arch"] = {{"layer_sizes", c.arch.layer_sizes},
                 {"activation", std::string(to_string(c.arch.hidden))}};
    j["train"] = {{"epochs", c.train.epochs},
                  {"batch_size", c.train.batch_size},
                  {"lr", c.train.lr},
                  {"normalize_objective", c.train.normalize_objective},
                  {"pool_size", c.train.pool_size},
                  {"eval_every", c.train.eval_every}};
    j["meta"] = {{"meta_epochs", c.meta.meta_epochs},
                 {"inner_epochs", c.meta.inner_epochs},
                 {"support_tasks", c.meta.support_tasks},
                 {"query_tasks", c.meta.query_tasks},
                 {"support_samples", c.meta.support_samples},
                 {"query_samples", c.meta.query_samples},
                 {"inner_lr", c.meta.inner_lr},
                 {"meta_lr", c.meta.meta_lr},
                 {"normalize_objective", c.meta.normalize_objective},
                 {"variant", std::string(to_string(c.meta.variant))},
                 {"gradient_mode", std::string(to_string(c.meta.gradient_mode))},
                 {"fd_step", c.meta.fd_step},
                 {"pool_size", c.meta.pool_size},
                 {"hml_query_draw", c.meta.hml_query_draw}};
    j["family"] = c.family;
    j["mtl_epochs"] = c.mtl_epochs;
    j["fine_tune_epochs"] = c.fine_tune_epochs;
    j["methods"] = Json::array();
    for (const auto& m : c.methods) {
        j["methods"].push_back({{"method", m.method}, {"checkpoint", m.checkpoint}});
    }
    j["users_sweep"] = c.users_sweep;
    j["underestimate_db"] = c.underestimate_db;
    j["checkpoint"] = c.checkpoint;
    j["bench_users"] = c.bench_users;
    j["bench_samples"] = c.bench_samples;
    return j.dump(2) + "\n";
}

ExperimentConfig config_from_json_text(std::string_view text) {
    Json j;
    try {
        j = Json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("config: ") + e.what());
    }
    ExperimentConfig c;
    check_keys(j,
               {"experiment_id", "seed", "task", "reward", "block_hz", "samples", "eval_samples",
                "oracle_reuse_marginals", "arch", "train", "meta", "family", "mtl_epochs",
                "fine_tune_epochs", "methods", "users_sweep", "underestimate_db", "checkpoint",
                "bench_users", "bench_samples"},
               "config");
    try {
        read(j, "experiment_id", c.experiment_id);
        read(j, "seed", c.seed);
        if (j.contains("task")) c.task = task_from_json(j.at("task"));
        if (j.contains("reward")) {
            const auto& r = j.at("reward");
            check_keys(r, {"ts", "epsilon", "delta", "theta", "tc", "n_mc"}, "reward");
            read(r, "ts", c.reward.short_block.ts);
            read(r, "epsilon", c.reward.short_block.epsilon);
            read(r, "delta", c.reward.short_block.delta);
            read(r, "theta", c.reward.latency.theta);
            read(r, "tc", c.reward.latency.tc);
            read(r, "n_mc", c.reward.n_mc);
        }
        read(j, "block_hz", c.block_hz);
        read(j, "samples", c.samples);
        read(j, "eval_samples", c.eval_samples);
        read(j, "oracle_reuse_marginals", c.oracle_reuse_marginals);
        if (j.contains("arch")) {
            const auto& a = j.at("arch");
            check_keys(a, {"layer_sizes", "activation"}, "arch");
            read(a, "layer_sizes", c.arch.layer_sizes);
            if (a.contains("activation")) {
                c.arch.hidden = parse_activation(a.at("activation").get<std::string>());
            }
        }
        if (j.contains("train")) {
            const auto& t = j.at("train");
            check_keys(t,
                       {"epochs", "batch_size", "lr", "normalize_objective", "pool_size",
                        "eval_every"},
                       "train");
            read(t, "epochs", c.train.epochs);
            read(t, "batch_size", c.train.batch_size);
            read(t, "lr", c.train.lr);
            read(t, "normalize_objective", c.train.normalize_objective);
            read(t, "pool_size", c.train.pool_size);
            read(t, "eval_every", c.train.eval_every);
        }
        if (j.contains("meta")) {
            const auto& m = j.at("meta");
            check_keys(m,
                       {"meta_epochs", "inner_epochs", "support_tasks", "query_tasks",
                        "support_samples", "query_samples", "inner_lr", "meta_lr",
                        "normalize_objective", "variant", "gradient_mode", "fd_step",
                        "pool_size", "hml_query_draw"},
                       "meta");
            read(m, "meta_epochs", c.meta.meta_epochs);
            read(m, "inner_epochs", c.meta.inner_epochs);
            read(m, "support_tasks", c.meta.support_tasks);
            read(m, "query_tasks", c.meta.query_tasks);
            read(m, "support_samples", c.meta.support_samples);
            read(m, "query_samples", c.meta.query_samples);
            read(m, "inner_lr", c.meta.inner_lr);
            read(m, "meta_lr", c.meta.meta_lr);
            read(m, "normalize_objective", c.meta.normalize_objective);
            if (m.contains("variant")) {
                c.meta.variant = parse_meta_variant(m.at("variant").get<std::string>());
            }
            if (m.contains("gradient_mode")) {
                c.meta.gradient_mode = parse_gradient_mode(m.at("gradient_mode").get<std::string>());
            }
            read(m, "fd_step", c.meta.fd_step);
            read(m, "pool_size", c.meta.pool_size);
            read(m, "hml_query_draw", c.meta.hml_query_draw);
        }
        read(j, "family", c.family);
        read(j, "mtl_epochs", c.mtl_epochs);
        read(j, "fine_tune_epochs", c.fine_tune_epochs);
        if (j.contains("methods")) {
            for (const auto& m : j.at("methods")) {
                check_keys(m, {"method", "checkpoint"}, "methods entry");
                MethodSpec s;
                read(m, "method", s.method);
                read(m, "checkpoint", s.checkpoint);
                c.methods.push_back(s);
            }
        }
        read(j, "users_sweep", c.users_sweep);
        read(j, "underestimate_db", c.underestimate_db);
        read(j, "checkpoint", c.checkpoint);
        read(j, "bench_users", c.bench_users);
        read(j, "bench_samples", c.bench_samples);
        c.validate();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    } catch (const ValidationError& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FileError("cannot read config: " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return config_from_json_text(ss.str());
}

double gap_percent(double oracle, double method) {
    if (oracle == 0.0) return 0.0;
    return 100.0 * (oracle - method) / oracle;
}

std::string results_csv(const std::vector<ResultRow>& rows, bool include_wall_time) {
    std::vector<std::string> header{"experiment_id", "task", "method", "setting",
                                    "epoch", "mean_sum_reward_bps", "gap_pct",
                                    "objective_evals", "fnn_multiplies", "scheduling_ops"};
    if (include_wall_time) header.emplace_back("wall_ms");
    std::string out = csv::row(header);
    for (const auto& r : rows) {
        std::vector<std::string> cells{
            r.experiment_id,
            r.task,
            r.method,
            r.setting ? csv::number(*r.setting) : "",
            csv::number(static_cast<std::uint64_t>(r.epoch)),
            csv::number(r.mean_sum_reward_bps),
            r.gap_pct ? csv::number(*r.gap_pct) : "",
            csv::number(r.ops.objective_evals),
            csv::number(r.ops.fnn_multiplies),
            csv::number(r.ops.scheduling_ops)};
        if (include_wall_time) cells.push_back(csv::number(r.wall_ms));
        out += csv::row(cells);
    }
    return out;
}

std::string strip_wall_time(std::string_view text) {
    const auto rows = csv::parse(text);
    std::string out;
    for (const auto& r : rows) {
        std::vector<std::string> cells;
        const bool has_wall = !rows.empty() && !rows.front().empty() &&
                              rows.front().back() == "wall_ms";
        for (std::size_t i = 0; i < r.size(); ++i) {
            if (has_wall && i + 1 == r.size()) break;
            cells.push_back(r[i]);
        }
        out += csv::row(cells);
    }
    return out;
}

std::string describe_task(const TaskSpec& t) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%s U=%d W=%gHz r=%gbps seed=%llu", to_string(t.qos).c_str(),
                  t.num_users, t.reserved_bandwidth_hz, t.rate_threshold_bps,
                  static_cast<unsigned long long>(t.seed));
    return buf;
}

GnnParams read_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FileError("cannot read checkpoint: " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return load_params(ss.str());
}

namespace {

GnnParams initial_params(const ExperimentConfig& cfg, const std::string& checkpoint) {
    if (!checkpoint.empty()) return read_checkpoint(checkpoint);
    return init_params(cfg.arch, RngStream{cfg.seed, streams::kParams});
}

TrainConfig train_config(const ExperimentConfig& cfg) {
    TrainConfig t = cfg.train;
    t.batch_seed = cfg.seed;
    return t;
}

MetaConfig meta_config(const ExperimentConfig& cfg) {
    MetaConfig m = cfg.meta;
    m.seed = cfg.seed;
    return m;
}

TaskSource task_source(const ExperimentConfig& cfg) {
    TaskSource s;
    s.family = cfg.task_family();
    s.reward = cfg.reward;
    return s;
}

ResultRow make_row(const ExperimentConfig& cfg, const TaskSpec& task, std::string method,
                   std::size_t epoch, double reward, std::optional<double> oracle) {
    ResultRow r;
    r.experiment_id = cfg.experiment_id;
    r.task = describe_task(task);
    r.method = std::move(method);
    r.epoch = epoch;
    r.mean_sum_reward_bps = reward;
    if (oracle) r.gap_pct = gap_percent(*oracle, reward);
    return r;
}

}  // namespace

CommandOutput cmd_oracle(const ExperimentConfig& cfg) {
    cfg.validate();
    CommandOutput out;
    const auto t0 = Clock::now();
    const RewardModel model = RewardModel::build(cfg.task, cfg.reward);
    const RngStream stream{cfg.task.seed, streams::kChannels};
    std::vector<Allocation> allocs(cfg.samples);
    std::vector<ScheduleResult> scheds(cfg.samples);
    std::vector<OpCounters> ops(cfg.samples);
    parallel_for(cfg.samples, [&](std::size_t i) {
        const ChannelSample s = sample_channel(cfg.task, stream, i);
        scheds[i] = schedule_users(model, s, {}, &ops[i]);
        IterativeOptions opt;
        opt.block_hz = cfg.block_hz;
        opt.reuse_marginals = cfg.oracle_reuse_marginals;
        allocs[i] = allocate_iterative(scheds[i], model, s, opt, &ops[i]);
    });
    std::string rows = csv::row({"sample_index", "user_index", "w_min_hz", "w_hz", "reward_bps"});
    double total = 0.0;
    OpCounters sum_ops;
    for (std::size_t i = 0; i < cfg.samples; ++i) {
        for (std::size_t k = 0; k < allocs[i].w.size(); ++k) {
            rows += csv::row({csv::number(static_cast<std::uint64_t>(i)),
                              csv::number(static_cast<std::uint64_t>(scheds[i].scheduled[k])),
                              csv::number(scheds[i].w_min[k]), csv::number(allocs[i].w[k]),
                              csv::number(allocs[i].rewards[k])});
        }
        total += allocs[i].sum_reward;
        sum_ops.objective_evals += ops[i].objective_evals;
        sum_ops.scheduling_ops += ops[i].scheduling_ops;
    }
    const double mean = total / static_cast<double>(cfg.samples);
    ResultRow r = make_row(cfg, cfg.task, "oracle", 0, mean, mean);
    r.ops = sum_ops;
    r.wall_ms = ms_since(t0);
    out.results.push_back(r);
    out.files["allocations.csv"] = rows;
    return out;
}

CommandOutput cmd_train(const ExperimentConfig& cfg) {
    cfg.validate();
    CommandOutput out;
    const auto t0 = Clock::now();
    const GnnParams init = initial_params(cfg, cfg.checkpoint);
    const TrainConfig tc = train_config(cfg);
    TaskPool pool(cfg.task, cfg.reward, tc.pool_size, streams::kChannels);
    TaskPool eval(pool.model(), cfg.eval_samples, streams::kEval);
    TrainResult res = train_task(init, pool, tc, &eval, cfg.eval_samples);
    const auto idx = eval.first(cfg.eval_samples);
    const double oracle = evaluate_oracle(eval, idx, cfg.block_hz).mean_sum_reward;
    const EvalStats gnn = evaluate_gnn(res.params, eval, idx);
    ResultRow o = make_row(cfg, cfg.task, "oracle", tc.epochs, oracle, oracle);
    ResultRow g = make_row(cfg, cfg.task, "gnn", tc.epochs, gnn.mean_sum_reward, oracle);
    g.ops.fnn_multiplies = static_cast<std::uint64_t>(
        gnn.mean_scheduled * static_cast<double>(fnn_multiplies(cfg.arch.layer_sizes) + 2));
    g.wall_ms = ms_since(t0);
    out.results = {o, g};
    out.log = std::move(res.log);
    out.params = std::move(res.params);
    return out;
}

CommandOutput cmd_meta_train(const ExperimentConfig& cfg) {
    cfg.validate();
    CommandOutput out;
    const auto t0 = Clock::now();
    const GnnParams init = initial_params(cfg, cfg.checkpoint);
    const MetaConfig mc = meta_config(cfg);
    MetaResult res = meta_train(init, task_source(cfg), mc);
    std::string tasks = csv::row({"epoch", "role", "task_seed"});
    for (const auto& row : res.log.rows) {
        for (auto s : row.support_tasks) {
            tasks += csv::row({csv::number(static_cast<std::uint64_t>(row.epoch)), "support",
                               csv::number(s)});
        }
        for (auto s : row.query_tasks) {
            tasks += csv::row({csv::number(static_cast<std::uint64_t>(row.epoch)), "query",
                               csv::number(s)});
        }
    }
    TaskPool eval(cfg.task, cfg.reward, cfg.eval_samples, streams::kEval);
    const auto idx = eval.first(cfg.eval_samples);
    const double oracle = evaluate_oracle(eval, idx, cfg.block_hz).mean_sum_reward;
    const double zero_shot = evaluate_gnn(res.phi, eval, idx).mean_sum_reward;
    out.results.push_back(make_row(cfg, cfg.task, "oracle", 0, oracle, oracle));
    ResultRow r = make_row(cfg, cfg.task, std::string(to_string(mc.variant)), 0, zero_shot, oracle);
    r.wall_ms = ms_since(t0);
    out.results.push_back(r);
    out.files["tasks.csv"] = tasks;
    out.log = std::move(res.log);
    out.params = std::move(res.phi);
    return out;
}

CommandOutput cmd_meta_test(const ExperimentConfig& cfg) {
    cfg.validate();
    CommandOutput out;
    std::vector<MethodSpec> methods = cfg.methods;
    if (methods.empty()) methods.push_back({"random_init", ""});
    std::vector<GnnParams> inits;
    for (const auto& m : methods) inits.push_back(initial_params(cfg, m.checkpoint));

    TaskPool fine(cfg.task, cfg.reward, cfg.train.pool_size, streams::kChannels);
    TaskPool eval(fine.model(), cfg.eval_samples, streams::kEval);
    const auto idx = eval.first(cfg.eval_samples);
    const double oracle = evaluate_oracle(eval, idx, cfg.block_hz).mean_sum_reward;
    out.results.push_back(make_row(cfg, cfg.task, "oracle", 0, oracle, oracle));
    const TrainConfig tc = train_config(cfg);
    for (std::size_t i = 0; i < methods.size(); ++i) {
        MetaTestResult res =
            meta_test(inits[i], fine, eval, cfg.fine_tune_epochs, tc, cfg.eval_samples);
        for (std::size_t e = 0; e < res.eval_curve.size(); ++e) {
            ResultRow r = make_row(cfg, cfg.task, methods[i].method, e, res.eval_curve[e], oracle);
            r.wall_ms = e == 0 ? 0.0 : res.log.rows[e - 1].wall_ms;
            if (*r.gap_pct < -0.5) {
                out.warnings.push_back(methods[i].method + " epoch " + std::to_string(e) +
                                       " beats the oracle by more than 0.5%");
            }
            out.results.push_back(r);
        }
        if (i + 1 == methods.size()) {
            out.log = res.log;
            out.params = res.params;
        }
    }
    for (int users : cfg.users_sweep) {
        TaskSpec t = cfg.task;
        t.num_users = users;
        TaskPool sweep(t, cfg.reward, cfg.eval_samples, streams::kEval);
        const double o = evaluate_oracle(sweep, idx, cfg.block_hz).mean_sum_reward;
        ResultRow orow = make_row(cfg, t, "oracle", 0, o, o);
        orow.setting = users;
        out.results.push_back(orow);
        for (std::size_t i = 0; i < methods.size(); ++i) {
            const double g = evaluate_gnn(inits[i], sweep, idx).mean_sum_reward;
            ResultRow r = make_row(cfg, t, methods[i].method, 0, g, o);
            r.setting = users;
            out.results.push_back(r);
        }
    }
    return out;
}

CommandOutput cmd_bench(const ExperimentConfig& cfg) {
    cfg.validate();
    CommandOutput out;
    TaskSpec task = cfg.task;
    // Draw from a larger population so that bench_users users get scheduled.
    task.num_users = std::max<int>(task.num_users, static_cast<int>(2 * cfg.bench_users));
    const RewardModel model = RewardModel::build(task, cfg.reward);
    const GnnParams params = initial_params(cfg, cfg.checkpoint);
    const RngStream stream{task.seed, streams::kEval};
    const std::uint64_t m_fnn = fnn_multiplies(cfg.arch.layer_sizes);

    OpCounters oracle_ops;
    OpCounters gnn_ops;
    double oracle_ms = 0.0;
    double gnn_ms = 0.0;
    double oracle_sum = 0.0;
    double gnn_sum = 0.0;
    double analytic_gnn = 0.0;
    double analytic_iter = 0.0;
    double blocks_total = 0.0;
    std::size_t done = 0;
    for (std::uint64_t i = 0; done < cfg.bench_samples; ++i) {
        if (i > 100 * cfg.bench_samples) {
            throw ConfigError("bench: could not schedule bench_users users");
        }
        const ChannelSample s = sample_channel(task, stream, i);
        const ScheduleResult full = schedule_users(model, s);
        if (full.size() < cfg.bench_users) continue;
        std::vector<std::size_t> users(full.scheduled.begin(),
                                       full.scheduled.begin() + cfg.bench_users);
        std::vector<double> w_min(full.w_min.begin(), full.w_min.begin() + cfg.bench_users);
        const ScheduleResult sched = make_schedule(users, w_min, full.budget_hz);

        IterativeOptions opt;
        opt.block_hz = cfg.block_hz;
        auto t0 = Clock::now();
        const Allocation a = allocate_iterative(sched, model, s, opt, &oracle_ops);
        oracle_ms += ms_since(t0);
        t0 = Clock::now();
        const Allocation g = gnn_allocate(params, sched, model, s, &gnn_ops);
        gnn_ms += ms_since(t0);
        oracle_sum += a.sum_reward;
        gnn_sum += g.sum_reward;
        analytic_gnn += estimate_complexity(ComplexityKind::Gnn, sched.size(), sched.surplus_hz(),
                                            cfg.block_hz, cfg.arch.layer_sizes);
        blocks_total += static_cast<double>(sched.size()) *
                        std::floor(sched.surplus_hz() / cfg.block_hz);
        ++done;
    }
    const double n = static_cast<double>(done);
    // Omega: objective evaluations per (user, block) actually spent.
    const double omega = static_cast<double>(oracle_ops.objective_evals) / blocks_total;
    analytic_iter = blocks_total * omega;

    ResultRow o = make_row(cfg, task, "oracle", 0, oracle_sum / n, oracle_sum / n);
    o.setting = static_cast<double>(cfg.bench_users);
    o.ops = oracle_ops;
    o.wall_ms = oracle_ms / n;
    ResultRow g = make_row(cfg, task, "gnn", 0, gnn_sum / n, oracle_sum / n);
    g.setting = static_cast<double>(cfg.bench_users);
    g.ops = gnn_ops;
    g.wall_ms = gnn_ms / n;
    out.results = {o, g};

    std::string bench = csv::row({"metric", "value"});
    auto put = [&](const char* k, double v) { bench += csv::row({k, csv::number(v)}); };
    put("users", static_cast<double>(cfg.bench_users));
    put("samples", n);
    put("fnn_multiplies_per_user", static_cast<double>(m_fnn));
    put("analytic_gnn_ops", analytic_gnn / n);
    put("measured_gnn_multiplies", static_cast<double>(gnn_ops.fnn_multiplies) / n);
    put("omega", omega);
    put("analytic_iterative_evals", analytic_iter / n);
    put("measured_iterative_evals", static_cast<double>(oracle_ops.objective_evals) / n);
    put("oracle_wall_ms", oracle_ms / n);
    put("gnn_wall_ms", gnn_ms / n);
    put("wall_ratio", gnn_ms > 0.0 ? oracle_ms / gnn_ms : 0.0);
    out.files["bench.csv"] = bench;
    return out;
}

CommandOutput cmd_robustness(const ExperimentConfig& cfg) {
    cfg.validate();
    if (!cfg.task.qos.needs_eavesdropper()) {
        throw ConfigError("robustness needs a secrecy-rate task");
    }
    CommandOutput out;
    GnnParams phi = initial_params(cfg, cfg.checkpoint);
    if (cfg.checkpoint.empty()) {
        TaskPool pool(cfg.task, cfg.reward, cfg.train.pool_size, streams::kChannels);
        TrainResult tr = train_task(phi, pool, train_config(cfg));
        phi = std::move(tr.params);
        out.log = std::move(tr.log);
    }
    TaskPool eval(cfg.task, cfg.reward, cfg.eval_samples, streams::kEval);
    const auto points =
        robustness_sweep(phi, eval, cfg.underestimate_db, cfg.eval_samples, cfg.block_hz);
    for (const auto& p : points) {
        ResultRow o = make_row(cfg, cfg.task, "oracle", 0, p.oracle_reward, p.oracle_reward);
        o.setting = p.underestimate_db;
        ResultRow g = make_row(cfg, cfg.task, "gnn", 0, p.gnn_reward, p.oracle_reward);
        g.setting = p.underestimate_db;
        out.results.push_back(o);
        out.results.push_back(g);
    }
    out.params = std::move(phi);
    return out;
}

const std::vector<std::string>& command_names() {
    static const std::vector<std::string> names{"oracle",    "train", "meta-train",
                                                "meta-test", "bench", "robustness"};
    return names;
}

CommandOutput run_command(std::string_view name, const ExperimentConfig& cfg) {
    if (name == "oracle") return cmd_oracle(cfg);
    if (name == "train") return cmd_train(cfg);
    if (name == "meta-train") return cmd_meta_train(cfg);
    if (name == "meta-test") return cmd_meta_test(cfg);
    if (name == "bench") return cmd_bench(cfg);
    if (name == "robustness") return cmd_robustness(cfg);
    throw ConfigError("unknown command: " + std::string(name));
}

namespace {

void write_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw FileError("cannot write " + path.string());
    f << text;
    if (!f) throw FileError("failed writing " + path.string());
}

}  // namespace

void write_outputs(const CommandOutput& out, const ExperimentConfig& cfg,
                   const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw FileError("cannot create " + dir.string() + ": " + ec.message());
    write_file(dir / "results.csv", results_csv(out.results));
    write_file(dir / "config.echo.json", config_to_json_text(cfg));
    if (out.log) write_file(dir / "log.csv", out.log->to_csv());
    if (out.params) write_file(dir / "params.json", save_params(*out.params));
    for (const auto& [name, text] : out.files) write_file(dir / name, text);
}

}  // namespace bandalloc
