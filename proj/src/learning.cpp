#include "bandalloc/learning.hpp"

#include <chrono>
#include <cmath>
#include <memory>
#include <set>

#include "bandalloc/csv.hpp"
#include "bandalloc/errors.hpp"
#include "bandalloc/parallel.hpp"

namespace bandalloc {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

}  // namespace

TaskPool::TaskPool(const TaskSpec& task, const RewardModel::Options& opt, std::size_t size,
                   std::uint64_t stream_id)
    : TaskPool(RewardModel::build(task, opt), size, stream_id) {}

TaskPool::TaskPool(RewardModel model, std::size_t size, std::uint64_t stream_id)
    : model_(std::move(model)), stream_id_(stream_id), entries_(size) {
    if (size == 0) throw ConfigError("task pool must hold at least one sample");
}

void TaskPool::fill(std::size_t i) {
    Entry e;
    e.sample = sample_channel(model_.task, RngStream{model_.task.seed, stream_id_}, i);
    e.sched = schedule_users(model_, e.sample);
    entries_[i] = std::move(e);
}

void TaskPool::prepare(const std::vector<std::size_t>& indices) {
    std::vector<std::size_t> missing;
    std::set<std::size_t> seen;
    for (std::size_t i : indices) {
        if (i >= entries_.size()) throw DomainError("task pool index out of range");
        if (!entries_[i] && seen.insert(i).second) missing.push_back(i);
    }
    parallel_for(missing.size(), [&](std::size_t k) { fill(missing[k]); });
}

const TaskPool::Entry& TaskPool::at(std::size_t i) const {
    if (i >= entries_.size() || !entries_[i]) throw DomainError("task pool entry not prepared");
    return *entries_[i];
}

const TaskPool::Entry& TaskPool::get(std::size_t i) {
    if (i >= entries_.size()) throw DomainError("task pool index out of range");
    if (!entries_[i]) fill(i);
    return *entries_[i];
}

std::vector<std::size_t> TaskPool::draw_batch(const RngStream& stream, std::size_t j) const {
    const std::size_t n = entries_.size();
    if (j == 0 || j > n) throw ConfigError("batch size must be in [1, pool size]");
    Rng rng(stream);
    std::set<std::size_t> chosen;
    for (std::size_t k = n - j; k < n; ++k) {
        const auto t = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(k)));
        if (!chosen.insert(t).second) chosen.insert(k);
    }
    return {chosen.begin(), chosen.end()};
}

std::vector<std::size_t> TaskPool::first(std::size_t n) const {
    if (n > entries_.size()) throw ConfigError("requested more samples than the pool holds");
    std::vector<std::size_t> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = i;
    return out;
}

double TaskPool::oracle_sum_reward(std::size_t i, double block_hz) {
    const Entry& e = get(i);
    if (!e.oracle_sum) {
        IterativeOptions opt;
        opt.block_hz = block_hz;
        opt.reuse_marginals = true;
        entries_[i]->oracle_sum = allocate_iterative(e.sched, model_, e.sample, opt).sum_reward;
    }
    return *entries_[i]->oracle_sum;
}

void TrainConfig::validate() const {
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
    if (pool_size < batch_size) throw ConfigError("pool_size must be at least batch_size");
    if (!(std::isfinite(lr) && lr >= 0.0)) throw ConfigError("lr must be finite and non-negative");
}

std::string_view to_string(MetaVariant v) { return v == MetaVariant::HML ? "hml" : "maml"; }

MetaVariant parse_meta_variant(std::string_view s) {
    if (s == "hml") return MetaVariant::HML;
    if (s == "maml") return MetaVariant::MAML;
    throw ConfigError("unknown meta variant: " + std::string(s));
}

std::string_view to_string(GradientMode g) {
    return g == GradientMode::FirstOrder ? "first_order" : "second_order_fd";
}

GradientMode parse_gradient_mode(std::string_view s) {
    if (s == "first_order") return GradientMode::FirstOrder;
    if (s == "second_order_fd") return GradientMode::SecondOrderFD;
    throw ConfigError("unknown gradient mode: " + std::string(s));
}

void MetaConfig::validate() const {
    if (support_tasks == 0 || query_tasks == 0 || support_samples == 0 || query_samples == 0) {
        throw ConfigError("meta task and sample counts must be positive");
    }
    if (pool_size < std::max(support_samples, query_samples)) {
        throw ConfigError("pool_size must be at least the batch sizes");
    }
    if (!(std::isfinite(inner_lr) && inner_lr >= 0.0 && std::isfinite(meta_lr) && meta_lr >= 0.0)) {
        throw ConfigError("learning rates must be finite and non-negative");
    }
    if (!(fd_step > 0.0)) throw ConfigError("fd_step must be positive");
}

void MtlConfig::validate() const {
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
    if (pool_size < batch_size) throw ConfigError("pool_size must be at least batch_size");
    if (!(std::isfinite(lr) && lr >= 0.0)) throw ConfigError("lr must be finite and non-negative");
}

std::string TrainLog::to_csv(bool include_wall_time) const {
    std::string out;
    std::vector<std::string> header{"epoch", "loss_bps", "eval_reward_bps"};
    if (include_wall_time) header.emplace_back("wall_ms");
    out += csv::row(header);
    for (const auto& r : rows) {
        std::vector<std::string> cells{csv::number(static_cast<std::uint64_t>(r.epoch)),
                                       csv::number(r.loss_bps),
                                       r.eval_reward_bps ? csv::number(*r.eval_reward_bps) : ""};
        if (include_wall_time) cells.push_back(csv::number(r.wall_ms));
        out += csv::row(cells);
    }
    return out;
}

double loss_batch(const GnnParams& params, TaskPool& pool, const std::vector<std::size_t>& batch,
                  GnnParams* grad, double scale) {
    if (batch.empty()) throw DomainError("loss_batch: empty batch");
    pool.prepare(batch);
    const double inv = 1.0 / static_cast<double>(batch.size());
    std::vector<double> values(batch.size());
    std::vector<GnnParams> grads;
    if (grad) grads.assign(batch.size(), GnnParams(params.arch()));
    const TaskPool& cpool = pool;
    parallel_for(batch.size(), [&](std::size_t j) {
        const auto& e = cpool.at(batch[j]);
        values[j] = sample_objective(params, e.sched, cpool.model(), e.sample,
                                     grad ? &grads[j] : nullptr, scale * inv);
    });
    double total = 0.0;
    for (std::size_t j = 0; j < batch.size(); ++j) {
        total += values[j];
        if (grad) grad->add_scaled(grads[j], 1.0);
    }
    return total * inv;
}

double loss_batch(const GnnParams& params, const RewardModel& model,
                  const std::vector<ChannelSample>& samples) {
    if (samples.empty()) throw DomainError("loss_batch: empty batch");
    double total = 0.0;
    for (const auto& s : samples) {
        const ScheduleResult sched = schedule_users(model, s);
        total += sample_objective(params, sched, model, s);
    }
    return total / static_cast<double>(samples.size());
}

EvalStats evaluate_gnn(const GnnParams& params, TaskPool& pool,
                       const std::vector<std::size_t>& indices) {
    EvalStats st;
    st.samples = indices.size();
    if (indices.empty()) return st;
    pool.prepare(indices);
    std::vector<double> sums(indices.size());
    const TaskPool& cpool = pool;
    parallel_for(indices.size(), [&](std::size_t j) {
        const auto& e = cpool.at(indices[j]);
        sums[j] = gnn_allocate(params, e.sched, cpool.model(), e.sample).sum_reward;
    });
    double total = 0.0;
    double scheduled = 0.0;
    for (std::size_t j = 0; j < indices.size(); ++j) {
        total += sums[j];
        scheduled += static_cast<double>(pool.at(indices[j]).sched.size());
    }
    st.mean_sum_reward = total / static_cast<double>(indices.size());
    st.mean_scheduled = scheduled / static_cast<double>(indices.size());
    return st;
}

EvalStats evaluate_oracle(TaskPool& pool, const std::vector<std::size_t>& indices,
                          double block_hz) {
    EvalStats st;
    st.samples = indices.size();
    if (indices.empty()) return st;
    pool.prepare(indices);
    parallel_for(indices.size(), [&](std::size_t j) { pool.oracle_sum_reward(indices[j], block_hz); });
    double total = 0.0;
    double scheduled = 0.0;
    for (std::size_t i : indices) {
        total += pool.oracle_sum_reward(i, block_hz);
        scheduled += static_cast<double>(pool.at(i).sched.size());
    }
    st.mean_sum_reward = total / static_cast<double>(indices.size());
    st.mean_scheduled = scheduled / static_cast<double>(indices.size());
    return st;
}

namespace {

double objective_scale(const TaskPool& pool, bool normalize) {
    return normalize ? 1.0 / pool.model().budget() : 1.0;
}

void check_finite(double loss, const GnnParams& grad, const char* where, std::size_t epoch) {
    if (!std::isfinite(loss) || !grad.all_finite()) {
        throw TrainingError(std::string(where) + ": non-finite " +
                            (std::isfinite(loss) ? "gradient" : "loss") + " at epoch " +
                            std::to_string(epoch));
    }
}

// One ascent step on a batch drawn from `stream`; returns the batch loss.
double ascent_step(GnnParams& theta, TaskPool& pool, const RngStream& stream, std::size_t j,
                   double lr, bool normalize, const char* where, std::size_t epoch) {
    const auto batch = pool.draw_batch(stream, j);
    GnnParams grad(theta.arch());
    const double loss = loss_batch(theta, pool, batch, &grad, objective_scale(pool, normalize));
    check_finite(loss, grad, where, epoch);
    theta.add_scaled(grad, lr);
    if (!theta.all_finite()) {
        throw TrainingError(std::string(where) + ": parameters diverged at epoch " +
                            std::to_string(epoch));
    }
    return loss;
}

}  // namespace

TrainResult train_task(const GnnParams& init, TaskPool& pool, const TrainConfig& cfg,
                       TaskPool* eval_pool, std::size_t eval_samples) {
    cfg.validate();
    if (cfg.batch_size > pool.size()) throw ConfigError("batch_size exceeds the pool size");
    TrainResult out{init, {}};
    const RngStream batches{cfg.batch_seed, streams::kBatches};
    const auto eval_idx = eval_pool ? eval_pool->first(eval_samples) : std::vector<std::size_t>{};
    for (std::size_t e = 0; e < cfg.epochs; ++e) {
        const auto t0 = Clock::now();
        TrainLogRow row;
        row.epoch = e;
        row.loss_bps = ascent_step(out.params, pool, batches.derive(e), cfg.batch_size, cfg.lr,
                                   cfg.normalize_objective, "train_task", e);
        if (eval_pool && !eval_idx.empty() && cfg.eval_every > 0 &&
            ((e + 1) % cfg.eval_every == 0 || e + 1 == cfg.epochs)) {
            row.eval_reward_bps = evaluate_gnn(out.params, *eval_pool, eval_idx).mean_sum_reward;
        }
        row.wall_ms = ms_since(t0);
        out.log.rows.push_back(std::move(row));
    }
    return out;
}

TaskSpec TaskSource::draw(const RngStream& stream) const {
    if (fixed) return *fixed;
    return sample_task(stream, family);
}

namespace {

struct MetaEpochTasks {
    std::vector<std::unique_ptr<TaskPool>> support;
    std::vector<std::unique_ptr<TaskPool>> query;  // empty when reusing support
    bool reuse = false;
};

MetaEpochTasks draw_meta_tasks(const TaskSource& source, const MetaConfig& cfg, std::size_t m) {
    MetaEpochTasks t;
    const RngStream tasks = RngStream{cfg.seed, streams::kTasks}.derive(m);
    for (std::size_t i = 0; i < cfg.support_tasks; ++i) {
        t.support.push_back(std::make_unique<TaskPool>(source.draw(tasks.derive(i)), source.reward,
                                                       cfg.pool_size));
    }
    t.reuse = cfg.variant == MetaVariant::MAML || !cfg.hml_query_draw;
    if (!t.reuse) {
        for (std::size_t q = 0; q < cfg.query_tasks; ++q) {
            t.query.push_back(std::make_unique<TaskPool>(
                source.draw(tasks.derive(kQueryStreamOffset + q)), source.reward, cfg.pool_size));
        }
    }
    return t;
}

// Inner adaptation of support task i from phi.
GnnParams adapt(const GnnParams& phi, TaskPool& pool, const MetaConfig& cfg, std::size_t m,
                std::size_t i) {
    GnnParams theta = phi;
    const RngStream batches = RngStream{cfg.seed, streams::kBatches}.derive(m).derive(i);
    for (std::size_t n = 0; n < cfg.inner_epochs; ++n) {
        ascent_step(theta, pool, batches.derive(n), cfg.support_samples, cfg.inner_lr,
                    cfg.normalize_objective, "meta_train inner loop", m);
    }
    return theta;
}

// Query loss f_i of an adapted theta_i (mean over its query tasks), with
// optional gradient in the training objective's units.
double query_loss(const GnnParams& theta, MetaEpochTasks& t, const MetaConfig& cfg,
                  std::size_t m, std::size_t i, GnnParams* grad, bool normalized) {
    const RngStream batches = RngStream{cfg.seed, streams::kBatches}.derive(m);
    std::vector<std::pair<TaskPool*, std::size_t>> targets;
    if (t.reuse) {
        targets.emplace_back(t.support[i].get(), kQueryStreamOffset + i);
    } else {
        for (std::size_t q = 0; q < t.query.size(); ++q) {
            targets.emplace_back(t.query[q].get(), kQueryStreamOffset + q);
        }
    }
    const double inv = 1.0 / static_cast<double>(targets.size());
    double total = 0.0;
    for (auto [pool, id] : targets) {
        const auto batch = pool->draw_batch(batches.derive(id), cfg.query_samples);
        const double s = objective_scale(*pool, cfg.normalize_objective);
        const double l = loss_batch(theta, *pool, batch, grad, s * inv);
        total += (normalized ? l * s : l) * inv;
    }
    return total;
}

}  // namespace

MetaResult meta_train(const GnnParams& init, const TaskSource& source, const MetaConfig& cfg) {
    cfg.validate();
    MetaResult out{init, {}};
    GnnParams& phi = out.phi;
    const double inv_i = 1.0 / static_cast<double>(cfg.support_tasks);
    for (std::size_t m = 0; m < cfg.meta_epochs; ++m) {
        const auto t0 = Clock::now();
        MetaEpochTasks t = draw_meta_tasks(source, cfg, m);
        TrainLogRow row;
        row.epoch = m;
        for (const auto& p : t.support) row.support_tasks.push_back(p->task().seed);
        if (t.reuse) {
            row.query_tasks = row.support_tasks;
        } else {
            for (const auto& p : t.query) row.query_tasks.push_back(p->task().seed);
        }

        GnnParams meta_grad(phi.arch());
        double meta_loss = 0.0;
        for (std::size_t i = 0; i < cfg.support_tasks; ++i) {
            const GnnParams theta = adapt(phi, *t.support[i], cfg, m, i);
            GnnParams g(phi.arch());
            meta_loss += query_loss(theta, t, cfg, m, i, &g, false) * inv_i;
            meta_grad.add_scaled(g, inv_i);
        }
        if (cfg.gradient_mode == GradientMode::SecondOrderFD) {
            // Coordinate central differences of the normalized meta objective
            // through the inner loop; batches are fixed by the streams.
            auto objective = [&](const GnnParams& p) {
                double f = 0.0;
                for (std::size_t i = 0; i < cfg.support_tasks; ++i) {
                    f += query_loss(adapt(p, *t.support[i], cfg, m, i), t, cfg, m, i, nullptr,
                                    cfg.normalize_objective) *
                         inv_i;
                }
                return f;
            };
            GnnParams probe = phi;
            auto flat = probe.flat();
            auto g = meta_grad.flat();
            for (std::size_t p = 0; p < flat.size(); ++p) {
                const double orig = flat[p];
                flat[p] = orig + cfg.fd_step;
                const double up = objective(probe);
                flat[p] = orig - cfg.fd_step;
                const double down = objective(probe);
                flat[p] = orig;
                g[p] = (up - down) / (2.0 * cfg.fd_step);
            }
        }
        check_finite(meta_loss, meta_grad, "meta_train", m);
        phi.add_scaled(meta_grad, cfg.meta_lr);
        if (!phi.all_finite()) {
            throw TrainingError("meta_train: parameters diverged at meta-epoch " +
                                std::to_string(m));
        }
        row.loss_bps = meta_loss;
        row.wall_ms = ms_since(t0);
        out.log.rows.push_back(std::move(row));
    }
    return out;
}

MetaTestResult meta_test(const GnnParams& phi, TaskPool& fine_tune, TaskPool& eval,
                         std::size_t fine_tune_epochs, const TrainConfig& cfg,
                         std::size_t eval_samples) {
    cfg.validate();
    if (&fine_tune == &eval) throw ConfigError("meta_test: fine-tune and eval pools must differ");
    const auto eval_idx = eval.first(eval_samples);
    MetaTestResult out;
    out.params = phi;
    out.eval_curve.push_back(evaluate_gnn(out.params, eval, eval_idx).mean_sum_reward);
    const RngStream batches{cfg.batch_seed, streams::kBatches};
    for (std::size_t e = 0; e < fine_tune_epochs; ++e) {
        const auto t0 = Clock::now();
        TrainLogRow row;
        row.epoch = e;
        row.loss_bps = ascent_step(out.params, fine_tune, batches.derive(e), cfg.batch_size,
                                   cfg.lr, cfg.normalize_objective, "meta_test", e);
        row.eval_reward_bps = evaluate_gnn(out.params, eval, eval_idx).mean_sum_reward;
        out.eval_curve.push_back(*row.eval_reward_bps);
        row.wall_ms = ms_since(t0);
        out.log.rows.push_back(std::move(row));
    }
    out.final_stats = evaluate_gnn(out.params, eval, eval_idx);
    return out;
}

GnnParams baseline_mtl_pretrain(const GnnParams& init, const TaskSource& source,
                                const MtlConfig& cfg) {
    cfg.validate();
    GnnParams theta = init;
    const RngStream tasks{cfg.seed, streams::kTasks};
    const RngStream batches{cfg.seed, streams::kBatches};
    for (std::size_t e = 0; e < cfg.epochs; ++e) {
        TaskPool pool(source.draw(tasks.derive(e)), source.reward, cfg.pool_size);
        ascent_step(theta, pool, batches.derive(e), cfg.batch_size, cfg.lr,
                    cfg.normalize_objective, "baseline_mtl_pretrain", e);
    }
    return theta;
}

std::vector<RobustnessPoint> robustness_sweep(const GnnParams& phi, TaskPool& eval,
                                              const std::vector<double>& underestimate_db,
                                              std::size_t samples, double block_hz) {
    const RewardModel& model = eval.model();
    if (!model.qos().needs_eavesdropper()) {
        throw ConfigError("robustness sweep needs a secrecy-rate task");
    }
    const auto idx = eval.first(samples);
    eval.prepare(idx);
    const TaskPool& cpool = eval;
    std::vector<RobustnessPoint> out;
    for (double db : underestimate_db) {
        std::vector<double> oracle(samples);
        std::vector<double> gnn(samples);
        parallel_for(samples, [&](std::size_t j) {
            const ChannelSample& truth = cpool.at(idx[j]).sample;
            const ChannelSample seen = underestimate_eavesdropper(truth, db);
            const ScheduleResult sched = schedule_users(model, seen);
            IterativeOptions opt;
            opt.block_hz = block_hz;
            opt.reuse_marginals = true;
            auto w_oracle = allocate_iterative(sched, model, seen, opt).w;
            auto w_gnn = gnn_allocate(phi, sched, model, seen).w;
            oracle[j] = evaluate_allocation(sched, model, truth, std::move(w_oracle)).sum_reward;
            gnn[j] = evaluate_allocation(sched, model, truth, std::move(w_gnn)).sum_reward;
        });
        RobustnessPoint p;
        p.underestimate_db = db;
        for (std::size_t j = 0; j < samples; ++j) {
            p.oracle_reward += oracle[j];
            p.gnn_reward += gnn[j];
        }
        p.oracle_reward /= static_cast<double>(samples);
        p.gnn_reward /= static_cast<double>(samples);
        out.push_back(p);
    }
    return out;
}

}  // namespace bandalloc
