#include "bandalloc/channel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "bandalloc/errors.hpp"

namespace bandalloc {

const std::vector<QosKind>& all_qos_kinds() {
    static const std::vector<QosKind> kinds = {
        {Phi::DataRate, Xi::LongBlocklength},       {Phi::DataRate, Xi::ShortBlocklength},
        {Phi::EffectiveCapacity, Xi::LongBlocklength}, {Phi::EffectiveCapacity, Xi::ShortBlocklength},
        {Phi::SecrecyRate, Xi::LongBlocklength},    {Phi::SecrecyRate, Xi::ShortBlocklength},
    };
    return kinds;
}

std::string_view to_string(Phi phi) {
    switch (phi) {
        case Phi::DataRate: return "data_rate";
        case Phi::EffectiveCapacity: return "effective_capacity";
        case Phi::SecrecyRate: return "secrecy_rate";
    }
    return "?";
}

std::string_view to_string(Xi xi) {
    return xi == Xi::LongBlocklength ? "long" : "short";
}

std::string to_string(const QosKind& q) {
    return std::string(to_string(q.phi)) + "/" + std::string(to_string(q.xi));
}

Phi parse_phi(std::string_view s) {
    if (s == "data_rate" || s == "D") return Phi::DataRate;
    if (s == "effective_capacity" || s == "E") return Phi::EffectiveCapacity;
    if (s == "secrecy_rate" || s == "S") return Phi::SecrecyRate;
    throw ConfigError("unknown qos.phi: " + std::string(s));
}

Xi parse_xi(std::string_view s) {
    if (s == "long" || s == "I") return Xi::LongBlocklength;
    if (s == "short" || s == "F") return Xi::ShortBlocklength;
    throw ConfigError("unknown qos.xi: " + std::string(s));
}

QosKind parse_qos(std::string_view s) {
    const auto slash = s.find('/');
    if (slash == std::string_view::npos) throw ConfigError("qos must be '<phi>/<xi>'");
    return {parse_phi(s.substr(0, slash)), parse_xi(s.substr(slash + 1))};
}

std::string_view to_string(FadingKind k) {
    switch (k) {
        case FadingKind::Rice: return "rice";
        case FadingKind::Nakagami: return "nakagami";
        case FadingKind::Rayleigh: return "rayleigh";
    }
    return "?";
}

FadingKind parse_fading(std::string_view s) {
    if (s == "rice") return FadingKind::Rice;
    if (s == "nakagami") return FadingKind::Nakagami;
    if (s == "rayleigh") return FadingKind::Rayleigh;
    throw ConfigError("unknown small_scale.kind: " + std::string(s));
}

SmallScaleModel SmallScaleModel::rice(double s, double sigma) {
    return {FadingKind::Rice, s, 1.0, sigma};
}

SmallScaleModel SmallScaleModel::nakagami(double m, double sigma) {
    return {FadingKind::Nakagami, 0.0, m, sigma};
}

SmallScaleModel SmallScaleModel::rayleigh(double sigma) {
    return {FadingKind::Rayleigh, 0.0, 1.0, sigma};
}

void SmallScaleModel::validate() const {
    if (!(sigma > 0.0) || !std::isfinite(sigma)) throw ConfigError("small_scale.sigma must be > 0");
    if (kind == FadingKind::Rice && !(s > 0.0)) throw ConfigError("small_scale.s must be > 0");
    if (kind == FadingKind::Nakagami && !(m >= 0.5)) throw ConfigError("small_scale.m must be >= 0.5");
}

double SmallScaleModel::sample(Rng& rng) const {
    switch (kind) {
        case FadingKind::Rice: {
            const double re = rng.normal(s, sigma);
            const double im = rng.normal(0.0, sigma);
            return std::hypot(re, im);
        }
        case FadingKind::Nakagami: {
            // z^2 ~ Gamma(m, Omega / m) with Omega = 2 sigma^2.
            const double omega = 2.0 * sigma * sigma;
            return std::sqrt(rng.gamma(m) * omega / m);
        }
        case FadingKind::Rayleigh: {
            const double re = rng.normal(0.0, sigma);
            const double im = rng.normal(0.0, sigma);
            return std::hypot(re, im);
        }
    }
    return 0.0;
}

int TaskSpec::qci_of(int user) const {
    if (qci.empty()) return 1;
    return qci.at(static_cast<std::size_t>(user));
}

void TaskSpec::validate() const {
    if (num_users < 1) throw ConfigError("num_users must be >= 1");
    if (!(pathloss_exponent >= 2.0)) throw ConfigError("pathloss_exponent must be >= 2");
    if (!(shadowing_sigma_db >= 0.0)) throw ConfigError("shadowing_sigma_db must be >= 0");
    if (!(rate_threshold_bps > 0.0)) throw ConfigError("rate_threshold_bps must be > 0");
    if (!(reserved_bandwidth_hz > 0.0)) throw ConfigError("reserved_bandwidth_hz must be > 0");
    if (!(area_half_width > 0.0)) throw ConfigError("area_half_width must be > 0");
    if (!qci.empty()) {
        if (qci.size() != static_cast<std::size_t>(num_users)) {
            throw ConfigError("qci must list one value per user");
        }
        for (int q : qci) {
            if (q < 1) throw ConfigError("qci values must be positive");
        }
    }
    small_scale.validate();
}

void TaskOverrides::apply(TaskSpec& t) const {
    if (num_users) t.num_users = *num_users;
    if (pathloss_exponent) t.pathloss_exponent = *pathloss_exponent;
    if (shadowing_sigma_db) t.shadowing_sigma_db = *shadowing_sigma_db;
    if (small_scale) t.small_scale = *small_scale;
    if (qos) t.qos = *qos;
    if (rate_threshold_bps) t.rate_threshold_bps = *rate_threshold_bps;
    if (reserved_bandwidth_hz) t.reserved_bandwidth_hz = *reserved_bandwidth_hz;
    if (area_half_width) t.area_half_width = *area_half_width;
    if (seed) t.seed = *seed;
}

TaskFamily TaskFamily::support_query() {
    TaskFamily f;
    for (int u = 10; u <= 30; ++u) f.num_users.push_back(u);
    f.pathloss_exponents = {2.0, 3.0};
    f.shadowing_sigmas_db = {3.0, 4.0, 5.0};
    f.rice_s = {1, 2, 3, 4, 5};
    f.nakagami_m = {2, 3, 4, 5, 6};
    for (int r = 1; r <= 10; ++r) f.rate_thresholds_bps.push_back(r * 1e6);
    for (int w = 10; w <= 100; ++w) f.reserved_bandwidths_hz.push_back(w * 1e6);
    f.qos = {Phi::SecrecyRate, Xi::LongBlocklength};
    return f;
}

TaskFamily TaskFamily::desk_toy() {
    TaskFamily f = support_query();
    f.num_users = {3, 4, 5, 6};
    f.rate_thresholds_bps = {1e6, 2e6, 3e6};
    f.reserved_bandwidths_hz = {5e6, 10e6};
    return f;
}

TaskSpec fine_tune_eval_task() {
    TaskSpec t;
    t.num_users = 50;
    t.pathloss_exponent = 4.0;
    t.shadowing_sigma_db = 8.0;
    t.small_scale = SmallScaleModel::rayleigh();
    t.qos = {Phi::SecrecyRate, Xi::LongBlocklength};
    t.rate_threshold_bps = 10e6;
    t.reserved_bandwidth_hz = 100e6;
    return t;
}

namespace {

template <typename T>
const T& pick(Rng& rng, const std::vector<T>& values) {
    if (values.empty()) throw ConfigError("task family has an empty candidate set");
    return values[static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<std::int64_t>(values.size()) - 1))];
}

}  // namespace

TaskSpec sample_task(const RngStream& stream, const TaskFamily& family,
                     const TaskOverrides& overrides) {
    Rng rng(stream);
    TaskSpec t;
    t.num_users = pick(rng, family.num_users);
    t.pathloss_exponent = pick(rng, family.pathloss_exponents);
    t.shadowing_sigma_db = pick(rng, family.shadowing_sigmas_db);
    const bool use_rice = family.nakagami_m.empty() ||
                          (!family.rice_s.empty() && rng.uniform_int(0, 1) == 0);
    if (use_rice) {
        t.small_scale = SmallScaleModel::rice(pick(rng, family.rice_s));
    } else {
        t.small_scale = SmallScaleModel::nakagami(pick(rng, family.nakagami_m));
    }
    t.rate_threshold_bps = pick(rng, family.rate_thresholds_bps);
    t.reserved_bandwidth_hz = pick(rng, family.reserved_bandwidths_hz);
    t.qos = family.qos;
    t.seed = rng.next_u64();
    overrides.apply(t);
    t.validate();
    return t;
}

TaskSpec sample_task(const RngStream& stream, Taskset taskset, const TaskOverrides& overrides) {
    if (taskset == Taskset::SupportQuery) {
        return sample_task(stream, TaskFamily::support_query(), overrides);
    }
    TaskSpec t = fine_tune_eval_task();
    t.seed = Rng(stream).next_u64();
    overrides.apply(t);
    t.validate();
    return t;
}

double large_scale_gain(double distance_m, double pathloss_exponent, double shadow_db) {
    const double d = std::max(distance_m, 1.0);
    return std::pow(d, -pathloss_exponent) * std::pow(10.0, shadow_db / 10.0);
}

namespace {

ChannelSample draw_sample(const TaskSpec& task, Rng& rng, const std::vector<Point>& users,
                          const std::optional<Point>& eve) {
    const auto n = users.size();
    ChannelSample s;
    s.large_scale.resize(n);
    s.small_scale.resize(n);
    s.gain.resize(n);
    for (std::size_t u = 0; u < n; ++u) {
        const double shadow = task.shadowing_sigma_db > 0.0 ? rng.normal(0.0, task.shadowing_sigma_db)
                                                            : 0.0;
        s.large_scale[u] =
            large_scale_gain(std::hypot(users[u].x, users[u].y), task.pathloss_exponent, shadow);
        s.small_scale[u] = task.small_scale.sample(rng);
        s.gain[u] = s.large_scale[u] * s.small_scale[u];
    }
    if (eve) {
        s.eve_large_scale.resize(n);
        s.eve_small_scale.resize(n);
        s.eve_gain.resize(n);
        for (std::size_t u = 0; u < n; ++u) {
            const double shadow = task.shadowing_sigma_db > 0.0
                                      ? rng.normal(0.0, task.shadowing_sigma_db)
                                      : 0.0;
            const double d = std::hypot(users[u].x - eve->x, users[u].y - eve->y);
            s.eve_large_scale[u] = large_scale_gain(d, task.pathloss_exponent, shadow);
            s.eve_small_scale[u] = task.small_scale.sample(rng);
            s.eve_gain[u] = s.eve_large_scale[u] * s.eve_small_scale[u];
        }
    }
    s.tx_power_w = dbm_to_watts(task.link.tx_power_dbm);
    s.noise_w_per_hz = dbm_to_watts(task.link.noise_dbm_per_hz);
    return s;
}

}  // namespace

ChannelSample sample_channel(const TaskSpec& task, const RngStream& stream, std::uint64_t index) {
    Rng rng(stream.derive(index));
    const double a = task.area_half_width;
    std::vector<Point> users(static_cast<std::size_t>(task.num_users));
    for (auto& p : users) {
        p.x = rng.uniform(-a, a);
        p.y = rng.uniform(-a, a);
    }
    std::optional<Point> eve;
    if (task.has_eavesdropper()) eve = Point{rng.uniform(-a, a), rng.uniform(-a, a)};
    return draw_sample(task, rng, users, eve);
}

ChannelSample sample_channel_at(const TaskSpec& task, const RngStream& stream,
                                const std::vector<Point>& users,
                                const std::optional<Point>& eavesdropper) {
    Rng rng(stream);
    return draw_sample(task, rng, users, eavesdropper);
}

std::vector<ChannelSample> sample_channels(const TaskSpec& task, const RngStream& stream,
                                           std::size_t n) {
    if (n == 0) throw DomainError("sample_channels: n must be >= 1");
    std::vector<ChannelSample> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(sample_channel(task, stream, i));
    return out;
}

ChannelSample underestimate_eavesdropper(const ChannelSample& s, double underestimate_db) {
    ChannelSample out = s;
    const double factor = db_to_linear(-underestimate_db);
    for (auto& a : out.eve_large_scale) a *= factor;
    for (auto& h : out.eve_gain) h *= factor;
    return out;
}

std::vector<std::pair<std::size_t, double>> reserve_slice_bandwidth(const SliceConfig& cfg) {
    if (!(cfg.total_bandwidth_hz > 0.0)) throw ConfigError("total bandwidth must be > 0");
    if (cfg.slices.empty()) throw ConfigError("at least one slice is required");
    std::vector<double> sums;
    double total = 0.0;
    for (const auto& sl : cfg.slices) {
        if (sl.qci.empty()) throw ConfigError("every slice needs at least one user");
        double s = 0.0;
        for (int q : sl.qci) {
            if (q < 0) throw ConfigError("QCI values must be non-negative");
            s += q;
        }
        sums.push_back(s);
        total += s;
    }
    if (total <= 0.0) throw ConfigError("total QCI is zero");
    std::vector<std::pair<std::size_t, double>> out;
    double assigned = 0.0;
    for (std::size_t i = 0; i + 1 < sums.size(); ++i) {
        const double w = std::floor(cfg.total_bandwidth_hz * sums[i] / total);
        out.emplace_back(i, w);
        assigned += w;
    }
    out.emplace_back(sums.size() - 1, cfg.total_bandwidth_hz - assigned);
    return out;
}

}  // namespace bandalloc
