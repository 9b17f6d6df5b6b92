#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "bandalloc/numerics.hpp"

namespace bandalloc {

enum class Phi { DataRate, EffectiveCapacity, SecrecyRate };
enum class Xi { LongBlocklength, ShortBlocklength };

struct QosKind {
    Phi phi = Phi::SecrecyRate;
    Xi xi = Xi::LongBlocklength;

    bool operator==(const QosKind&) const = default;
    bool is_short() const { return xi == Xi::ShortBlocklength; }
    bool needs_eavesdropper() const { return phi == Phi::SecrecyRate; }
};

/// All six (phi, xi) combinations, in a fixed order.
const std::vector<QosKind>& all_qos_kinds();

std::string_view to_string(Phi phi);
std::string_view to_string(Xi xi);
std::string to_string(const QosKind& q);
Phi parse_phi(std::string_view s);
Xi parse_xi(std::string_view s);
QosKind parse_qos(std::string_view s);  // "secrecy_rate/long" style

enum class FadingKind { Rice, Nakagami, Rayleigh };

std::string_view to_string(FadingKind k);
FadingKind parse_fading(std::string_view s);

/// Small-scale envelope distribution. `s` is used by Rice only, `m` by
/// Nakagami only. The default spread gives a unit mean-square envelope for
/// Rayleigh and Nakagami.
struct SmallScaleModel {
    FadingKind kind = FadingKind::Rayleigh;
    double s = 0.0;
    double m = 1.0;
    double sigma = 0.70710678118654752440;

    static SmallScaleModel rice(double s, double sigma = 0.70710678118654752440);
    static SmallScaleModel nakagami(double m, double sigma = 0.70710678118654752440);
    static SmallScaleModel rayleigh(double sigma = 0.70710678118654752440);

    void validate() const;
    double sample(Rng& rng) const;
    bool operator==(const SmallScaleModel&) const = default;
};

/// Transmit power and noise density (defaults: 23 dBm, -174 dBm/Hz).
struct LinkDefaults {
    double tx_power_dbm = 23.0;
    double noise_dbm_per_hz = -174.0;
    bool operator==(const LinkDefaults&) const = default;
};

struct TaskSpec {
    int num_users = 50;
    double pathloss_exponent = 4.0;
    double shadowing_sigma_db = 8.0;
    SmallScaleModel small_scale = SmallScaleModel::rayleigh();
    QosKind qos{};
    double rate_threshold_bps = 10e6;
    double reserved_bandwidth_hz = 100e6;
    double area_half_width = 100.0;
    std::uint64_t seed = 0;
    /// Per-user QCI; empty means 1 for every user.
    std::vector<int> qci;
    LinkDefaults link{};

    bool has_eavesdropper() const { return qos.needs_eavesdropper(); }
    int qci_of(int user) const;
    void validate() const;
    bool operator==(const TaskSpec&) const = default;
};

/// Any field set here replaces the sampled value.
struct TaskOverrides {
    std::optional<int> num_users;
    std::optional<double> pathloss_exponent;
    std::optional<double> shadowing_sigma_db;
    std::optional<SmallScaleModel> small_scale;
    std::optional<QosKind> qos;
    std::optional<double> rate_threshold_bps;
    std::optional<double> reserved_bandwidth_hz;
    std::optional<double> area_half_width;
    std::optional<std::uint64_t> seed;

    void apply(TaskSpec& t) const;
};

enum class Taskset { SupportQuery, FineTuneEval };

/// Candidate value sets a task is drawn from (uniformly per field).
struct TaskFamily {
    std::vector<int> num_users;
    std::vector<double> pathloss_exponents;
    std::vector<double> shadowing_sigmas_db;
    std::vector<double> rice_s;
    std::vector<double> nakagami_m;
    std::vector<double> rate_thresholds_bps;
    std::vector<double> reserved_bandwidths_hz;
    QosKind qos{};

    /// Training tasksets for meta-learning (support and query).
    static TaskFamily support_query();
    /// Shrunk family used by the desk-scale meta-learning experiments.
    static TaskFamily desk_toy();
};

/// The unseen meta-testing task (50 users, Rayleigh, 100 MHz, 10 Mbps).
TaskSpec fine_tune_eval_task();

TaskSpec sample_task(const RngStream& rng, Taskset taskset, const TaskOverrides& overrides = {});
TaskSpec sample_task(const RngStream& rng, const TaskFamily& family,
                     const TaskOverrides& overrides = {});

/// One coherence interval of channel state for every user of a task.
struct ChannelSample {
    std::vector<double> large_scale;      // alpha_u (path loss x shadowing)
    std::vector<double> small_scale;      // g_u
    std::vector<double> gain;             // h_u = alpha_u g_u
    std::vector<double> eve_large_scale;  // empty without eavesdropper
    std::vector<double> eve_small_scale;
    std::vector<double> eve_gain;
    double tx_power_w = 0.0;
    double noise_w_per_hz = 0.0;

    std::size_t num_users() const { return gain.size(); }
    bool has_eavesdropper() const { return !eve_gain.empty(); }
    bool operator==(const ChannelSample&) const = default;
};

struct Point {
    double x = 0.0;
    double y = 0.0;
};

/// alpha = max(d, 1)^-gamma * 10^(shadow_db / 10).
double large_scale_gain(double distance_m, double pathloss_exponent, double shadow_db);

/// Sample i of a task, drawn from stream.derive(i).
ChannelSample sample_channel(const TaskSpec& task, const RngStream& stream, std::uint64_t index);

/// Same as sample_channel but with user (and eavesdropper) positions fixed.
ChannelSample sample_channel_at(const TaskSpec& task, const RngStream& stream,
                                const std::vector<Point>& users,
                                const std::optional<Point>& eavesdropper);

/// Samples 0..n-1. Throws DomainError for n == 0.
std::vector<ChannelSample> sample_channels(const TaskSpec& task, const RngStream& stream,
                                           std::size_t n);

/// Scales every eavesdropper gain down by `underestimate_db`.
ChannelSample underestimate_eavesdropper(const ChannelSample& s, double underestimate_db);

struct Slice {
    std::vector<int> qci;
    QosKind qos{};
};

struct SliceConfig {
    double total_bandwidth_hz = 0.0;
    std::vector<Slice> slices;
};

/// QCI-weighted reservation. All but the last slice are floored to 1 Hz and
/// the last slice takes the remainder, so the shares sum to the total.
std::vector<std::pair<std::size_t, double>> reserve_slice_bandwidth(const SliceConfig& cfg);

}  // namespace bandalloc
