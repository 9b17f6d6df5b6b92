#pragma once

#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "bandalloc/channel.hpp"
#include "bandalloc/numerics.hpp"

namespace bandalloc {

/// Per-user link quantities entering every reward. For effective capacity
/// `h` is the large-scale gain only; the small-scale part comes from the
/// estimator's draws.
struct LinkBudget {
    double p = 0.0;
    double h = 0.0;
    std::optional<double> h_e;
    double n0 = 0.0;

    /// p h / n0, the SNR-bandwidth product (Hz).
    double zeta() const { return p * h / n0; }
    double zeta_e() const { return h_e ? p * *h_e / n0 : 0.0; }
};

struct ShortBlockParams {
    double ts = 0.125e-3;
    double epsilon = 1e-5;
    double delta = 1e-2;

    void validate() const;
    bool operator==(const ShortBlockParams&) const = default;
};

/// Q^-1 values resolved once so that reward evaluation stays cheap.
struct ShortBlockCoeffs {
    double ts = 0.125e-3;
    double q_epsilon = 0.0;
    double q_delta = 0.0;

    static ShortBlockCoeffs from(const ShortBlockParams& sb);
    /// Q^-1(eps) / (ln 2 sqrt(ts)); the penalty is this times sqrt(V w).
    double k_epsilon() const;
    double k_delta() const;
};

struct LatencyQos {
    struct Derivation {
        double delay_violation_prob;
        double arrival_rate_bps;
        double delay_bound_s;
        bool operator==(const Derivation&) const = default;
    };

    double theta = 1e-3;
    double tc = 1e-3;
    std::optional<Derivation> derivation;

    /// theta = ln(1/eps) / (a tau_max).
    static LatencyQos from_delay_bound(double violation_prob, double arrival_rate_bps,
                                       double delay_bound_s, double tc = 1e-3);
    void validate() const;
    bool operator==(const LatencyQos&) const = default;
};

/// Fixed small-scale draws backing the effective-capacity expectation.
struct EcEstimator {
    std::vector<double> fading_draws;

    static EcEstimator draw(const SmallScaleModel& model, const RngStream& stream,
                            std::size_t n_mc);
    std::size_t n_mc() const { return fading_draws.size(); }
};

double rate_long(double w, const LinkBudget& lb);
double rate_short(double w, const LinkBudget& lb, const ShortBlockParams& sb);
double rate_short(double w, const LinkBudget& lb, const ShortBlockCoeffs& sc);
double secrecy_long(double w, const LinkBudget& lb);
double secrecy_short(double w, const LinkBudget& lb, const ShortBlockParams& sb);
double secrecy_short(double w, const LinkBudget& lb, const ShortBlockCoeffs& sc);
double effective_capacity(double w, const LinkBudget& large_scale, const LatencyQos& lq,
                          const EcEstimator& est, Xi xi, const ShortBlockCoeffs& sc = {});

double rate_long_derivative(double w, const LinkBudget& lb);
double rate_short_derivative(double w, const LinkBudget& lb, const ShortBlockCoeffs& sc);
double secrecy_long_derivative(double w, const LinkBudget& lb);
double secrecy_short_derivative(double w, const LinkBudget& lb, const ShortBlockCoeffs& sc);
double effective_capacity_derivative(double w, const LinkBudget& large_scale,
                                     const LatencyQos& lq, const EcEstimator& est, Xi xi,
                                     const ShortBlockCoeffs& sc = {});

/// Everything besides the link budget that a reward needs.
struct RewardInputs {
    QosKind qos{};
    ShortBlockCoeffs short_block = ShortBlockCoeffs::from({});
    LatencyQos latency{};
    std::shared_ptr<const EcEstimator> estimator;
};

/// Single dispatch point over the six rewards (bits/s).
double reward(double w, const LinkBudget& lb, const RewardInputs& in);
/// d reward / d w (bits/s per Hz); 0 inside clamped regions.
double reward_derivative(double w, const LinkBudget& lb, const RewardInputs& in);

/// Upper edge of the region where the reward is non-decreasing. Long
/// blocklength kinds return w_cap; an all-zero reward returns dw.
double concave_region_bound(const LinkBudget& lb, const RewardInputs& in, double dw,
                            double w_cap);

/// Closed-form second derivative of the long-blocklength secrecy rate.
double secrecy_long_second_derivative(double w, const LinkBudget& lb);

/// f(w+h) - 2 f(w) + f(w-h) for the long-blocklength secrecy rate, arranged
/// so that the large common terms cancel analytically rather than in
/// floating point.
double secrecy_long_second_difference(double w, double h, const LinkBudget& lb);

/// True iff the closed-form second derivative is negative at every grid
/// point and agrees in sign with the second central difference. Requires
/// h > h_e (a missing h_e counts as 0); otherwise throws ConfigError.
bool check_concavity_secrecy_long(const LinkBudget& lb, std::span<const double> w_grid);

/// Task-level reward model: the reward inputs plus the slice budget and
/// QoS threshold, with helpers that pull a user's budget from a sample.
struct RewardModel {
    TaskSpec task;
    RewardInputs inputs;

    struct Options {
        ShortBlockParams short_block{};
        LatencyQos latency{};
        std::size_t n_mc = 1000;
        bool operator==(const Options&) const = default;
    };

    static RewardModel build(const TaskSpec& task, const Options& opt);
    static RewardModel build(const TaskSpec& task) { return build(task, Options{}); }

    double budget() const { return task.reserved_bandwidth_hz; }
    double threshold() const { return task.rate_threshold_bps; }
    const QosKind& qos() const { return inputs.qos; }

    LinkBudget user_budget(const ChannelSample& s, std::size_t user) const;
    double reward(const ChannelSample& s, std::size_t user, double w) const;
    double derivative(const ChannelSample& s, std::size_t user, double w) const;
};

}  // namespace bandalloc
