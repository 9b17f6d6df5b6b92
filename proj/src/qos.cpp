#include "bandalloc/qos.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "bandalloc/errors.hpp"

namespace bandalloc {

namespace {

constexpr double kLn2 = std::numbers::ln2;

void check_bandwidth(double w) {
    if (!(w > 0.0)) throw DomainError("bandwidth must be positive");
}

const double& require_eve(const LinkBudget& lb) {
    if (!lb.h_e) throw ConfigError("secrecy reward requires an eavesdropper gain");
    return *lb.h_e;
}

// ln(1+s) - s/(1+s), accurate for small s.
double capacity_slope(double s) {
    if (s < 1e-4) return s * s * (0.5 - s * (2.0 / 3.0 - 0.75 * s));
    return std::log1p(s) - s / (1.0 + s);
}

double capacity(double w, double zeta) {
    return w / kLn2 * std::log1p(zeta / w);
}

double capacity_derivative(double w, double zeta) {
    return capacity_slope(zeta / w) / kLn2;
}

// sqrt(V w) with V = 1 - (1+s)^-2 = s(2+s)/(1+s)^2.
double dispersion_root(double w, double zeta) {
    const double s = zeta / w;
    const double v = s * (2.0 + s) / ((1.0 + s) * (1.0 + s));
    return std::sqrt(v * w);
}

// d sqrt(V w) / dw = s^2 (3+s) / ((1+s)^3 2 sqrt(V w)).
double dispersion_root_derivative(double w, double zeta) {
    if (zeta <= 0.0) return 0.0;
    const double s = zeta / w;
    const double num = s * s * (3.0 + s);
    const double den = (1.0 + s) * (1.0 + s) * (1.0 + s) * 2.0 * dispersion_root(w, zeta);
    return num / den;
}

double short_rate_raw(double w, double zeta, const ShortBlockCoeffs& sc) {
    return capacity(w, zeta) - sc.k_epsilon() * dispersion_root(w, zeta);
}

// Sum of per-draw rates at large-scale gain * g_i, reduced with log-mean-exp.
struct EcTerms {
    double value;
    double derivative;
};

EcTerms ec_terms(double w, const LinkBudget& large_scale, const LatencyQos& lq,
                 const EcEstimator& est, Xi xi, const ShortBlockCoeffs& sc, bool with_derivative) {
    if (est.fading_draws.empty()) throw DomainError("effective capacity: estimator has no draws");
    lq.validate();
    const double a = lq.theta * lq.tc;
    const double base = large_scale.zeta();
    const std::size_t n = est.fading_draws.size();
    thread_local std::vector<double> rates;
    thread_local std::vector<double> slopes;
    rates.resize(n);
    slopes.resize(n);
    double vmax = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
        const double zeta = base * est.fading_draws[i];
        double r;
        double dr = 0.0;
        if (xi == Xi::LongBlocklength) {
            r = capacity(w, zeta);
            if (with_derivative) dr = capacity_derivative(w, zeta);
        } else {
            r = short_rate_raw(w, zeta, sc);
            if (r <= 0.0) {
                r = 0.0;
            } else if (with_derivative) {
                dr = capacity_derivative(w, zeta) -
                     sc.k_epsilon() * dispersion_root_derivative(w, zeta);
            }
        }
        rates[i] = r;
        slopes[i] = dr;
        vmax = std::max(vmax, -a * r);
    }
    double sum = 0.0;
    double weighted = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double e = std::exp(-a * rates[i] - vmax);
        sum += e;
        weighted += e * slopes[i];
    }
    const double lse = vmax + std::log(sum) - std::log(static_cast<double>(n));
    return {-lse / a, with_derivative ? weighted / sum : 0.0};
}

}  // namespace

void ShortBlockParams::validate() const {
    if (!(ts > 0.0)) throw DomainError("ts must be positive");
    if (!(epsilon > 0.0 && epsilon < 1.0)) throw DomainError("epsilon must lie in (0,1)");
    if (!(delta > 0.0 && delta < 1.0)) throw DomainError("delta must lie in (0,1)");
}

ShortBlockCoeffs ShortBlockCoeffs::from(const ShortBlockParams& sb) {
    sb.validate();
    return {sb.ts, inverse_q(sb.epsilon), inverse_q(sb.delta)};
}

double ShortBlockCoeffs::k_epsilon() const {
    return q_epsilon / (kLn2 * std::sqrt(ts));
}

double ShortBlockCoeffs::k_delta() const {
    return q_delta / (kLn2 * std::sqrt(ts));
}

LatencyQos LatencyQos::from_delay_bound(double violation_prob, double arrival_rate_bps,
                                        double delay_bound_s, double tc) {
    LatencyQos q;
    q.derivation = Derivation{violation_prob, arrival_rate_bps, delay_bound_s};
    q.theta = std::log(1.0 / violation_prob) / (arrival_rate_bps * delay_bound_s);
    q.tc = tc;
    q.validate();
    return q;
}

void LatencyQos::validate() const {
    if (!(theta > 0.0) || !(tc > 0.0)) throw DomainError("theta and tc must be positive");
    if (derivation) {
        const auto& d = *derivation;
        if (!(d.delay_violation_prob > 0.0 && d.delay_violation_prob < 1.0) ||
            !(d.arrival_rate_bps > 0.0) || !(d.delay_bound_s > 0.0)) {
            throw DomainError("latency derivation parameters out of range");
        }
        const double derived =
            std::log(1.0 / d.delay_violation_prob) / (d.arrival_rate_bps * d.delay_bound_s);
        if (std::abs(derived - theta) > 1e-12 * derived) {
            throw ConfigError("theta does not match its delay-bound derivation");
        }
    }
}

EcEstimator EcEstimator::draw(const SmallScaleModel& model, const RngStream& stream,
                              std::size_t n_mc) {
    if (n_mc == 0) throw DomainError("EcEstimator: n_mc must be >= 1");
    model.validate();
    Rng rng(stream);
    EcEstimator est;
    est.fading_draws.resize(n_mc);
    for (auto& g : est.fading_draws) g = model.sample(rng);
    return est;
}

double rate_long(double w, const LinkBudget& lb) {
    check_bandwidth(w);
    return capacity(w, lb.zeta());
}

double rate_short(double w, const LinkBudget& lb, const ShortBlockCoeffs& sc) {
    check_bandwidth(w);
    return std::max(0.0, short_rate_raw(w, lb.zeta(), sc));
}

double rate_short(double w, const LinkBudget& lb, const ShortBlockParams& sb) {
    return rate_short(w, lb, ShortBlockCoeffs::from(sb));
}

double secrecy_long(double w, const LinkBudget& lb) {
    check_bandwidth(w);
    require_eve(lb);
    return std::max(0.0, capacity(w, lb.zeta()) - capacity(w, lb.zeta_e()));
}

double secrecy_short(double w, const LinkBudget& lb, const ShortBlockCoeffs& sc) {
    check_bandwidth(w);
    const double he = require_eve(lb);
    if (lb.h <= he) return 0.0;
    const double z = lb.zeta();
    const double ze = lb.zeta_e();
    const double v = capacity(w, z) - capacity(w, ze) - sc.k_epsilon() * dispersion_root(w, z) -
                     sc.k_delta() * dispersion_root(w, ze);
    return std::max(0.0, v);
}

double secrecy_short(double w, const LinkBudget& lb, const ShortBlockParams& sb) {
    return secrecy_short(w, lb, ShortBlockCoeffs::from(sb));
}

double effective_capacity(double w, const LinkBudget& large_scale, const LatencyQos& lq,
                          const EcEstimator& est, Xi xi, const ShortBlockCoeffs& sc) {
    check_bandwidth(w);
    return ec_terms(w, large_scale, lq, est, xi, sc, false).value;
}

double rate_long_derivative(double w, const LinkBudget& lb) {
    check_bandwidth(w);
    return capacity_derivative(w, lb.zeta());
}

double rate_short_derivative(double w, const LinkBudget& lb, const ShortBlockCoeffs& sc) {
    check_bandwidth(w);
    const double z = lb.zeta();
    if (short_rate_raw(w, z, sc) <= 0.0) return 0.0;
    return capacity_derivative(w, z) - sc.k_epsilon() * dispersion_root_derivative(w, z);
}

double secrecy_long_derivative(double w, const LinkBudget& lb) {
    check_bandwidth(w);
    require_eve(lb);
    const double z = lb.zeta();
    const double ze = lb.zeta_e();
    if (capacity(w, z) - capacity(w, ze) <= 0.0) return 0.0;
    if (ze == 0.0) return capacity_derivative(w, z);
    return std::log((w + z) / (w + ze)) / kLn2 + (ze - z) * w / (kLn2 * (w + z) * (w + ze));
}

double secrecy_short_derivative(double w, const LinkBudget& lb, const ShortBlockCoeffs& sc) {
    check_bandwidth(w);
    const double he = require_eve(lb);
    if (lb.h <= he || secrecy_short(w, lb, sc) <= 0.0) return 0.0;
    const double z = lb.zeta();
    const double ze = lb.zeta_e();
    const double base = ze == 0.0 ? capacity_derivative(w, z)
                                  : std::log((w + z) / (w + ze)) / kLn2 +
                                        (ze - z) * w / (kLn2 * (w + z) * (w + ze));
    return base - sc.k_epsilon() * dispersion_root_derivative(w, z) -
           sc.k_delta() * dispersion_root_derivative(w, ze);
}

double effective_capacity_derivative(double w, const LinkBudget& large_scale,
                                     const LatencyQos& lq, const EcEstimator& est, Xi xi,
                                     const ShortBlockCoeffs& sc) {
    check_bandwidth(w);
    return ec_terms(w, large_scale, lq, est, xi, sc, true).derivative;
}

double reward(double w, const LinkBudget& lb, const RewardInputs& in) {
    switch (in.qos.phi) {
        case Phi::DataRate:
            return in.qos.is_short() ? rate_short(w, lb, in.short_block) : rate_long(w, lb);
        case Phi::SecrecyRate:
            return in.qos.is_short() ? secrecy_short(w, lb, in.short_block) : secrecy_long(w, lb);
        case Phi::EffectiveCapacity:
            if (!in.estimator) throw ConfigError("effective capacity requires an estimator");
            return effective_capacity(w, lb, in.latency, *in.estimator, in.qos.xi, in.short_block);
    }
    return 0.0;
}

double reward_derivative(double w, const LinkBudget& lb, const RewardInputs& in) {
    switch (in.qos.phi) {
        case Phi::DataRate:
            return in.qos.is_short() ? rate_short_derivative(w, lb, in.short_block)
                                     : rate_long_derivative(w, lb);
        case Phi::SecrecyRate:
            return in.qos.is_short() ? secrecy_short_derivative(w, lb, in.short_block)
                                     : secrecy_long_derivative(w, lb);
        case Phi::EffectiveCapacity:
            if (!in.estimator) throw ConfigError("effective capacity requires an estimator");
            return effective_capacity_derivative(w, lb, in.latency, *in.estimator, in.qos.xi,
                                                 in.short_block);
    }
    return 0.0;
}

double concave_region_bound(const LinkBudget& lb, const RewardInputs& in, double dw,
                            double w_cap) {
    if (!(dw > 0.0) || !(w_cap >= dw)) throw DomainError("concave_region_bound: need 0 < dw <= w_cap");
    if (!in.qos.is_short()) return w_cap;
    auto slope = [&](double w) { return reward_derivative(w, lb, in); };
    bool any_positive = false;
    double prev = dw;
    double w = dw;
    for (;;) {
        if (reward(w, lb, in) > 0.0) any_positive = true;
        if (any_positive && slope(w) < 0.0) {
            if (w == prev) return w;  // already falling at dw
            // Bisect on the sign of the slope; keep the non-negative side.
            double lo = prev;
            double hi = w;
            for (int it = 0; it < 200 && hi - lo > 1e-9 * hi; ++it) {
                const double mid = lo + 0.5 * (hi - lo);
                if (slope(mid) >= 0.0) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            return lo;
        }
        if (w >= w_cap) break;
        prev = w;
        w = std::min(2.0 * w, w_cap);
    }
    return any_positive ? w_cap : dw;
}

double secrecy_long_second_derivative(double w, const LinkBudget& lb) {
    check_bandwidth(w);
    const double z = lb.zeta();
    const double ze = lb.zeta_e();
    const double a = (w + z) * (w + ze);
    return (ze - z) * ((ze + z) * w + 2.0 * ze * z) / (kLn2 * a * a);
}

double secrecy_long_second_difference(double w, double h, const LinkBudget& lb) {
    check_bandwidth(w);
    if (!(h > 0.0 && h < w)) throw DomainError("second difference step must lie in (0, w)");
    const double z = lb.zeta();
    const double ze = lb.zeta_e();
    // f(x) = x/ln2 * [ln(x+z) - ln(x+ze)] when z > ze (the ln x parts cancel).
    // Expand around w so that the x-linear part cancels exactly:
    //   sum_j c_j x_j L(x_j) = sum_j c_j x_j (L(x_j) - L(w)) + L(w) sum_j c_j x_j.
    const double xp = w + h;
    const double xm = w - h;
    auto dl = [&](double x) {
        return std::log1p((x - w) / (w + z)) - std::log1p((x - w) / (w + ze));
    };
    const double linear = (xp - w) - (w - xm);  // sum_j c_j x_j, 0 up to rounding
    const double lw = std::log1p((z - ze) / (w + ze));
    return (xp * dl(xp) + xm * dl(xm) + lw * linear) / kLn2;
}

bool check_concavity_secrecy_long(const LinkBudget& lb, std::span<const double> w_grid) {
    if (!(lb.h > lb.h_e.value_or(0.0))) {
        throw ConfigError("concavity check requires h > h_e (scheduled user)");
    }
    for (double w : w_grid) {
        const double closed = secrecy_long_second_derivative(w, lb);
        const double diff = secrecy_long_second_difference(w, 0.25 * w, lb);
        if (!(closed < 0.0) || !(diff < 0.0)) return false;
    }
    return true;
}

RewardModel RewardModel::build(const TaskSpec& task, const Options& opt) {
    task.validate();
    RewardModel m;
    m.task = task;
    m.inputs.qos = task.qos;
    m.inputs.short_block = ShortBlockCoeffs::from(opt.short_block);
    m.inputs.latency = opt.latency;
    m.inputs.latency.validate();
    if (task.qos.phi == Phi::EffectiveCapacity) {
        m.inputs.estimator = std::make_shared<const EcEstimator>(EcEstimator::draw(
            task.small_scale, RngStream{task.seed, streams::kFading}, opt.n_mc));
    }
    return m;
}

LinkBudget RewardModel::user_budget(const ChannelSample& s, std::size_t user) const {
    LinkBudget lb;
    lb.p = s.tx_power_w;
    lb.n0 = s.noise_w_per_hz;
    if (inputs.qos.phi == Phi::EffectiveCapacity) {
        lb.h = s.large_scale.at(user);
    } else {
        lb.h = s.gain.at(user);
    }
    if (inputs.qos.phi == Phi::SecrecyRate) {
        if (!s.has_eavesdropper()) throw ConfigError("secrecy task sample lacks eavesdropper gains");
        lb.h_e = s.eve_gain.at(user);
    }
    return lb;
}

double RewardModel::reward(const ChannelSample& s, std::size_t user, double w) const {
    return bandalloc::reward(w, user_budget(s, user), inputs);
}

double RewardModel::derivative(const ChannelSample& s, std::size_t user, double w) const {
    return bandalloc::reward_derivative(w, user_budget(s, user), inputs);
}

}  // namespace bandalloc
