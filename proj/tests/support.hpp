#pragma once

#include <cmath>
#include <numeric>
#include <vector>

#include "bandalloc/qos.hpp"

namespace testing {

using namespace bandalloc;

// Model with p = n0 = 1 so each gain equals its SNR-bandwidth product.
struct Instance {
    RewardModel model;
    ChannelSample sample;
};

inline Instance make_instance(QosKind q, double budget_hz, double threshold_bps,
                              std::vector<double> zeta, std::vector<double> zeta_e = {},
                              std::size_t n_mc = 50) {
    TaskSpec t;
    t.num_users = static_cast<int>(zeta.size());
    t.qos = q;
    t.reserved_bandwidth_hz = budget_hz;
    t.rate_threshold_bps = threshold_bps;
    RewardModel::Options opt;
    opt.n_mc = n_mc;
    Instance in{RewardModel::build(t, opt), {}};
    in.sample.tx_power_w = 1.0;
    in.sample.noise_w_per_hz = 1.0;
    in.sample.large_scale = zeta;
    in.sample.small_scale.assign(zeta.size(), 1.0);
    in.sample.gain = zeta;
    if (q.needs_eavesdropper()) {
        if (zeta_e.empty()) zeta_e.assign(zeta.size(), 0.0);
        in.sample.eve_large_scale = zeta_e;
        in.sample.eve_small_scale.assign(zeta.size(), 1.0);
        in.sample.eve_gain = zeta_e;
    }
    return in;
}

// zeta at which w log2(1 + zeta / w) equals r exactly.
inline double zeta_for(double w, double r) { return w * (std::exp2(r / w) - 1.0); }

inline double sum(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0); }

}  // namespace testing
