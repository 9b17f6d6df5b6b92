#include <algorithm>
#include <boost/math/distributions/non_central_chi_squared.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <cmath>
#include <functional>
#include <set>

#include "bandalloc/channel.hpp"
#include "bandalloc/config.hpp"
#include "bandalloc/errors.hpp"
#include "doctest.h"

using namespace bandalloc;

namespace {

double ks_statistic(std::vector<double> xs, const std::function<double(double)>& cdf) {
    std::sort(xs.begin(), xs.end());
    const double n = static_cast<double>(xs.size());
    double d = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double f = cdf(xs[i]);
        d = std::max({d, std::abs(f - static_cast<double>(i) / n),
                      std::abs(static_cast<double>(i + 1) / n - f)});
    }
    return d;
}

std::vector<double> draw(const SmallScaleModel& m, std::size_t n, std::uint64_t seed) {
    Rng rng(RngStream{seed, 99});
    std::vector<double> xs(n);
    for (auto& x : xs) x = m.sample(rng);
    return xs;
}

// Envelope CDFs from Boost.
double rice_cdf(double x, double s, double sigma) {
    boost::math::non_central_chi_squared_distribution<double> d(2.0, (s / sigma) * (s / sigma));
    return boost::math::cdf(d, (x / sigma) * (x / sigma));
}

double nakagami_cdf(double x, double m, double sigma) {
    const double omega = 2.0 * sigma * sigma;
    return boost::math::gamma_p(m, m * x * x / omega);
}

double rayleigh_cdf(double x, double sigma) { return -std::expm1(-x * x / (2.0 * sigma * sigma)); }

}  // namespace

TEST_CASE("fine-tune/eval task matches the unseen-task column") {
    const TaskSpec t = sample_task(RngStream{1, streams::kTasks}, Taskset::FineTuneEval);
    CHECK(t.num_users == 50);
    CHECK(t.pathloss_exponent == 4.0);
    CHECK(t.shadowing_sigma_db == 8.0);
    CHECK(t.small_scale.kind == FadingKind::Rayleigh);
    CHECK(t.rate_threshold_bps == 10e6);
    CHECK(t.reserved_bandwidth_hz == 100e6);

    TaskOverrides o;
    o.num_users = 10;
    const TaskSpec t10 = sample_task(RngStream{1, streams::kTasks}, Taskset::FineTuneEval, o);
    CHECK(t10.num_users == 10);
    CHECK(t10.pathloss_exponent == 4.0);
    CHECK(t10.reserved_bandwidth_hz == 100e6);
}

TEST_CASE("support/query draws stay inside the training value sets") {
    std::set<int> users;
    std::set<double> gammas, sigmas, rates, widths;
    int rice = 0, nakagami = 0;
    for (std::uint64_t i = 0; i < 1000; ++i) {
        const TaskSpec t = sample_task(RngStream{2, streams::kTasks}.derive(i), Taskset::SupportQuery);
        CHECK(t.num_users >= 10);
        CHECK(t.num_users <= 30);
        CHECK((t.pathloss_exponent == 2.0 || t.pathloss_exponent == 3.0));
        CHECK((t.shadowing_sigma_db >= 3.0 && t.shadowing_sigma_db <= 5.0));
        CHECK(std::floor(t.shadowing_sigma_db) == t.shadowing_sigma_db);
        if (t.small_scale.kind == FadingKind::Rice) {
            ++rice;
            CHECK((t.small_scale.s >= 1 && t.small_scale.s <= 5));
        } else {
            REQUIRE(t.small_scale.kind == FadingKind::Nakagami);
            ++nakagami;
            CHECK((t.small_scale.m >= 2 && t.small_scale.m <= 6));
        }
        CHECK((t.rate_threshold_bps >= 1e6 && t.rate_threshold_bps <= 10e6));
        CHECK(std::fmod(t.rate_threshold_bps, 1e6) == 0.0);
        CHECK((t.reserved_bandwidth_hz >= 10e6 && t.reserved_bandwidth_hz <= 100e6));
        CHECK(std::fmod(t.reserved_bandwidth_hz, 1e6) == 0.0);
        users.insert(t.num_users);
        gammas.insert(t.pathloss_exponent);
        sigmas.insert(t.shadowing_sigma_db);
        rates.insert(t.rate_threshold_bps);
        widths.insert(t.reserved_bandwidth_hz);
    }
    CHECK(users.size() == 21);
    CHECK(gammas.size() == 2);
    CHECK(sigmas.size() == 3);
    CHECK(rates.size() == 10);
    CHECK(widths.size() > 80);
    CHECK(rice > 400);
    CHECK(nakagami > 400);
}

TEST_CASE("pinned user with no shadowing at 1 m has unit large-scale gain") {
    TaskSpec t;
    t.num_users = 1;
    t.pathloss_exponent = 2.0;
    t.shadowing_sigma_db = 0.0;
    t.qos = {Phi::DataRate, Xi::LongBlocklength};
    const ChannelSample s = sample_channel_at(t, RngStream{1, 1}, {{1.0, 0.0}}, std::nullopt);
    CHECK(s.large_scale[0] == 1.0);
    CHECK(s.gain[0] == s.small_scale[0]);
    CHECK(large_scale_gain(0.2, 3.0, 0.0) == 1.0);  // distance floored at 1 m
    CHECK(large_scale_gain(10.0, 2.0, 10.0) == doctest::Approx(0.1));
}

TEST_CASE("Rayleigh envelope second moment") {
    const auto xs = draw(SmallScaleModel::rayleigh(1.0), 100000, 3);
    double m2 = 0.0;
    for (double x : xs) m2 += x * x;
    m2 /= static_cast<double>(xs.size());
    CHECK(std::abs(m2 - 2.0) / 2.0 < 0.02);
}

TEST_CASE("small-scale samplers pass Kolmogorov-Smirnov at 1e5 samples") {
    const double sigma = 1.0 / std::sqrt(2.0);
    const std::size_t n = 100000;
    for (double s : {1.0, 2.0, 3.0, 4.0, 5.0}) {
        const auto xs = draw(SmallScaleModel::rice(s), n, 10 + static_cast<std::uint64_t>(s));
        const double d = ks_statistic(xs, [&](double x) { return rice_cdf(x, s, sigma); });
        INFO("rice s=" << s << " D=" << d);
        CHECK(d < 0.02);
    }
    for (double m : {2.0, 3.0, 4.0, 5.0, 6.0}) {
        const auto xs = draw(SmallScaleModel::nakagami(m), n, 20 + static_cast<std::uint64_t>(m));
        const double d = ks_statistic(xs, [&](double x) { return nakagami_cdf(x, m, sigma); });
        INFO("nakagami m=" << m << " D=" << d);
        CHECK(d < 0.02);
    }
    for (double sg : {sigma, 1.0}) {
        const auto xs = draw(SmallScaleModel::rayleigh(sg), n, 30);
        const double d = ks_statistic(xs, [&](double x) { return rayleigh_cdf(x, sg); });
        INFO("rayleigh sigma=" << sg << " D=" << d);
        CHECK(d < 0.02);
    }
}

TEST_CASE("small-scale model validation") {
    CHECK_THROWS_AS(SmallScaleModel::rice(0.0).validate(), ConfigError);
    CHECK_THROWS_AS(SmallScaleModel::nakagami(0.4).validate(), ConfigError);
    CHECK_THROWS_AS(SmallScaleModel::rayleigh(0.0).validate(), ConfigError);
    CHECK_NOTHROW(SmallScaleModel::nakagami(0.5).validate());
}

TEST_CASE("channel samples are reproducible and order independent") {
    TaskSpec t = fine_tune_eval_task();
    t.num_users = 8;
    const RngStream st{9, streams::kChannels};
    const auto a = sample_channels(t, st, 5);
    const auto b = sample_channels(t, st, 5);
    CHECK(a == b);
    // Sample 3 drawn alone equals sample 3 of the sequence.
    CHECK(sample_channel(t, st, 3) == a[3]);
    CHECK(!(a[0] == a[1]));
    CHECK_THROWS_AS(sample_channels(t, st, 0), DomainError);

    for (const auto& s : a) {
        CHECK(s.has_eavesdropper());
        CHECK(s.num_users() == 8);
        for (std::size_t u = 0; u < s.num_users(); ++u) {
            CHECK(s.gain[u] >= 0.0);
            CHECK(s.eve_gain[u] >= 0.0);
            CHECK(s.gain[u] == s.large_scale[u] * s.small_scale[u]);
        }
        CHECK(s.tx_power_w > 0.0);
        CHECK(s.noise_w_per_hz > 0.0);
    }
    t.qos.phi = Phi::DataRate;
    CHECK(!sample_channel(t, st, 0).has_eavesdropper());
}

TEST_CASE("eavesdropper underestimation scales its gains") {
    TaskSpec t = fine_tune_eval_task();
    t.num_users = 3;
    const auto s = sample_channel(t, RngStream{4, 4}, 0);
    const auto u = underestimate_eavesdropper(s, 10.0);
    for (std::size_t k = 0; k < 3; ++k) {
        CHECK(u.eve_gain[k] == doctest::Approx(s.eve_gain[k] / 10.0));
        CHECK(u.gain[k] == s.gain[k]);
    }
    CHECK(underestimate_eavesdropper(s, 0.0) == s);
}

TEST_CASE("slice bandwidth reservation") {
    SliceConfig one{100e6, {{{1, 1, 1}, {}}}};
    const auto r1 = reserve_slice_bandwidth(one);
    REQUIRE(r1.size() == 1);
    CHECK(r1[0].second == 100e6);

    SliceConfig two{100e6, {{{1}, {}}, {{1, 2}, {}}}};
    const auto r2 = reserve_slice_bandwidth(two);
    CHECK(r2[0].second == 25e6);
    CHECK(r2[1].second == 75e6);

    SliceConfig three{100e6, {{{2}, {}}, {{1, 1}, {}}, {{2}, {}}}};
    const auto r3 = reserve_slice_bandwidth(three);
    double total = 0.0;
    for (const auto& [i, w] : r3) {
        CHECK(w >= 0.0);
        CHECK(std::abs(w - 100e6 / 3.0) <= 1.0);
        total += w;
    }
    CHECK(total == 100e6);

    SliceConfig zero{100e6, {{{0}, {}}, {{0}, {}}}};
    CHECK_THROWS_AS(reserve_slice_bandwidth(zero), ConfigError);
}

TEST_CASE("slice shares always sum to the total") {
    Rng rng(RngStream{8, 8});
    for (int i = 0; i < 200; ++i) {
        SliceConfig cfg;
        cfg.total_bandwidth_hz = rng.uniform(1e6, 1e9);
        const auto n = rng.uniform_int(1, 6);
        for (int k = 0; k < n; ++k) {
            Slice s;
            const auto users = rng.uniform_int(1, 5);
            for (int u = 0; u < users; ++u) s.qci.push_back(static_cast<int>(rng.uniform_int(1, 9)));
            cfg.slices.push_back(s);
        }
        double total = 0.0;
        for (const auto& [_, w] : reserve_slice_bandwidth(cfg)) {
            CHECK(w >= 0.0);
            total += w;
        }
        CHECK(total == cfg.total_bandwidth_hz);
    }
}

TEST_CASE("task document round trip") {
    TaskSpec t = sample_task(RngStream{5, 5}, Taskset::SupportQuery);
    t.qos = {Phi::EffectiveCapacity, Xi::ShortBlocklength};
    const std::string text = task_to_json_text(t);
    for (const char* key : {"\"num_users\"", "\"pathloss_exponent\"", "\"shadowing_sigma_db\"",
                            "\"small_scale.kind\"", "\"small_scale.s\"", "\"small_scale.m\"",
                            "\"small_scale.sigma\"", "\"qos.phi\"", "\"qos.xi\"",
                            "\"rate_threshold_bps\"", "\"reserved_bandwidth_hz\"", "\"seed\""}) {
        CHECK(text.find(key) != std::string::npos);
    }
    const TaskSpec back = task_from_json_text(text);
    CHECK(back == t);
    CHECK(task_to_json_text(back) == text);
    CHECK_THROWS_AS(task_from_json_text("{\"num_users\": "), ParseError);
    CHECK_THROWS_AS(task_from_json_text("{\"bogus\": 1}"), ConfigError);
    CHECK_THROWS_AS(task_from_json_text("{\"num_users\": 0}"), ConfigError);
}

TEST_CASE("qos kind strings") {
    CHECK(all_qos_kinds().size() == 6);
    for (const auto& q : all_qos_kinds()) CHECK(parse_qos(to_string(q)) == q);
    CHECK_THROWS_AS(parse_qos("data_rate"), ConfigError);
    CHECK_THROWS_AS(parse_phi("x"), ConfigError);
}
