#include "bandalloc/config.hpp"

#include <set>

#include "bandalloc/errors.hpp"

namespace bandalloc {

using Json = nlohmann::ordered_json;

Json task_to_json(const TaskSpec& t) {
    Json j;
    j["num_users"] = t.num_users;
    j["pathloss_exponent"] = t.pathloss_exponent;
    j["shadowing_sigma_db"] = t.shadowing_sigma_db;
    j["small_scale.kind"] = std::string(to_string(t.small_scale.kind));
    j["small_scale.s"] = t.small_scale.s;
    j["small_scale.m"] = t.small_scale.m;
    j["small_scale.sigma"] = t.small_scale.sigma;
    j["qos.phi"] = std::string(to_string(t.qos.phi));
    j["qos.xi"] = std::string(to_string(t.qos.xi));
    j["rate_threshold_bps"] = t.rate_threshold_bps;
    j["reserved_bandwidth_hz"] = t.reserved_bandwidth_hz;
    j["seed"] = t.seed;
    j["area_half_width"] = t.area_half_width;
    j["qci"] = t.qci;
    j["link.tx_power_dbm"] = t.link.tx_power_dbm;
    j["link.noise_dbm_per_hz"] = t.link.noise_dbm_per_hz;
    return j;
}

TaskSpec task_from_json(const Json& j) {
    static const std::set<std::string> known{
        "num_users",          "pathloss_exponent", "shadowing_sigma_db", "small_scale.kind",
        "small_scale.s",      "small_scale.m",     "small_scale.sigma",  "qos.phi",
        "qos.xi",             "rate_threshold_bps", "reserved_bandwidth_hz", "seed",
        "area_half_width",    "qci",               "link.tx_power_dbm",  "link.noise_dbm_per_hz"};
    if (!j.is_object()) throw ConfigError("task document must be an object");
    for (const auto& [key, _] : j.items()) {
        if (!known.count(key)) throw ConfigError("unknown task key: " + key);
    }
    TaskSpec t;
    try {
        t.num_users = j.value("num_users", t.num_users);
        t.pathloss_exponent = j.value("pathloss_exponent", t.pathloss_exponent);
        t.shadowing_sigma_db = j.value("shadowing_sigma_db", t.shadowing_sigma_db);
        if (j.contains("small_scale.kind")) {
            t.small_scale.kind = parse_fading(j.at("small_scale.kind").get<std::string>());
        }
        t.small_scale.s = j.value("small_scale.s", t.small_scale.s);
        t.small_scale.m = j.value("small_scale.m", t.small_scale.m);
        t.small_scale.sigma = j.value("small_scale.sigma", t.small_scale.sigma);
        if (j.contains("qos.phi")) t.qos.phi = parse_phi(j.at("qos.phi").get<std::string>());
        if (j.contains("qos.xi")) t.qos.xi = parse_xi(j.at("qos.xi").get<std::string>());
        t.rate_threshold_bps = j.value("rate_threshold_bps", t.rate_threshold_bps);
        t.reserved_bandwidth_hz = j.value("reserved_bandwidth_hz", t.reserved_bandwidth_hz);
        t.seed = j.value("seed", t.seed);
        t.area_half_width = j.value("area_half_width", t.area_half_width);
        t.qci = j.value("qci", t.qci);
        t.link.tx_power_dbm = j.value("link.tx_power_dbm", t.link.tx_power_dbm);
        t.link.noise_dbm_per_hz = j.value("link.noise_dbm_per_hz", t.link.noise_dbm_per_hz);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("task document: ") + e.what());
    }
    t.validate();
    return t;
}

std::string task_to_json_text(const TaskSpec& t) { return task_to_json(t).dump(2) + "\n"; }

TaskSpec task_from_json_text(std::string_view text) {
    Json j;
    try {
        j = Json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("task document: ") + e.what());
    }
    return task_from_json(j);
}

}  // namespace bandalloc
