#pragma once

#include <string>
#include <string_view>

#include "bandalloc/channel.hpp"
#include "json.hpp"

namespace bandalloc {

/// Flat document with keys num_users, pathloss_exponent, shadowing_sigma_db,
/// small_scale.kind, small_scale.s, small_scale.m, small_scale.sigma, qos.phi,
/// qos.xi, rate_threshold_bps, reserved_bandwidth_hz, seed, plus
/// area_half_width, qci, link.tx_power_dbm and link.noise_dbm_per_hz.
nlohmann::ordered_json task_to_json(const TaskSpec& t);
/// Missing keys keep their defaults; unknown keys throw ConfigError.
TaskSpec task_from_json(const nlohmann::ordered_json& j);

std::string task_to_json_text(const TaskSpec& t);
/// Throws ParseError on malformed text.
TaskSpec task_from_json_text(std::string_view text);

}  // namespace bandalloc
