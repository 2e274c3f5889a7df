#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cookielife/civil_date.hpp"
#include "cookielife/panel.hpp"
#include "cookielife/policysim.hpp"
#include "cookielife/synthgen.hpp"

namespace cookielife {

using Json = nlohmann::ordered_json;

struct SampleConfig {
  std::optional<Date> date;  // absent: every cookie in the log
  double fraction = 1.0;
};

struct ValidationConfig {
  std::optional<Date> cohort_start;  // absent: window start + lookback
  int cohort_days = 7;
  int lookback_days = 70;
  double split_fraction = 0.63;
};

struct RunConfig {
  int threshold_days = 7;
  std::vector<int> restrictions{kDefaultRestrictions.begin(), kDefaultRestrictions.end()};
  double alpha = 0.01;
  double winsor_q = 0.99;
  int bootstrap_reps = 1000;
  std::uint64_t seed = 20160716;
  int model = 2;
  double survival_min_lifetime = 8.0;
  MarketBase market;
  double revenue_divisor = 1000.0;
  std::optional<Window> window;  // absent: span of the impression log
  SampleConfig sample;
  ValidationConfig validation;
  ParseMode parse_mode = ParseMode::strict;
  int threads = 1;

  void validate() const;  // throws ConfigError
};

Json to_json(const RunConfig& cfg);
RunConfig run_config_from_json(const Json& j);  // unknown keys are errors

Json to_json(const GenConfig& cfg);
GenConfig gen_config_from_json(const Json& j);

// Reads a JSON file; "default" or an empty path yields the defaults.
RunConfig load_run_config(const std::string& path);
GenConfig load_gen_config(const std::string& path);

// COOKIELIFE_<KEY> replaces top-level key <key>; values are parsed as JSON
// when possible and taken as strings otherwise.
using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;
RunConfig apply_env_overrides(const RunConfig& cfg, const EnvLookup& env);
GenConfig apply_env_overrides(const GenConfig& cfg, const EnvLookup& env);
std::optional<std::string> process_env(const std::string& name);

std::vector<int> parse_restrictions(std::string_view text);

}  // namespace cookielife
