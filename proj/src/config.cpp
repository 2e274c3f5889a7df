#include "cookielife/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <set>

#include <fmt/format.h>

#include "cookielife/error.hpp"

namespace cookielife {

namespace {

void reject_unknown(const Json& j, const std::set<std::string>& known, std::string_view where) {
  if (!j.is_object()) throw ConfigError(fmt::format("{}: expected a JSON object", where));
  for (const auto& [key, value] : j.items())
    if (!known.contains(key)) throw ConfigError(fmt::format("{}: unknown key '{}'", where, key));
}

template <class T>
void read(const Json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("config key '{}': {}", key, e.what()));
  }
}

std::optional<Date> read_date(const Json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  if (!j.at(key).is_string()) throw ConfigError(fmt::format("config key '{}' must be a date string", key));
  try {
    return parse_date(j.at(key).get<std::string>());
  } catch (const DataError& e) {
    throw ConfigError(fmt::format("config key '{}': {}", key, e.what()));
  }
}

Json date_or_null(const std::optional<Date>& d) { return d ? Json(format_date(*d)) : Json(nullptr); }

Json levels_to_json(const std::vector<AttributeLevel>& levels) {
  Json a = Json::array();
  for (const auto& l : levels) a.push_back({{"label", l.label}, {"weight", l.weight}, {"intercept_effect", l.intercept_effect}});
  return a;
}

std::vector<AttributeLevel> levels_from_json(const Json& a, std::string_view where) {
  if (!a.is_array()) throw ConfigError(fmt::format("{} must be an array", where));
  std::vector<AttributeLevel> out;
  for (const auto& item : a) {
    reject_unknown(item, {"label", "weight", "intercept_effect"}, where);
    AttributeLevel l;
    read(item, "label", l.label);
    read(item, "weight", l.weight);
    read(item, "intercept_effect", l.intercept_effect);
    out.push_back(std::move(l));
  }
  return out;
}

Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot open config file '{}'", path));
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(fmt::format("{}: {}", path, e.what()));
  }
}

Json override_top_level(Json j, const EnvLookup& env) {
  for (auto& [key, value] : j.items()) {
    std::string name = "COOKIELIFE_" + key;
    std::transform(name.begin(), name.end(), name.begin(), [](unsigned char c) { return std::toupper(c); });
    const auto text = env(name);
    if (!text) continue;
    try {
      value = Json::parse(*text);
    } catch (const nlohmann::json::parse_error&) {
      value = *text;
    }
  }
  return j;
}

}  // namespace

void RunConfig::validate() const {
  const auto require = [](bool ok, std::string_view what) {
    if (!ok) throw ConfigError(fmt::format("invalid run config: {}", what));
  };
  require(threshold_days >= 1, "threshold_days must be positive");
  for (int L : restrictions) require(L >= 1, "restrictions must be positive");
  require(alpha > 0.0 && alpha < 1.0, "alpha must lie in (0, 1)");
  require(winsor_q > 0.5 && winsor_q <= 1.0, "winsor_q must lie in (0.5, 1]");
  require(bootstrap_reps >= 1, "bootstrap_reps must be positive");
  require(model >= 1 && model <= 5, "model must be 1-5");
  require(survival_min_lifetime > 0.0, "survival_min_lifetime must be positive");
  require(market.revenue_eur > 0.0 && market.users > 0.0, "market figures must be positive");
  require(revenue_divisor > 0.0, "revenue_divisor must be positive");
  require(!window || window->length_days() >= 1, "window end precedes start");
  require(sample.fraction > 0.0 && sample.fraction <= 1.0, "sample fraction must lie in (0, 1]");
  require(validation.cohort_days >= 1 && validation.lookback_days >= 0, "validation cohort settings");
  require(validation.split_fraction > 0.0 && validation.split_fraction <= 1.0, "split_fraction must lie in (0, 1]");
  require(threads >= 1, "threads must be positive");
}

Json to_json(const RunConfig& c) {
  Json j;
  j["threshold_days"] = c.threshold_days;
  j["restrictions"] = c.restrictions;
  j["alpha"] = c.alpha;
  j["winsor_q"] = c.winsor_q;
  j["bootstrap_reps"] = c.bootstrap_reps;
  j["seed"] = c.seed;
  j["model"] = c.model;
  j["survival_min_lifetime"] = c.survival_min_lifetime;
  j["market"] = {{"revenue_eur", c.market.revenue_eur}, {"users", c.market.users}};
  j["revenue_divisor"] = c.revenue_divisor;
  j["window"] = c.window ? Json{{"start", format_date(c.window->start)}, {"end", format_date(c.window->end)}} : Json(nullptr);
  j["sample"] = {{"date", date_or_null(c.sample.date)}, {"fraction", c.sample.fraction}};
  j["validation"] = {{"cohort_start", date_or_null(c.validation.cohort_start)},
                     {"cohort_days", c.validation.cohort_days},
                     {"lookback_days", c.validation.lookback_days},
                     {"split_fraction", c.validation.split_fraction}};
  j["parse_mode"] = c.parse_mode == ParseMode::strict ? "strict" : "skip";
  j["threads"] = c.threads;
  return j;
}

RunConfig run_config_from_json(const Json& j) {
  reject_unknown(j,
                 {"threshold_days", "restrictions", "alpha", "winsor_q", "bootstrap_reps", "seed", "model",
                  "survival_min_lifetime", "market", "revenue_divisor", "window", "sample", "validation", "parse_mode",
                  "threads"},
                 "run config");
  RunConfig c;
  read(j, "threshold_days", c.threshold_days);
  read(j, "restrictions", c.restrictions);
  read(j, "alpha", c.alpha);
  read(j, "winsor_q", c.winsor_q);
  read(j, "bootstrap_reps", c.bootstrap_reps);
  read(j, "seed", c.seed);
  read(j, "model", c.model);
  read(j, "survival_min_lifetime", c.survival_min_lifetime);
  read(j, "revenue_divisor", c.revenue_divisor);
  read(j, "threads", c.threads);
  if (j.contains("market")) {
    const auto& m = j.at("market");
    reject_unknown(m, {"revenue_eur", "users"}, "market");
    read(m, "revenue_eur", c.market.revenue_eur);
    read(m, "users", c.market.users);
  }
  if (j.contains("window") && !j.at("window").is_null()) {
    const auto& w = j.at("window");
    reject_unknown(w, {"start", "end"}, "window");
    const auto start = read_date(w, "start");
    const auto end = read_date(w, "end");
    if (!start || !end) throw ConfigError("window needs both start and end");
    c.window = Window{*start, *end};
  }
  if (j.contains("sample")) {
    const auto& s = j.at("sample");
    reject_unknown(s, {"date", "fraction"}, "sample");
    c.sample.date = read_date(s, "date");
    read(s, "fraction", c.sample.fraction);
  }
  if (j.contains("validation")) {
    const auto& v = j.at("validation");
    reject_unknown(v, {"cohort_start", "cohort_days", "lookback_days", "split_fraction"}, "validation");
    c.validation.cohort_start = read_date(v, "cohort_start");
    read(v, "cohort_days", c.validation.cohort_days);
    read(v, "lookback_days", c.validation.lookback_days);
    read(v, "split_fraction", c.validation.split_fraction);
  }
  if (j.contains("parse_mode")) {
    std::string mode;
    read(j, "parse_mode", mode);
    if (mode == "strict") {
      c.parse_mode = ParseMode::strict;
    } else if (mode == "skip") {
      c.parse_mode = ParseMode::skip;
    } else {
      throw ConfigError(fmt::format("parse_mode must be 'strict' or 'skip', got '{}'", mode));
    }
  }
  c.validate();
  return c;
}

Json to_json(const GenConfig& c) {
  Json j;
  j["n_cookies"] = c.n_cookies;
  j["window"] = {{"start", format_date(c.window.start)}, {"end", format_date(c.window.end)}};
  j["lifetime"] = {{"family", std::string(to_string(c.lifetime_family))},
                   {"shape", c.lifetime_shape},
                   {"scale", c.lifetime_scale},
                   {"extra", c.lifetime_extra}};
  j["pre_window_birth_share"] = c.pre_window_birth_share;
  j["pre_window_span_days"] = c.pre_window_span_days;
  j["activity"] = {{"alpha", c.activity_alpha}, {"beta", c.activity_beta}};
  j["impressions"] = {{"lambda", c.impressions_lambda}, {"trend", c.impressions_trend}};
  j["price"] = {{"intercept_mean", c.intercept_mean}, {"intercept_sd", c.intercept_sd}, {"pi_zero", c.pi_zero},
                {"pi_pos", c.pi_pos},                 {"pi_neg", c.pi_neg},             {"slope_min", c.slope_min},
                {"slope_max", c.slope_max},           {"noise_sd", c.noise_sd}};
  j["covariates"] = {{"video_prob", c.video_prob},         {"above_prob", c.above_prob},
                     {"unknown_fold_prob", c.unknown_fold_prob}, {"retarget_prob", c.retarget_prob},
                     {"video_premium", c.video_premium},   {"above_premium", c.above_premium},
                     {"retarget_premium", c.retarget_premium}};
  j["attributes"] = {{"country", levels_to_json(c.countries)},
                     {"device_type", levels_to_json(c.devices)},
                     {"os", levels_to_json(c.oses)},
                     {"browser", levels_to_json(c.browsers)}};
  return j;
}

GenConfig gen_config_from_json(const Json& j) {
  reject_unknown(j,
                 {"n_cookies", "window", "lifetime", "pre_window_birth_share", "pre_window_span_days", "activity",
                  "impressions", "price", "covariates", "attributes"},
                 "generator config");
  GenConfig c;
  read(j, "n_cookies", c.n_cookies);
  read(j, "pre_window_birth_share", c.pre_window_birth_share);
  read(j, "pre_window_span_days", c.pre_window_span_days);
  if (j.contains("window")) {
    const auto& w = j.at("window");
    reject_unknown(w, {"start", "end"}, "window");
    if (auto s = read_date(w, "start")) c.window.start = *s;
    if (auto e = read_date(w, "end")) c.window.end = *e;
  }
  if (j.contains("lifetime")) {
    const auto& l = j.at("lifetime");
    reject_unknown(l, {"family", "shape", "scale", "extra"}, "lifetime");
    if (l.contains("family")) {
      std::string fam;
      read(l, "family", fam);
      c.lifetime_family = parse_family(fam);
    }
    read(l, "shape", c.lifetime_shape);
    read(l, "scale", c.lifetime_scale);
    read(l, "extra", c.lifetime_extra);
  }
  if (j.contains("activity")) {
    const auto& a = j.at("activity");
    reject_unknown(a, {"alpha", "beta"}, "activity");
    read(a, "alpha", c.activity_alpha);
    read(a, "beta", c.activity_beta);
  }
  if (j.contains("impressions")) {
    const auto& i = j.at("impressions");
    reject_unknown(i, {"lambda", "trend"}, "impressions");
    read(i, "lambda", c.impressions_lambda);
    read(i, "trend", c.impressions_trend);
  }
  if (j.contains("price")) {
    const auto& p = j.at("price");
    reject_unknown(p, {"intercept_mean", "intercept_sd", "pi_zero", "pi_pos", "pi_neg", "slope_min", "slope_max", "noise_sd"},
                   "price");
    read(p, "intercept_mean", c.intercept_mean);
    read(p, "intercept_sd", c.intercept_sd);
    read(p, "pi_zero", c.pi_zero);
    read(p, "pi_pos", c.pi_pos);
    read(p, "pi_neg", c.pi_neg);
    read(p, "slope_min", c.slope_min);
    read(p, "slope_max", c.slope_max);
    read(p, "noise_sd", c.noise_sd);
  }
  if (j.contains("covariates")) {
    const auto& v = j.at("covariates");
    reject_unknown(v,
                   {"video_prob", "above_prob", "unknown_fold_prob", "retarget_prob", "video_premium", "above_premium",
                    "retarget_premium"},
                   "covariates");
    read(v, "video_prob", c.video_prob);
    read(v, "above_prob", c.above_prob);
    read(v, "unknown_fold_prob", c.unknown_fold_prob);
    read(v, "retarget_prob", c.retarget_prob);
    read(v, "video_premium", c.video_premium);
    read(v, "above_premium", c.above_premium);
    read(v, "retarget_premium", c.retarget_premium);
  }
  if (j.contains("attributes")) {
    const auto& a = j.at("attributes");
    reject_unknown(a, {"country", "device_type", "os", "browser"}, "attributes");
    if (a.contains("country")) c.countries = levels_from_json(a.at("country"), "country");
    if (a.contains("device_type")) c.devices = levels_from_json(a.at("device_type"), "device_type");
    if (a.contains("os")) c.oses = levels_from_json(a.at("os"), "os");
    if (a.contains("browser")) c.browsers = levels_from_json(a.at("browser"), "browser");
  }
  c.validate();
  return c;
}

RunConfig load_run_config(const std::string& path) {
  if (path.empty() || path == "default") return RunConfig{};
  return run_config_from_json(read_json_file(path));
}

GenConfig load_gen_config(const std::string& path) {
  if (path.empty() || path == "default") return GenConfig{};
  return gen_config_from_json(read_json_file(path));
}

RunConfig apply_env_overrides(const RunConfig& cfg, const EnvLookup& env) {
  return run_config_from_json(override_top_level(to_json(cfg), env));
}

GenConfig apply_env_overrides(const GenConfig& cfg, const EnvLookup& env) {
  return gen_config_from_json(override_top_level(to_json(cfg), env));
}

std::optional<std::string> process_env(const std::string& name) {
  if (const char* v = std::getenv(name.c_str())) return std::string(v);
  return std::nullopt;
}

std::vector<int> parse_restrictions(std::string_view text) {
  std::vector<int> out;
  if (text.empty()) return out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t next = std::min(text.find(',', pos), text.size());
    auto field = text.substr(pos, next - pos);
    while (!field.empty() && field.front() == ' ') field.remove_prefix(1);
    while (!field.empty() && field.back() == ' ') field.remove_suffix(1);
    int v = 0;
    const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
    if (field.empty() || ec != std::errc{} || ptr != field.data() + field.size() || v < 1)
      throw ConfigError(fmt::format("bad restriction '{}'", field));
    out.push_back(v);
    pos = next + 1;
  }
  return out;
}

}  // namespace cookielife
