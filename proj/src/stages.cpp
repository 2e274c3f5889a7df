#include "cookielife/stages.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

#include <fmt/format.h>

#include "cookielife/error.hpp"
#include "cookielife/panel_io.hpp"
#include "cookielife/parallel.hpp"
#include "cookielife/special.hpp"

namespace cookielife {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr std::string_view kLifetimesHeader = "cookie_id,observed_lifetime,censoring,uncensored_lifetime";
constexpr std::string_view kValuationsHeader =
    "cookie_id,class,observed_lifetime,uncensored_lifetime,observed_lvc,predicted_censored_lvc,ape,"
    "predicted_residual_lvc,uncensored_lvc";
constexpr std::string_view kStatsHeader = "statistic,n,min,p25,median,p75,max,mean,sd";

// ---------------------------------------------------------------------------
// file helpers

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError(fmt::format("cannot write '{}'", path.string()));
  out << text;
  out.flush();
  if (!out) throw DataError(fmt::format("failed writing '{}'", path.string()));
}

void write_json(const fs::path& path, const Json& j) { write_text(path, j.dump(2) + "\n"); }

std::ifstream open_input(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(fmt::format("cannot read '{}'", path.string()));
  return in;
}

Json read_json(const fs::path& path) {
  auto in = open_input(path);
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw DataError(fmt::format("cannot create output directory '{}'", dir.string()));
}

double parse_double(std::string_view field, std::string_view what) {
  if (field == "NA") return kNaN;
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (field.empty() || ec != std::errc{} || ptr != field.data() + field.size())
    throw DataError(fmt::format("bad {} '{}'", what, field));
  return v;
}

template <class T>
T parse_int(std::string_view field, std::string_view what) {
  T v{};
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (field.empty() || ec != std::errc{} || ptr != field.data() + field.size())
    throw DataError(fmt::format("bad {} '{}'", what, field));
  return v;
}

// Rounded for JSON output; null when not finite.
Json num(double v, int decimals) {
  if (!std::isfinite(v)) return nullptr;
  const double scale = std::pow(10.0, decimals);
  const double r = std::round(v * scale) / scale;
  return r == 0.0 ? 0.0 : r;
}

Json full(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

Json euros(double v) { return num(v, 6); }
Json percent(double fraction) { return num(100.0 * fraction, 3); }

struct Describe {
  std::size_t n = 0;
  double min = kNaN, p25 = kNaN, median = kNaN, p75 = kNaN, max = kNaN, mean = kNaN, sd = kNaN;
};

Describe describe(std::vector<double> v) {
  std::erase_if(v, [](double x) { return !std::isfinite(x); });
  Describe d;
  d.n = v.size();
  if (v.empty()) return d;
  std::sort(v.begin(), v.end());
  d.min = v.front();
  d.max = v.back();
  d.p25 = sorted_quantile(v, 0.25);
  d.median = sorted_quantile(v, 0.5);
  d.p75 = sorted_quantile(v, 0.75);
  d.mean = mean(v);
  d.sd = stddev(v);
  return d;
}

std::string stats_row(std::string_view name, const Describe& d) {
  return fmt::format("{},{},{},{},{},{},{},{},{}\n", name, d.n, fixed(d.min, 6), fixed(d.p25, 6), fixed(d.median, 6),
                     fixed(d.p75, 6), fixed(d.max, 6), fixed(d.mean, 6), fixed(d.sd, 6));
}

Json stats_json(const Describe& d) {
  return {{"n", d.n},           {"min", num(d.min, 6)}, {"p25", num(d.p25, 6)},   {"median", num(d.median, 6)},
          {"p75", num(d.p75, 6)}, {"max", num(d.max, 6)}, {"mean", num(d.mean, 6)}, {"sd", num(d.sd, 6)}};
}

// ---------------------------------------------------------------------------
// stage inputs

struct LoadedPanel {
  std::vector<CookieRecord> records;
  Window window;
};

LoadedPanel load_panel(const RunConfig& cfg, const fs::path& dir) {
  auto panel = open_input(dir / "panel.csv");
  auto cookies = open_input(dir / "cookies.csv");
  LoadedPanel p;
  p.records = read_panel(panel, cookies);
  if (cfg.window) {
    p.window = *cfg.window;
  } else {
    const Json meta = read_json(dir / "panel_meta.json");
    try {
      p.window = Window{parse_date(meta.at("window").at("start").get<std::string>()),
                        parse_date(meta.at("window").at("end").get<std::string>())};
    } catch (const nlohmann::json::exception& e) {
      throw SchemaError(fmt::format("panel_meta.json: {}", e.what()));
    }
  }
  return p;
}

std::map<CookieId, int> read_lifetimes(const fs::path& path) {
  auto in = open_input(path);
  expect_header(in, kLifetimesHeader, "lifetimes.csv");
  std::map<CookieId, int> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    const auto f = split_csv_line(line);
    if (f.size() != 4) throw DataError("lifetimes.csv: expected 4 fields");
    out[parse_int<CookieId>(f[0], "cookie_id")] = parse_int<int>(f[3], "uncensored_lifetime");
  }
  return out;
}

std::array<double, 3> mean_shares(const CookieRecord& r, const ModelSpec& spec) {
  std::array<double, 3> s{};
  std::size_t n = 0;
  for (const auto& d : r.days) {
    if (spec.log_price && d.avg_price_cpm <= 0.0) continue;
    s[0] += d.video_share;
    s[1] += d.above_fold_share;
    s[2] += d.retarget_share;
    ++n;
  }
  if (n)
    for (double& x : s) x /= static_cast<double>(n);
  return s;
}

void require_aligned(const std::vector<CookieRecord>& records, std::size_t n, std::string_view what) {
  if (records.size() != n) throw DataError(fmt::format("{} has {} rows for {} panel cookies", what, n, records.size()));
}

}  // namespace

// ---------------------------------------------------------------------------
// in-memory steps

PanelStageResult build_panel(const PanelBuilder& builder, const RunConfig& cfg) {
  PanelStageResult res;
  res.n_events = builder.event_count();
  res.n_cookies_in_log = builder.cookie_count();
  res.window = cfg.window ? *cfg.window : builder.observed_span();

  std::vector<CookieId> ids;
  if (cfg.sample.date) {
    if (!res.window.contains(*cfg.sample.date))
      throw ConfigError(fmt::format("sampling date {} lies outside the window", format_date(*cfg.sample.date)));
    ids = sample_cookie_ids(builder, *cfg.sample.date, cfg.sample.fraction, cfg.seed);
  } else {
    ids = builder.ids();
    if (cfg.sample.fraction < 1.0) {
      const auto k = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(cfg.sample.fraction * ids.size())));
      std::vector<CookieId> picked;
      std::mt19937_64 rng{cfg.seed};
      std::sample(ids.begin(), ids.end(), std::back_inserter(picked), k, rng);
      ids = std::move(picked);
    }
  }
  res.records = builder.build(ids, &res.missing_ids);
  if (res.records.empty()) throw DataError("the panel is empty");
  return res;
}

PanelStageResult build_panel(std::istream& impressions, const RunConfig& cfg) {
  PanelBuilder builder;
  std::size_t outside = 0;
  std::vector<RowError> errors;
  for_each_impression(
      impressions, cfg.parse_mode,
      [&](const ImpressionEvent& e) {
        if (cfg.window && !cfg.window->contains(date_of(e.timestamp))) {
          ++outside;
          return;
        }
        builder.add(e);
      },
      &errors);
  if (builder.event_count() == 0) throw DataError("no impressions inside the observation window");
  auto res = build_panel(builder, cfg);
  res.n_events_outside_window = outside;
  res.n_events += outside;
  res.row_errors = std::move(errors);
  return res;
}

SurvivalStageResult run_survival(const std::vector<CookieRecord>& records, const Window& window, const RunConfig& cfg) {
  SurvivalStageResult s;
  s.window = window;
  s.threshold_days = cfg.threshold_days;
  std::vector<LifetimeObservation> samples;
  samples.reserve(records.size());
  for (const auto& r : records) {
    s.statuses.push_back(classify_censoring(r, window, cfg.threshold_days));
    samples.push_back({static_cast<double>(r.observed_lifetime_days), s.statuses.back().censored()});
  }
  const auto eligible = eligible_for_fit(samples, cfg.survival_min_lifetime);
  s.n_eligible = eligible.size();
  if (eligible.empty())
    throw DataError(fmt::format("no cookie has an observed lifetime of at least {} days", cfg.survival_min_lifetime));

  const std::array<Family, 3> families{Family::weibull, Family::lognormal, Family::generalized_gamma};
  std::array<std::optional<SurvivalFit>, 3> fits;
  std::array<std::string, 3> errors;
  std::array<std::exception_ptr, 3> raised;
  parallel_for(3, cfg.threads, [&](std::size_t i) {
    try {
      fits[i] = fit_survival(eligible, families[i]);
    } catch (const std::exception& e) {
      errors[i] = e.what();
      raised[i] = std::current_exception();
    }
  });
  for (std::size_t i = 0; i < 3; ++i) {
    if (fits[i]) {
      s.fits.push_back(*fits[i]);
    } else {
      s.failures.emplace_back(families[i], errors[i]);
    }
  }
  // The two-parameter families are required and compete for the uncensoring;
  // the generalized gamma is reported for comparison only.
  if (!fits[0]) std::rethrow_exception(raised[0]);
  if (!fits[1]) std::rethrow_exception(raised[1]);
  const std::array<SurvivalFit, 2> candidates{*fits[0], *fits[1]};
  s.selected = select_model(candidates);
  s.uncensored = uncensor_lifetimes(records, s.selected, s.statuses);
  return s;
}

RegressionStageResult run_regressions(const std::vector<CookieRecord>& records, const RunConfig& cfg) {
  const ModelSpec spec = ModelSpec::from_id(cfg.model);
  RegressionStageResult r;
  r.fits.resize(records.size());
  r.quantities.resize(records.size());
  parallel_for(records.size(), cfg.threads, [&](std::size_t i) {
    r.fits[i] = fit_value_model(records[i], spec, cfg.alpha);
    r.quantities[i] = fit_quantity_model(records[i]);
  });
  return r;
}

SimulationStageResult run_simulation(const std::vector<CookieRecord>& records, const std::vector<ValueModelFit>& fits,
                                     const std::vector<QuantityFit>& quantities,
                                     const std::map<CookieId, int>& uncensored, const RunConfig& cfg) {
  require_aligned(records, fits.size(), "fits");
  require_aligned(records, quantities.size(), "quantity fits");
  SimulationStageResult sim;
  sim.winsorized = fits;
  winsorize_fits(sim.winsorized, cfg.winsor_q);

  std::vector<CookieValueInput> inputs(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (sim.winsorized[i].cookie_id != records[i].cookie_id)
      throw DataError(fmt::format("fit for cookie {} is out of order", sim.winsorized[i].cookie_id));
    const auto it = uncensored.find(records[i].cookie_id);
    if (it == uncensored.end()) throw DataError(fmt::format("no uncensored lifetime for cookie {}", records[i].cookie_id));
    inputs[i] = {&records[i], sim.winsorized[i], quantities[i], it->second};
  }
  sim.valuations.resize(inputs.size());
  parallel_for(inputs.size(), cfg.threads,
               [&](std::size_t i) { sim.valuations[i] = valuation_rows(inputs[i], cfg.revenue_divisor); });

  for (const int L : cfg.restrictions) {
    const auto outcomes = simulate_policy(inputs, L, cfg.revenue_divisor, cfg.threads);
    sim.reports.push_back(
        aggregate_policy(outcomes, L, BootstrapOptions{cfg.bootstrap_reps, cfg.seed, cfg.threads}, cfg.market));
  }
  return sim;
}

ValidationReport run_validation(const std::vector<CookieRecord>& records, const Window& window, const RunConfig& cfg) {
  const Date start = cfg.validation.cohort_start ? *cfg.validation.cohort_start
                                                 : add_days(window.start, cfg.validation.lookback_days);
  const auto cohort = select_newborn_cohort(records, window, start, cfg.validation.cohort_days,
                                            cfg.validation.lookback_days);
  if (cohort.empty())
    throw DataError(fmt::format("no cookie was born between {} and {}", format_date(start),
                                format_date(add_days(start, cfg.validation.cohort_days - 1))));
  const int horizon = days_between(start, window.end) + 1;
  const int split = std::max(1, static_cast<int>(std::llround(cfg.validation.split_fraction * horizon)));
  return validate_holdout(cohort, split, cfg.survival_min_lifetime);
}

// ---------------------------------------------------------------------------
// serializers

namespace {

Json estimate_json(const ParamEstimate& p) {
  return {{"value", full(p.value)}, {"se", full(p.se)}, {"ci95", {full(p.ci_low), full(p.ci_high)}}};
}

Json fit_json(const SurvivalFit& f) {
  Json j;
  j["family"] = std::string(to_string(f.family));
  j["shape"] = estimate_json(f.shape);
  j["scale"] = estimate_json(f.scale);
  j["extra"] = f.extra ? estimate_json(*f.extra) : Json(nullptr);
  j["loglik"] = full(f.loglik);
  j["aic"] = full(f.aic);
  j["bic"] = full(f.bic);
  j["n"] = f.n;
  j["n_params"] = f.n_params;
  j["iterations"] = f.iterations;
  j["mean_lifetime"] = full(mean_lifetime(f.distribution()));
  return j;
}

Json metrics_json(const PredictionMetrics& m) {
  return {{"uncensored_mean", {{"mean", num(m.uncensored_mean.mean, 3)},
                               {"ci95", {num(m.uncensored_mean.low, 3), num(m.uncensored_mean.high, 3)}}}},
          {"r2", num(m.r2, 6)},
          {"mae", num(m.mae, 6)},
          {"rmse", num(m.rmse, 6)},
          {"mape", num(m.mape, 6)}};
}

Json group_json(const GroupSummary& g) {
  return {{"n", g.n},
          {"share", percent(g.share)},
          {"avg_lvc", euros(g.avg_lvc)},
          {"avg_loss", euros(g.avg_loss)},
          {"loss_ci", {euros(g.loss_ci.low), euros(g.loss_ci.high)}},
          {"pct_loss", percent(g.pct_loss)},
          {"pct_ci", {percent(g.pct_ci.low), percent(g.pct_ci.high)}}};
}

std::string group_csv(const GroupSummary& g) {
  return fmt::format("{},{},{},{},{},{},{},{},{}", g.n, fixed(100.0 * g.share, 3), fixed(g.avg_lvc, 6),
                     fixed(g.avg_loss, 6), fixed(g.loss_ci.low, 6), fixed(g.loss_ci.high, 6),
                     fixed(100.0 * g.pct_loss, 3), fixed(100.0 * g.pct_ci.low, 3), fixed(100.0 * g.pct_ci.high, 3));
}

std::string millions(double euros_value) {
  if (!std::isfinite(euros_value)) return "NA";
  return fmt::format("{}", round_half_up(euros_value / 1e6));
}

Json validation_json(const ValidationReport& v) {
  Json j;
  j["status"] = "ok";
  j["n"] = v.n;
  j["split_days"] = v.split_days;
  j["censored_at_split"] = v.censored_at_split;
  j["observed_mean"] = {{"mean", num(v.observed_mean.mean, 3)},
                        {"ci95", {num(v.observed_mean.low, 3), num(v.observed_mean.high, 3)}}};
  Json fams = Json::array();
  for (const auto& f : v.families) {
    Json fj;
    fj["family"] = std::string(to_string(f.family));
    if (!f.fit) {
      fj["error"] = f.error;
    } else {
      fj["fit"] = fit_json(*f.fit);
      fj["mean_rlt"] = metrics_json(f.mean_rlt);
      fj["median_rlt"] = metrics_json(f.median_rlt);
    }
    fams.push_back(std::move(fj));
  }
  j["families"] = std::move(fams);
  return j;
}

}  // namespace

Json survival_json(const SurvivalStageResult& s, std::size_t n_cookies) {
  Json j;
  j["window"] = {{"start", format_date(s.window.start)}, {"end", format_date(s.window.end)}};
  j["threshold_days"] = s.threshold_days;
  j["n_cookies"] = n_cookies;
  j["n_eligible"] = s.n_eligible;
  Json fits = Json::array();
  for (const auto& f : s.fits) fits.push_back(fit_json(f));
  for (const auto& [fam, err] : s.failures) fits.push_back({{"family", std::string(to_string(fam))}, {"error", err}});
  j["fits"] = std::move(fits);
  j["selected_family"] = std::string(to_string(s.selected.family));
  std::size_t left = 0, right = 0, both = 0;
  for (const auto& st : s.statuses) {
    left += st.kind == CensoringKind::left;
    right += st.kind == CensoringKind::right;
    both += st.kind == CensoringKind::both;
  }
  const double n = static_cast<double>(std::max<std::size_t>(1, s.statuses.size()));
  j["censored_share"] = percent(static_cast<double>(left + right + both) / n);
  j["censored_breakdown"] = {{"left", left}, {"right", right}, {"both", both}};
  double uncensored = 0.0;
  for (const auto& [id, T] : s.uncensored) uncensored += T;
  j["mean_uncensored_lifetime"] =
      s.uncensored.empty() ? Json(nullptr) : num(uncensored / static_cast<double>(s.uncensored.size()), 3);
  return j;
}

Json policy_json(const std::vector<PolicyReport>& reports) {
  Json a = Json::array();
  for (const auto& r : reports) {
    Json j;
    j["limit_days"] = r.limit_days;
    j["n_cookies"] = r.n_cookies;
    j["n_survived"] = r.n_survived;
    j["survived_share"] = percent(r.survived_share);
    j["cond2_given_1"] = percent(r.cond2_given_1);
    j["cond3_given_1"] = percent(r.cond3_given_1);
    j["groups"] = {{"pos", group_json(r.pos)}, {"neg", group_json(r.neg)}, {"all", group_json(r.all)}};
    j["market"] = {{"revenue_base", full(r.market.revenue_base)},
                   {"users", full(r.market.users)},
                   {"affected_revenue", euros(r.market.affected_revenue)},
                   {"affected_ci", {euros(r.market.affected_ci.low), euros(r.market.affected_ci.high)}},
                   {"per_user", euros(r.market.loss_per_user)},
                   {"per_user_ci", {euros(r.market.per_user_ci.low), euros(r.market.per_user_ci.high)}}};
    a.push_back(std::move(j));
  }
  return a;
}

void write_policy_csv(std::ostream& out, const std::vector<PolicyReport>& reports) {
  std::string header = "limit_days,n_cookies,n_survived,survived_pct,cond2_given_1_pct,cond3_given_1_pct";
  for (const char* g : {"pos", "neg", "all"})
    header += fmt::format(
        ",{0}_n,{0}_share_pct,{0}_avg_lvc,{0}_avg_loss,{0}_loss_ci_low,{0}_loss_ci_high,{0}_pct_loss,{0}_pct_ci_low,"
        "{0}_pct_ci_high",
        g);
  header +=
      ",revenue_base_millions,users_millions,affected_revenue_millions,affected_ci_low_millions,"
      "affected_ci_high_millions,loss_per_user,per_user_ci_low,per_user_ci_high";
  out << header << '\n';
  for (const auto& r : reports) {
    out << fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n", r.limit_days, r.n_cookies,
                       r.n_survived, fixed(100.0 * r.survived_share, 3), fixed(100.0 * r.cond2_given_1, 3),
                       fixed(100.0 * r.cond3_given_1, 3), group_csv(r.pos), group_csv(r.neg), group_csv(r.all),
                       millions(r.market.revenue_base), millions(r.market.users), millions(r.market.affected_revenue),
                       millions(r.market.affected_ci.low), millions(r.market.affected_ci.high),
                       fixed(r.market.loss_per_user, 6), fixed(r.market.per_user_ci.low, 6),
                       fixed(r.market.per_user_ci.high, 6));
  }
}

void write_fits_csv(std::ostream& out, const std::vector<ValueModelFit>& fits) {
  out << kFitsHeader << '\n';
  for (const auto& f : fits) {
    out << fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n", f.cookie_id, f.model, f.n_obs, exact(f.intercept),
                       exact(f.slope), exact(f.slope_se), exact(f.slope_p), exact(f.beta_cov[0]), exact(f.beta_cov[1]),
                       exact(f.beta_cov[2]), exact(f.r2), exact(f.aic), exact(f.bic), class_code(f.effect_class));
  }
}

std::vector<ValueModelFit> read_fits_csv(std::istream& in) {
  expect_header(in, kFitsHeader, "fits.csv");
  std::vector<ValueModelFit> out;
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto f = split_csv_line(line);
    if (f.size() != 14) throw DataError(fmt::format("fits.csv line {}: expected 14 fields", line_no));
    try {
      ValueModelFit v;
      v.cookie_id = parse_int<CookieId>(f[0], "cookie_id");
      v.model = parse_int<int>(f[1], "model");
      const ModelSpec spec = ModelSpec::from_id(v.model);
      v.log_price = spec.log_price;
      v.n_obs = parse_int<std::size_t>(f[2], "n_obs");
      v.intercept = parse_double(f[3], "intercept");
      v.slope = parse_double(f[4], "slope");
      v.slope_se = parse_double(f[5], "slope_se");
      v.slope_p = parse_double(f[6], "slope_p");
      for (std::size_t j = 0; j < 3; ++j) v.beta_cov[j] = parse_double(f[7 + j], "covariate coefficient");
      v.slope2 = kNaN;
      v.r2 = parse_double(f[10], "r2");
      v.aic = parse_double(f[11], "aic");
      v.bic = parse_double(f[12], "bic");
      v.effect_class = parse_class_code(f[13]);
      out.push_back(std::move(v));
    } catch (const DataError& e) {
      throw DataError(fmt::format("fits.csv line {}: {}", line_no, e.what()));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// file stages

void stage_gen(const GenConfig& gen, std::uint64_t seed, int threads, const fs::path& out) {
  ensure_dir(out);
  std::ostringstream csv;
  const GroundTruth truth = generate_csv(gen, seed, csv, threads);
  write_text(out / "impressions.csv", csv.str());

  Json cookies = Json::array();
  std::array<std::size_t, 3> classes{};
  std::size_t emitted = 0;
  for (const auto& c : truth.cookies) {
    emitted += c.emitted;
    ++classes[c.effect_class == EffectClass::positive ? 0 : c.effect_class == EffectClass::negative ? 1 : 2];
    cookies.push_back({{"cookie_id", c.cookie_id},
                       {"birth", format_date(c.birth)},
                       {"death", format_date(c.death)},
                       {"lifetime", c.lifetime},
                       {"emitted", c.emitted},
                       {"intercept", c.intercept},
                       {"slope", c.slope},
                       {"class", std::string(class_code(c.effect_class))},
                       {"activity_prob", c.activity_prob},
                       {"impression_rate", c.impression_rate},
                       {"impression_trend", c.impression_trend},
                       {"country", c.attrs.country},
                       {"device_type", c.attrs.device_type},
                       {"os", c.attrs.os},
                       {"browser", c.attrs.browser}});
  }
  Json expected = Json::array();
  for (const int L : kDefaultRestrictions) {
    double total = 0.0;
    for (const auto& c : truth.cookies)
      if (c.emitted) total += analytic_expected_loss(c, L);
    expected.push_back({{"limit_days", L}, {"total_loss", total}});
  }
  Json j;
  j["seed"] = seed;
  j["n_cookies"] = truth.cookies.size();
  j["n_emitted"] = emitted;
  j["class_counts"] = {{"pos", classes[0]}, {"neg", classes[1]}, {"zero", classes[2]}};
  j["analytic_expected_loss"] = std::move(expected);
  j["cookies"] = std::move(cookies);
  write_json(out / "truth.json", j);
  write_json(out / "gen_config.json", {{"seed", seed}, {"config", to_json(gen)}});
}

void stage_panel(const RunConfig& cfg, const fs::path& impressions, const fs::path& out) {
  const fs::path file = fs::is_directory(impressions) ? impressions / "impressions.csv" : impressions;
  auto in = open_input(file);
  const PanelStageResult p = build_panel(in, cfg);
  ensure_dir(out);

  std::ostringstream panel, cookies;
  write_panel_csv(panel, p.records);
  write_cookies_csv(cookies, p.records);
  write_text(out / "panel.csv", panel.str());
  write_text(out / "cookies.csv", cookies.str());

  Json meta;
  meta["window"] = {{"start", format_date(p.window.start)}, {"end", format_date(p.window.end)}};
  meta["window_source"] = cfg.window ? "config" : "log";
  meta["n_events"] = p.n_events;
  meta["n_events_outside_window"] = p.n_events_outside_window;
  meta["n_cookies_in_log"] = p.n_cookies_in_log;
  meta["sample"] = {{"date", cfg.sample.date ? Json(format_date(*cfg.sample.date)) : Json(nullptr)},
                    {"fraction", cfg.sample.fraction},
                    {"seed", cfg.seed}};
  meta["n_cookies"] = p.records.size();
  meta["missing_ids"] = p.missing_ids;
  Json errs = Json::array();
  for (std::size_t i = 0; i < p.row_errors.size() && i < 20; ++i)
    errs.push_back({{"line", p.row_errors[i].line}, {"message", p.row_errors[i].message}});
  meta["row_errors"] = {{"count", p.row_errors.size()}, {"first", std::move(errs)}};
  write_json(out / "panel_meta.json", meta);

  std::vector<double> cols[8];
  for (const auto& r : p.records) {
    const auto s = lifetime_stats(r);
    cols[0].push_back(s.lifetime_days);
    cols[1].push_back(s.active_days);
    cols[2].push_back(s.activity_share);
    cols[3].push_back(static_cast<double>(s.impressions));
    cols[4].push_back(s.impressions_per_day);
    cols[5].push_back(s.value_per_day);
    cols[6].push_back(s.mean_cpm);
    cols[7].push_back(s.observed_lvc);
  }
  const char* names[8] = {"observed_lifetime_days", "active_days", "activity_share", "impressions",
                          "impressions_per_day",    "value_per_day", "mean_cpm",     "observed_lvc"};
  std::string summary = std::string(kStatsHeader) + "\n";
  for (int i = 0; i < 8; ++i) summary += stats_row(names[i], describe(cols[i]));
  write_text(out / "panel_summary.csv", summary);
}

void stage_survival(const RunConfig& cfg, const fs::path& in, const fs::path& out) {
  const LoadedPanel p = load_panel(cfg, in);
  const SurvivalStageResult s = run_survival(p.records, p.window, cfg);
  ensure_dir(out);
  write_json(out / "survival.json", survival_json(s, p.records.size()));
  std::string csv = std::string(kLifetimesHeader) + "\n";
  for (std::size_t i = 0; i < p.records.size(); ++i) {
    const auto& r = p.records[i];
    csv += fmt::format("{},{},{},{}\n", r.cookie_id, r.observed_lifetime_days, to_string(s.statuses[i].kind),
                       s.uncensored.at(r.cookie_id));
  }
  write_text(out / "lifetimes.csv", csv);
}

void stage_regress(const RunConfig& cfg, const fs::path& in, const fs::path& out) {
  const LoadedPanel p = load_panel(cfg, in);
  const RegressionStageResult reg = run_regressions(p.records, cfg);
  ensure_dir(out);

  std::ostringstream fits;
  write_fits_csv(fits, reg.fits);
  write_text(out / "fits.csv", fits.str());

  // Class table: raw and winsorized parameter means per class.
  auto wins = reg.fits;
  winsorize_fits(wins, cfg.winsor_q);
  struct Row {
    std::string name;
    std::vector<std::size_t> idx;
  };
  std::vector<Row> rows{{"pos", {}}, {"neg", {}}, {"zero", {}}, {"na", {}}, {"significant_zero", {}}, {"all", {}}};
  for (std::size_t i = 0; i < reg.fits.size(); ++i) {
    const auto& f = reg.fits[i];
    rows[static_cast<std::size_t>(f.effect_class)].idx.push_back(i);
    if (f.significant_zero) rows[4].idx.push_back(i);
    rows[5].idx.push_back(i);
  }
  std::string summary = "class,n,share_pct,mean_intercept,mean_slope,mean_intercept_winsorized,mean_slope_winsorized\n";
  Json summary_json = Json::array();
  const double N = static_cast<double>(reg.fits.size());
  for (const auto& row : rows) {
    std::vector<double> b0, b1, w0, w1;
    for (const auto i : row.idx) {
      if (!reg.fits[i].estimable()) continue;
      b0.push_back(reg.fits[i].intercept);
      b1.push_back(reg.fits[i].slope);
      w0.push_back(wins[i].intercept);
      w1.push_back(wins[i].slope);
    }
    const auto m = [](const std::vector<double>& v) { return v.empty() ? kNaN : mean(v); };
    summary += fmt::format("{},{},{},{},{},{},{}\n", row.name, row.idx.size(), fixed(100.0 * row.idx.size() / N, 3),
                           fixed(m(b0), 6), fixed(m(b1), 6), fixed(m(w0), 6), fixed(m(w1), 6));
    summary_json.push_back({{"class", row.name},
                            {"n", row.idx.size()},
                            {"share", percent(row.idx.size() / N)},
                            {"mean_intercept", num(m(b0), 6)},
                            {"mean_slope", num(m(b1), 6)},
                            {"mean_intercept_winsorized", num(m(w0), 6)},
                            {"mean_slope_winsorized", num(m(w1), 6)}});
  }
  write_text(out / "fits_summary.csv", summary);

  // Out-of-sample comparison of the five specifications.
  std::string quality = "model,n_cookies,metric,min,p25,median,p75,max,mean,sd\n";
  Json quality_json = Json::array();
  for (int id = 1; id <= 5; ++id) {
    const ModelSpec spec = ModelSpec::from_id(id);
    std::vector<std::optional<QualityMetrics>> q(p.records.size());
    parallel_for(p.records.size(), cfg.threads, [&](std::size_t i) { q[i] = prediction_quality(p.records[i], spec); });
    std::vector<double> r2, mae, rmse, mape;
    for (const auto& m : q) {
      if (!m) continue;
      r2.push_back(m->r2);
      mae.push_back(m->mae);
      rmse.push_back(m->rmse);
      mape.push_back(m->mape);
    }
    Json mj = {{"model", id}, {"n_cookies", r2.size()}};
    for (const auto& [name, values] : {std::pair<const char*, const std::vector<double>*>{"r2", &r2},
                                       {"mae", &mae},
                                       {"rmse", &rmse},
                                       {"mape", &mape}}) {
      const Describe d = describe(*values);
      quality += fmt::format("{},{},{},{},{},{},{},{},{},{}\n", id, r2.size(), name, fixed(d.min, 6), fixed(d.p25, 6),
                             fixed(d.median, 6), fixed(d.p75, 6), fixed(d.max, 6), fixed(d.mean, 6), fixed(d.sd, 6));
      mj[name] = stats_json(d);
    }
    quality_json.push_back(std::move(mj));
  }
  write_text(out / "quality.csv", quality);

  std::map<CookieId, UserAttrs> attrs;
  for (const auto& r : p.records) attrs[r.cookie_id] = r.user_attrs;
  const auto desc = describe_parameters(reg.fits, attrs);
  Json dj = Json::array();
  for (const auto& d : desc) {
    Json rows_json = Json::array();
    for (const auto& row : d.rows)
      rows_json.push_back({{"term", row.term}, {"estimate", full(row.estimate)}, {"se", full(row.se)}, {"p", full(row.p_value)}});
    dj.push_back({{"dependent", d.dependent},
                  {"n", d.n},
                  {"coefficients", std::move(rows_json)},
                  {"dropped", d.dropped},
                  {"r2", full(d.r2)},
                  {"adj_r2", full(d.adj_r2)}});
  }
  write_json(out / "describe.json", dj);
  write_json(out / "regress_summary.json", {{"model", cfg.model}, {"classes", summary_json}, {"quality", quality_json}});
}

void stage_simulate(const RunConfig& cfg, const fs::path& in, const fs::path& out) {
  const LoadedPanel p = load_panel(cfg, in);
  auto fits_in = open_input(in / "fits.csv");
  std::vector<ValueModelFit> fits = read_fits_csv(fits_in);
  const auto uncensored = read_lifetimes(in / "lifetimes.csv");
  require_aligned(p.records, fits.size(), "fits.csv");

  std::vector<QuantityFit> quantities(p.records.size());
  for (std::size_t i = 0; i < p.records.size(); ++i) {
    auto& f = fits[i];
    if (f.cookie_id != p.records[i].cookie_id)
      throw DataError(fmt::format("fits.csv row {} is cookie {}, panel has {}", i + 1, f.cookie_id, p.records[i].cookie_id));
    if (f.model == 5)
      throw ConfigError("model 5 fits carry a day-squared term that fits.csv does not store; simulate models 1-4");
    f.mean_shares = mean_shares(p.records[i], ModelSpec::from_id(f.model));
    f.significant_zero = is_significant_zero(f, cfg.alpha);
    quantities[i] = fit_quantity_model(p.records[i]);
  }
  const SimulationStageResult sim = run_simulation(p.records, fits, quantities, uncensored, cfg);
  ensure_dir(out);

  std::string csv = std::string(kValuationsHeader) + "\n";
  for (std::size_t i = 0; i < sim.valuations.size(); ++i) {
    const auto& v = sim.valuations[i];
    csv += fmt::format("{},{},{},{},{},{},{},{},{}\n", v.cookie_id, class_code(fits[i].effect_class),
                       v.observed_lifetime, v.uncensored_lifetime, fixed(v.observed_lvc, 6),
                       fixed(v.predicted_censored_lvc, 6), fixed(v.ape, 6), fixed(v.predicted_residual_lvc, 6),
                       fixed(v.uncensored_lvc, 6));
  }
  write_text(out / "valuations.csv", csv);
  write_json(out / "policy_report.json", policy_json(sim.reports));
  std::ostringstream pcsv;
  write_policy_csv(pcsv, sim.reports);
  write_text(out / "policy_report.csv", pcsv.str());
}

bool stage_validate(const RunConfig& cfg, const fs::path& in, const fs::path& out, bool allow_empty) {
  const LoadedPanel p = load_panel(cfg, in);
  Json j;
  bool ok = true;
  try {
    j = validation_json(run_validation(p.records, p.window, cfg));
  } catch (const DataError& e) {
    if (!allow_empty) throw;
    j = {{"status", "skipped"}, {"reason", e.what()}};
    ok = false;
  } catch (const ConfigError& e) {
    if (!allow_empty) throw;
    j = {{"status", "skipped"}, {"reason", e.what()}};
    ok = false;
  }
  ensure_dir(out);
  write_json(out / "validation.json", j);
  return ok;
}

void stage_report(const RunConfig& cfg, const fs::path& in, const fs::path& out) {
  const LoadedPanel p = load_panel(cfg, in);
  const Json meta = read_json(in / "panel_meta.json");
  const Json survival = read_json(in / "survival.json");
  const Json regress = read_json(in / "regress_summary.json");
  const Json policy = read_json(in / "policy_report.json");
  const Json validation = fs::exists(in / "validation.json") ? read_json(in / "validation.json")
                                                              : Json{{"status", "skipped"}, {"reason", "not run"}};
  const auto lifetimes = read_lifetimes(in / "lifetimes.csv");

  std::map<CookieId, double> uncensored_lvc;
  {
    auto vin = open_input(in / "valuations.csv");
    expect_header(vin, kValuationsHeader, "valuations.csv");
    std::string line;
    while (std::getline(vin, line)) {
      if (line.empty() || line == "\r") continue;
      const auto f = split_csv_line(line);
      if (f.size() != 9) throw DataError("valuations.csv: expected 9 fields");
      uncensored_lvc[parse_int<CookieId>(f[0], "cookie_id")] = parse_double(f[8], "uncensored_lvc");
    }
  }
  if (lifetimes.size() != p.records.size() || uncensored_lvc.size() != p.records.size())
    throw DataError("stage outputs disagree on the number of cookies");
  for (const auto& r : policy) {
    if (r.at("n_cookies").get<std::size_t>() != p.records.size())
      throw DataError("policy report denominators differ from the panel size");
  }

  std::vector<double> cols[10];
  for (const auto& r : p.records) {
    const auto s = lifetime_stats(r);
    const auto lt = lifetimes.find(r.cookie_id);
    const auto lv = uncensored_lvc.find(r.cookie_id);
    if (lt == lifetimes.end() || lv == uncensored_lvc.end())
      throw DataError(fmt::format("cookie {} missing from stage outputs", r.cookie_id));
    cols[0].push_back(s.lifetime_days);
    cols[1].push_back(lt->second);
    cols[2].push_back(s.active_days);
    cols[3].push_back(s.activity_share);
    cols[4].push_back(static_cast<double>(s.impressions));
    cols[5].push_back(s.impressions_per_day);
    cols[6].push_back(s.value_per_day);
    cols[7].push_back(s.mean_cpm);
    cols[8].push_back(s.observed_lvc);
    cols[9].push_back(lv->second);
  }
  const char* names[10] = {"observed_lifetime_days", "uncensored_lifetime_days", "active_days", "activity_share",
                           "impressions",            "impressions_per_day",      "value_per_day", "mean_cpm",
                           "observed_lvc",           "uncensored_lvc"};
  std::string table3 = std::string(kStatsHeader) + "\n";
  Json table3_json = Json::object();
  for (int i = 0; i < 10; ++i) {
    const Describe d = describe(cols[i]);
    table3 += stats_row(names[i], d);
    table3_json[names[i]] = stats_json(d);
  }
  ensure_dir(out);
  write_text(out / "table3.csv", table3);

  Json report;
  // The thread count does not affect results and is left out so that reports
  // are byte-identical across it.
  report["config"] = to_json(cfg);
  report["config"].erase("threads");
  report["panel"] = {{"meta", meta}, {"summary", table3_json}};
  report["survival"] = survival;
  report["value_models"] = regress;
  report["policy"] = policy;
  report["validation"] = validation;
  // Reaching this point means every cross-file check above passed.
  report["consistency"] = {{"ok", true},
                           {"n_cookies", p.records.size()},
                           {"checks", {"lifetimes_cover_panel", "valuations_cover_panel", "policy_denominators"}}};
  write_json(out / "report.json", report);
}

void stage_all(const RunConfig& cfg, const fs::path& impressions, const fs::path& out) {
  stage_panel(cfg, impressions, out);
  stage_survival(cfg, out, out);
  stage_regress(cfg, out, out);
  stage_simulate(cfg, out, out);
  stage_validate(cfg, out, out, true);
  stage_report(cfg, out, out);
}

}  // namespace cookielife
