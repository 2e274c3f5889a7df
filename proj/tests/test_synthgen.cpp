#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <sstream>

#include "cookielife/config.hpp"
#include "cookielife/error.hpp"
#include "cookielife/parallel.hpp"
#include "cookielife/policysim.hpp"
#include "cookielife/synthgen.hpp"
#include "oracles.hpp"

using namespace cookielife;

namespace {

GenConfig small_config() {
  GenConfig cfg;
  cfg.n_cookies = 300;
  cfg.lifetime_shape = 1.5;
  cfg.lifetime_scale = 60.0;
  return cfg;
}

std::vector<CookieRecord> records_of(const std::vector<ImpressionEvent>& events) {
  std::vector<CookieId> ids;
  for (const auto& e : events) ids.push_back(e.cookie_id);
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return build_daily_panel(events, ids).records;
}

}  // namespace

TEST_CASE("output is reproducible and independent of threads") {
  const auto cfg = small_config();
  std::ostringstream a, b, c, d;
  const auto ta = generate_csv(cfg, 7, a, 1);
  generate_csv(cfg, 7, b, 1);
  generate_csv(cfg, 7, c, 4);
  generate_csv(cfg, 8, d, 1);
  CHECK(a.str() == b.str());
  CHECK(a.str() == c.str());
  CHECK(a.str() != d.str());
  REQUIRE(ta.cookies.size() == 300);
  for (std::size_t i = 0; i < ta.cookies.size(); ++i) CHECK(ta.cookies[i].cookie_id == 100000000 + i);

  std::istringstream in(a.str());
  const auto parsed = parse_impressions(in);
  CHECK(parsed.errors.empty());
  CHECK(!parsed.events.empty());
}

TEST_CASE("events stay inside the window") {
  auto cfg = small_config();
  cfg.pre_window_birth_share = 0.5;
  cfg.window = {parse_date("2015-01-01"), parse_date("2015-06-30")};
  std::size_t left_truncated = 0;
  const auto truth = generate(cfg, 3, [&](const GeneratedCookie& g) {
    for (const auto& e : g.events) {
      CHECK(cfg.window.contains(date_of(e.timestamp)));
      CHECK(date_of(e.timestamp) >= g.truth.birth);
      CHECK(date_of(e.timestamp) <= g.truth.death);
    }
    if (g.truth.birth < cfg.window.start && g.truth.emitted) ++left_truncated;
    if (g.truth.emitted && g.truth.birth >= cfg.window.start)
      CHECK(date_of(g.events.front().timestamp) == g.truth.birth);
  });
  CHECK(left_truncated > 0);
}

TEST_CASE("lifetimes follow the configured law") {
  GenConfig cfg;
  for (const auto& [shape, scale] : {std::pair{0.979, 463.321}, std::pair{2.0, 80.0}}) {
    cfg.lifetime_shape = shape;
    cfg.lifetime_scale = scale;
    auto rng = stream_rng(11, 0);
    const std::size_t n = 5000;
    std::vector<int> draws(n);
    for (auto& t : draws) t = draw_lifetime(cfg, rng);
    std::sort(draws.begin(), draws.end());
    CHECK(draws.front() >= 1);
    // With whole-day ceilings P(T <= k) equals the continuous CDF at k.
    double D = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (i + 1 < n && draws[i + 1] == draws[i]) continue;
      const double ecdf = static_cast<double>(i + 1) / n;
      D = std::max(D, std::abs(ecdf - (1.0 - oracle::weibull_s(draws[i], shape, scale))));
    }
    CHECK(D < 1.628 / std::sqrt(static_cast<double>(n)));
  }
}

TEST_CASE("true classes follow the mixture") {
  GenConfig cfg;
  cfg.n_cookies = 13000;
  cfg.lifetime_shape = 2.0;
  cfg.lifetime_scale = 120.0;
  cfg.pre_window_birth_share = 0.0;
  cfg.impressions_lambda = 0.5;
  std::array<std::size_t, 3> counts{};
  std::size_t n = 0;
  generate(cfg, 5, [&](const GeneratedCookie& g) {
    std::set<int> days;
    for (const auto& e : g.events) days.insert(static_cast<int>(date_of(e.timestamp).time_since_epoch().count()));
    if (days.size() < 30) return;
    ++n;
    ++counts[static_cast<std::size_t>(g.truth.effect_class)];
  });
  REQUIRE(n >= 10000);
  CHECK(std::abs(counts[0] / double(n) - cfg.pi_pos) < 0.03);
  CHECK(std::abs(counts[1] / double(n) - cfg.pi_neg) < 0.03);
  CHECK(std::abs(counts[2] / double(n) - cfg.pi_zero) < 0.03);
}

TEST_CASE("flat prices are classified as zero at the test size") {
  auto cfg = small_config();
  cfg.n_cookies = 2500;
  cfg.pi_zero = 1.0;
  cfg.pi_pos = cfg.pi_neg = 0.0;
  std::vector<ImpressionEvent> events;
  generate(cfg, 21, [&](const GeneratedCookie& g) { events.insert(events.end(), g.events.begin(), g.events.end()); });
  std::size_t fitted = 0, zero = 0;
  for (const auto& r : records_of(events)) {
    const auto fit = fit_value_model(r, ModelSpec::from_id(2));
    if (!fit.estimable() || fit.n_obs < 10) continue;
    ++fitted;
    zero += fit.effect_class == EffectClass::zero;
  }
  REQUIRE(fitted > 1000);
  CHECK(zero / double(fitted) > 0.975);
}

TEST_CASE("a noiseless generated cookie reproduces the desk arithmetic") {
  GenConfig cfg;
  cfg.n_cookies = 1;
  cfg.window = {parse_date("2015-01-01"), parse_date("2015-12-31")};
  cfg.pre_window_birth_share = 0.0;
  cfg.lifetime_shape = 1e4;
  cfg.lifetime_scale = 21.9;
  cfg.activity_alpha = 1e6;
  cfg.activity_beta = 1e-6;
  cfg.impressions_lambda = 1.0;
  cfg.intercept_mean = 80.0;
  cfg.intercept_sd = 0.0;
  cfg.pi_pos = 1.0;
  cfg.pi_zero = cfg.pi_neg = 0.0;
  cfg.slope_min = cfg.slope_max = 10.0;
  cfg.noise_sd = 0.0;
  cfg.video_prob = cfg.retarget_prob = 0.0;
  cfg.above_premium = 0.0;
  for (auto* levels : {&cfg.countries, &cfg.devices, &cfg.oses, &cfg.browsers})
    *levels = {{"Unknown", 1.0, 0.0}};

  std::vector<ImpressionEvent> events;
  const auto truth = generate(cfg, 1, [&](const GeneratedCookie& g) { events = g.events; });
  const auto& t = truth.cookies.at(0);
  REQUIRE(t.lifetime == 22);
  REQUIRE(t.death <= cfg.window.end);
  const auto records = records_of(events);
  REQUIRE(records.size() == 1);
  const auto& r = records[0];
  CHECK(r.observed_lifetime_days == 22);
  CHECK(r.activity_share == 1.0);

  CookieValueInput in;
  in.record = &r;
  in.fit = fit_value_model(r, ModelSpec::from_id(2));
  in.quantity = fit_quantity_model(r);
  in.uncensored_lifetime = 22;
  CHECK(std::abs(in.fit.intercept - 80.0) < 1e-9);
  CHECK(std::abs(in.fit.slope - 10.0) < 1e-9);
  CHECK(in.fit.effect_class == EffectClass::positive);

  // Per impression the generated cookie is cookie A; scale out its volume.
  const double n_bar = in.quantity.n_bar;
  CHECK(value_lifetime(in, std::nullopt) / n_bar == doctest::Approx(4.29));
  CHECK(value_lifetime(in, 10) / n_bar == doctest::Approx(2.89));
  const auto out = simulate_policy(std::span<const CookieValueInput>(&in, 1), 10);
  CHECK(out[0].loss / n_bar == doctest::Approx(1.40));

  auto unit = t;
  unit.impression_rate = 1e-12;
  CHECK(analytic_expected_loss(unit, 10) / unit.expected_impressions() == doctest::Approx(1.40));
}

TEST_CASE("analytic loss") {
  CookieTruth a;
  a.effect_class = EffectClass::positive;
  a.slope = 0.01;
  a.lifetime = 22;
  a.activity_prob = 1.0;
  a.impression_rate = 1e-12;
  CHECK(rebirth_day_deficit(22, 10) == 140);
  CHECK(analytic_expected_loss(a, 10, 1.0) / a.expected_impressions() == doctest::Approx(1.40));
  CHECK(analytic_expected_loss(a, 22, 1.0) == 0.0);
  CHECK(analytic_expected_loss(a, 30, 1.0) == 0.0);
  a.effect_class = EffectClass::zero;
  CHECK(analytic_expected_loss(a, 10, 1.0) == 0.0);

  std::mt19937_64 rng(17);
  std::uniform_int_distribution<int> T(1, 1500), L(1, 800);
  std::uniform_real_distribution<double> b(-0.01, 0.01);
  for (int i = 0; i < 1000; ++i) {
    CookieTruth c;
    c.lifetime = T(rng);
    c.slope = b(rng);
    c.effect_class = c.slope > 0 ? EffectClass::positive : EffectClass::negative;
    c.activity_prob = 0.7;
    c.impression_rate = 3.0;
    const int limit = L(rng);
    CHECK(rebirth_day_deficit(c.lifetime, limit) == oracle::brute_deficit(c.lifetime, limit));
    const double brute = c.slope * c.expected_impressions() / 1000.0 * c.expected_activity_share() *
                         static_cast<double>(oracle::brute_deficit(c.lifetime, limit));
    CHECK(analytic_expected_loss(c, limit) == doctest::Approx(brute).epsilon(1e-12));
  }
}

TEST_CASE("truth expectations") {
  CookieTruth c;
  c.lifetime = 12;
  c.activity_prob = 0.5;
  c.impression_rate = 2.0;
  CHECK(c.expected_activity_share() == doctest::Approx(7.0 / 12.0));
  CHECK(c.expected_impressions() == doctest::Approx(2.0 / (1.0 - std::exp(-2.0))));
  c.lifetime = 1;
  CHECK(c.expected_activity_share() == 1.0);
}

TEST_CASE("generator configuration") {
  GenConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  const auto back = gen_config_from_json(to_json(cfg));
  CHECK(to_json(back).dump() == to_json(cfg).dump());

  auto bad = cfg;
  bad.window = {parse_date("2015-01-02"), parse_date("2015-01-01")};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.pi_zero = 0.5;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.above_prob = 1.2;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.slope_min = 0.002;
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  CHECK_THROWS_AS(gen_config_from_json(Json::parse(R"({"n_cookie": 5})")), ConfigError);
  CHECK(gen_config_from_json(Json::parse(R"({"n_cookies": 5})")).n_cookies == 5);
}
