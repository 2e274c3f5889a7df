#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <random>
#include <string>
#include <vector>

#include "cookielife/civil_date.hpp"
#include "cookielife/panel.hpp"
#include "cookielife/survival.hpp"
#include "cookielife/valuemodel.hpp"

namespace cookielife {

struct AttributeLevel {
  std::string label;
  double weight = 1.0;
  double intercept_effect = 0.0;  // CPM added to the cookie's intercept
};

struct GenConfig {
  std::size_t n_cookies = 1000;
  Window window{parse_date("2014-03-03"), parse_date("2016-07-16")};

  Family lifetime_family = Family::weibull;
  double lifetime_shape = 0.979;
  double lifetime_scale = 463.321;
  double lifetime_extra = 0.0;

  // Births before the window start are spread uniformly over this many days.
  double pre_window_birth_share = 0.1;
  int pre_window_span_days = 365;

  double activity_alpha = 2.0;  // Beta(alpha, beta) daily activity probability
  double activity_beta = 1.0;

  double impressions_lambda = 3.0;
  double impressions_trend = 0.0;  // per day of life

  double intercept_mean = 0.8;  // CPM
  double intercept_sd = 0.3;
  double pi_zero = 0.796;
  double pi_pos = 0.128;
  double pi_neg = 0.076;
  double slope_min = 0.0005;  // CPM per day, magnitude
  double slope_max = 0.0015;
  double noise_sd = 0.3;

  double video_prob = 0.05;
  double above_prob = 0.45;
  double unknown_fold_prob = 0.1;
  double retarget_prob = 0.2;
  double video_premium = 1.0;
  double above_premium = 0.2;
  double retarget_premium = 0.3;

  std::vector<AttributeLevel> countries{{"DE", 0.7, 0.0}, {"AT", 0.1, -0.05}, {"Unknown", 0.2, 0.0}};
  std::vector<AttributeLevel> devices{{"desktop", 0.6, 0.1}, {"mobile", 0.3, -0.1}, {"Unknown", 0.1, 0.0}};
  std::vector<AttributeLevel> oses{{"Windows", 0.5, 0.0}, {"Android", 0.3, 0.0}, {"Unknown", 0.2, 0.0}};
  std::vector<AttributeLevel> browsers{{"Chrome", 0.5, 0.0}, {"Firefox", 0.3, 0.0}, {"Unknown", 0.2, 0.0}};

  // Throws ConfigError for invalid values.
  void validate() const;
  Distribution lifetime() const { return {lifetime_family, lifetime_shape, lifetime_scale, lifetime_extra}; }
};

struct CookieTruth {
  CookieId cookie_id = 0;
  Date birth{};
  Date death{};
  int lifetime = 0;  // inclusive days
  bool emitted = false;  // at least one impression inside the window
  double intercept = 0.0;
  double slope = 0.0;
  EffectClass effect_class = EffectClass::zero;
  double activity_prob = 1.0;
  double impression_rate = 0.0;
  double impression_trend = 0.0;
  UserAttrs attrs;

  // E[activity share] with birth and death days always active.
  double expected_activity_share() const;
  // E[impressions | active] for the zero-truncated Poisson at the base rate.
  double expected_impressions() const;
};

struct GeneratedCookie {
  CookieTruth truth;
  std::vector<ImpressionEvent> events;  // time-ordered, inside the window
};

struct GroundTruth {
  std::uint64_t seed = 0;
  std::vector<CookieTruth> cookies;
};

// Lifetime in whole days: ceil of a continuous draw, at least 1.
int draw_lifetime(const GenConfig& cfg, std::mt19937_64& rng);

// Cookie `index` of the population; depends only on (cfg, seed, index).
GeneratedCookie generate_cookie(const GenConfig& cfg, std::uint64_t seed, std::size_t index);

// Generates all cookies, handing them to `sink` in index order. Cookies are
// produced in parallel batches; the output does not depend on `threads`.
GroundTruth generate(const GenConfig& cfg, std::uint64_t seed, const std::function<void(const GeneratedCookie&)>& sink,
                     int threads = 1);

// Writes the impression log CSV and returns the truth.
GroundTruth generate_csv(const GenConfig& cfg, std::uint64_t seed, std::ostream& impressions, int threads = 1);

void write_impression_row(std::ostream& out, const ImpressionEvent& e);

// Σ_{t=1..T} (t − restricted_day(t, L)) in closed form.
long long rebirth_day_deficit(long long T, long long L);

// Noiseless loss of one cookie under restriction L:
// b · n̄ / divisor · activity share · deficit(T, L) for signed-slope cookies
// living longer than L, 0 otherwise.
double analytic_expected_loss(const CookieTruth& truth, int limit_days, double divisor = 1000.0);

}  // namespace cookielife
