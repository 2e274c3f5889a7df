#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "cookielife/panel.hpp"
#include "cookielife/valuemodel.hpp"

namespace cookielife {

inline constexpr std::array<int, 6> kDefaultRestrictions{30, 60, 90, 120, 360, 720};

// β₀ + β₁·day (+ β₂·day²) + Σ βⱼ·mean shareⱼ, exponentiated for log models and
// floored at 0. Dropped covariates contribute nothing.
double predicted_price(const ValueModelFit& fit, int day);

// ((day - 1) mod L) + 1: the day index of the cookie reborn every L days.
int restricted_day(int day, int limit_days);

struct CookieValueInput {
  const CookieRecord* record = nullptr;
  ValueModelFit fit;
  QuantityFit quantity;
  int uncensored_lifetime = 0;
};

// Value of days [first_day, last_day] of the cookie's life.
//
// Positive and negative cookies: activity_share · Σ n̄ · p̂(t') / divisor with
// t' = restricted_day(t, L) under a restriction. Zero and not-estimable
// cookies: the observed value spread evenly over the observed lifetime and
// extended at the same daily rate; restrictions do not change it.
double value_days(const CookieValueInput& in, int first_day, int last_day, std::optional<int> limit_days,
                  double divisor = 1000.0);

// Value over the whole uncensored lifetime.
double value_lifetime(const CookieValueInput& in, std::optional<int> limit_days, double divisor = 1000.0);

struct LifetimeValuation {
  CookieId cookie_id = 0;
  int observed_lifetime = 0;
  int uncensored_lifetime = 0;
  double observed_lvc = 0.0;
  double predicted_censored_lvc = 0.0;
  double ape = 0.0;  // NaN when observed_lvc is 0
  double predicted_residual_lvc = 0.0;
  double uncensored_lvc = 0.0;
};

LifetimeValuation valuation_rows(const CookieValueInput& in, double divisor = 1000.0);

struct CookiePolicyOutcome {
  CookieId cookie_id = 0;
  bool survived = false;
  EffectClass effect_class = EffectClass::not_estimable;
  double unrestricted_value = 0.0;
  double restricted_value = 0.0;
  double loss = 0.0;
};

// One outcome per input in input order. Loss is computed only for survivors
// (uncensored lifetime > L) in the positive and negative classes.
std::vector<CookiePolicyOutcome> simulate_policy(std::span<const CookieValueInput> inputs, int limit_days,
                                                 double divisor = 1000.0, int threads = 1);

struct Interval {
  double low = 0.0;
  double high = 0.0;
};

struct GroupSummary {
  std::size_t n = 0;
  double share = 0.0;  // of all cookies
  double avg_lvc = 0.0;
  double avg_loss = 0.0;
  Interval loss_ci;
  double pct_loss = 0.0;  // fraction: avg_loss / avg_lvc
  Interval pct_ci;
};

struct MarketImpact {
  double revenue_base = 0.0;
  double users = 0.0;
  double affected_revenue = 0.0;
  Interval affected_ci;
  double loss_per_user = 0.0;
  Interval per_user_ci;
};

struct PolicyReport {
  int limit_days = 0;
  std::size_t n_cookies = 0;
  std::size_t n_survived = 0;
  double survived_share = 0.0;
  double cond2_given_1 = 0.0;
  double cond3_given_1 = 0.0;
  GroupSummary pos;  // conditions I and II
  GroupSummary neg;  // conditions I and III
  GroupSummary all;
  MarketImpact market;
};

struct BootstrapOptions {
  int replicas = 1000;
  std::uint64_t seed = 0;
  int threads = 1;
};

// Percentile interval of the replicate statistic, resampling indices of
// `size` units with replacement. `stat` receives the replicate's index list.
// Replicate b draws from its own stream keyed by (seed, b).
Interval bootstrap_ci(std::size_t size, const std::function<double(std::span<const std::size_t>)>& stat,
                      const BootstrapOptions& opts);

MarketImpact extrapolate_market(double pct_loss, double revenue_base, double users);

struct MarketBase {
  double revenue_eur = 10.6e9;
  double users = 434e6;
};

// Ratio-of-means percentages; bootstrap within each group.
PolicyReport aggregate_policy(std::span<const CookiePolicyOutcome> outcomes, int limit_days,
                              const BootstrapOptions& boot, const MarketBase& market = {});

}  // namespace cookielife
