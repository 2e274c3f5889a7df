#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cookielife/civil_date.hpp"
#include "cookielife/panel.hpp"

namespace cookielife {

// ---------------------------------------------------------------------------
// Censoring

enum class CensoringKind { none, left, right, both };

std::string_view to_string(CensoringKind kind);

struct CensoringStatus {
  CensoringKind kind = CensoringKind::none;
  int threshold_days = 7;

  bool censored() const { return kind != CensoringKind::none; }
};

// Left: first activity within the first `threshold_days` of the window.
// Right: last activity within the last `threshold_days`. Both: both.
// Throws ConfigError when the window is shorter than 2 * threshold_days and
// DataError when the record lies outside the window.
CensoringStatus classify_censoring(const CookieRecord& record, const Window& window, int threshold_days = 7);

// ---------------------------------------------------------------------------
// Parametric lifetime families
//
//   weibull            shape = α, scale = μ;           S(t) = exp(-(t/μ)^α)
//   lognormal          shape = sd of ln t, scale = mean of ln t
//   generalized_gamma  shape = σ, scale = μ (location of ln t), extra = Q
//                      (Prentice parametrization; Q = 1 is Weibull, Q → 0
//                      lognormal)

enum class Family { weibull, lognormal, generalized_gamma };

std::string_view to_string(Family family);
Family parse_family(std::string_view name);

struct Distribution {
  Family family = Family::weibull;
  double shape = 1.0;
  double scale = 1.0;
  double extra = 0.0;

  double log_density(double t) const;
  double log_survival(double t) const;
};

struct LifetimeObservation {
  double lifetime = 0.0;  // days, > 0
  bool censored = false;
};

struct ParamEstimate {
  double value = 0.0;
  double se = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
};

struct SurvivalFit {
  Family family = Family::weibull;
  ParamEstimate shape;
  ParamEstimate scale;
  std::optional<ParamEstimate> extra;  // generalized gamma Q
  double loglik = 0.0;
  double aic = 0.0;
  double bic = 0.0;
  std::size_t n = 0;
  int n_params = 0;
  int iterations = 0;

  Distribution distribution() const;
};

struct FitOptions {
  std::optional<double> fixed_shape;  // holds the shape parameter constant
  int max_iterations = 10000;
  double tolerance = 1e-10;  // relative change of the log-likelihood
};

// Σ_uncensored ln f(t) + Σ_censored ln S(t).
double survival_loglik(const Distribution& dist, std::span<const LifetimeObservation> samples);

// Keeps observations with lifetime >= min_lifetime (8 = "more than seven days").
std::vector<LifetimeObservation> eligible_for_fit(std::span<const LifetimeObservation> samples,
                                                  double min_lifetime = 8.0);

// Censoring-aware maximum likelihood. Every censored kind contributes ln S(t).
// Simplex search on log-scale parameters followed by Newton refinement on a
// numerical Hessian; standard errors from the inverse observed information and
// Wald intervals on the log scale for positive parameters.
//
// Throws DataError for empty or all-censored input, DomainError for
// non-positive lifetimes and ConvergenceError (with the iteration trace) when
// the optimum is not reached.
SurvivalFit fit_survival(std::span<const LifetimeObservation> samples, Family family, const FitOptions& opts = {});

// Central-difference gradient of the log-likelihood in natural parameters
// (shape, scale[, extra]) with step 1e-5 * |parameter|.
std::vector<double> loglik_gradient(const SurvivalFit& fit, std::span<const LifetimeObservation> samples);

// S(t). Throws DomainError for t < 0.
double survival_fn(const Distribution& dist, double t);
inline double survival_fn(const SurvivalFit& fit, double t) { return survival_fn(fit.distribution(), t); }

struct ResidualLife {
  double days = 0.0;
  bool saturated = false;  // S(x) fell below 1e-300; days is 0
};

// ∫_x^∞ S(t) dt / S(x). Weibull via the upper incomplete gamma, lognormal in
// closed form, generalized gamma by numerical integration.
ResidualLife residual_mean_lifetime(const Distribution& dist, double x);
inline ResidualLife residual_mean_lifetime(const SurvivalFit& fit, double x) {
  return residual_mean_lifetime(fit.distribution(), x);
}

// m such that S(x + m) = S(x) / 2.
ResidualLife residual_median_lifetime(const Distribution& dist, double x);

inline double mean_lifetime(const Distribution& dist) { return residual_mean_lifetime(dist, 0.0).days; }

enum class ResidualStatistic { mean, median };

// Censored cookies get observed + round(residual life at observed); others keep
// the observed lifetime. `statuses` is aligned with `records`.
std::map<CookieId, int> uncensor_lifetimes(std::span<const CookieRecord> records, const SurvivalFit& fit,
                                           std::span<const CensoringStatus> statuses,
                                           ResidualStatistic statistic = ResidualStatistic::mean);

// Minimum AIC, then minimum BIC, then family order. Needs at least two fits.
SurvivalFit select_model(std::span<const SurvivalFit> fits);

// ---------------------------------------------------------------------------
// Holdout validation on a newborn cohort

struct MeanInterval {
  double mean = 0.0;
  double low = 0.0;
  double high = 0.0;
};

struct PredictionMetrics {
  MeanInterval uncensored_mean;
  double r2 = 0.0;
  double mae = 0.0;
  double rmse = 0.0;
  double mape = 0.0;
};

struct FamilyValidation {
  Family family = Family::weibull;
  std::optional<SurvivalFit> fit;
  std::string error;  // set when the family could not be fitted
  PredictionMetrics mean_rlt;
  PredictionMetrics median_rlt;
};

struct ValidationReport {
  std::size_t n = 0;
  int split_days = 0;
  std::size_t censored_at_split = 0;
  MeanInterval observed_mean;
  std::vector<FamilyValidation> families;
};

// Cookies whose first activity falls in [cohort_start, cohort_start + cohort_days).
// The window must provide `lookback_days` of history before cohort_start so
// that no cohort member was active earlier. Throws ConfigError otherwise.
std::vector<CookieRecord> select_newborn_cohort(std::span<const CookieRecord> records, const Window& window,
                                                Date cohort_start, int cohort_days = 7, int lookback_days = 70);

// Censors each lifetime at split_days, fits every family on the eligible
// training lifetimes, predicts uncensored lifetimes with mean and median
// residual life and scores them against the observed lifetimes.
// Throws DataError for an empty cohort.
ValidationReport validate_holdout(std::span<const CookieRecord> newborn, int split_days, double min_lifetime = 8.0);

}  // namespace cookielife
