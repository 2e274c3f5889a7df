#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cookielife/panel.hpp"

namespace cookielife {

// Regression specifications, numbered as in the model comparison:
//   1  price ~ day
//   2  price ~ day + video + above_fold + retarget
//   3  ln price ~ day
//   4  ln price ~ day + video + above_fold + retarget
//   5  price ~ day + day² + video + above_fold + retarget
struct ModelSpec {
  int id = 2;
  bool log_price = false;
  bool daycount_squared = false;
  bool ad_inventory = true;

  static ModelSpec from_id(int id);  // throws ConfigError
  int regressors() const { return 1 + daycount_squared + (ad_inventory ? 3 : 0); }
};

enum class EffectClass { positive, negative, zero, not_estimable };

// "pos", "neg", "zero", "na"
std::string_view class_code(EffectClass c);
EffectClass parse_class_code(std::string_view code);

inline constexpr std::array<std::string_view, 3> kCovariateNames{"video", "fold", "retarget"};

struct ValueModelFit {
  CookieId cookie_id = 0;
  int model = 2;
  std::size_t n_obs = 0;
  std::size_t zero_prices_dropped = 0;  // log models only
  double intercept = 0.0;
  double slope = 0.0;
  double slope_se = 0.0;
  double slope_p = 1.0;
  double slope2 = 0.0;  // day² coefficient, model 5
  std::array<double, 3> beta_cov{};  // NaN when absent or dropped
  std::array<double, 3> mean_shares{};
  std::vector<std::string> dropped;   // covariates removed for collinearity
  double r2 = 0.0;
  double aic = 0.0;
  double bic = 0.0;
  bool log_price = false;
  EffectClass effect_class = EffectClass::not_estimable;
  bool significant_zero = false;

  bool estimable() const { return effect_class != EffectClass::not_estimable; }
};

// OLS over active days; DAYCOUNT is the calendar day index. Needs
// n_obs >= k + 2 for k regressors, otherwise the fit is not_estimable.
ValueModelFit fit_value_model(const CookieRecord& record, const ModelSpec& spec, double alpha = 0.01);

// positive / negative when p(β₁) <= alpha with that sign, zero otherwise.
EffectClass classify_effect(const ValueModelFit& fit, double alpha = 0.01);

// Estimable, insignificant slope and at least 10 observations. Descriptive only.
bool is_significant_zero(const ValueModelFit& fit, double alpha = 0.01);

// Two-sided type-7 quantile clamp of intercept and slope over the estimable
// fits. Classes are left untouched. No-op with fewer than two estimable fits
// or q = 1.
void winsorize_fits(std::span<ValueModelFit> fits, double q = 0.99);

struct QuantityFit {
  double intercept = 0.0;
  double slope = 0.0;
  double n_bar = 0.0;  // predicted impressions at the mean active day index
};

QuantityFit fit_quantity_model(const CookieRecord& record);

struct QualityMetrics {
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  double r2 = 0.0;
  double mae = 0.0;
  double rmse = 0.0;
  double mape = 0.0;  // NaN when the observed LVC is 0
};

// First ceil(0.8 n) active days train, the rest test; errors on the price
// scale. mape compares the observed LVC with the LVC implied by a fit on the
// whole series. Empty for cookies with fewer than 10 active days or when the
// training rows cannot be fitted.
std::optional<QualityMetrics> prediction_quality(const CookieRecord& record, const ModelSpec& spec);

struct CoefficientRow {
  std::string term;
  double estimate = 0.0;
  double se = 0.0;
  double p_value = 0.0;
};

struct DescriptiveRegression {
  std::string dependent;  // "intercept" or "slope_x1000"
  std::size_t n = 0;
  std::vector<CoefficientRow> rows;
  std::vector<std::string> dropped;
  double r2 = 0.0;
  double adj_r2 = 0.0;
};

// Pools estimable fits and regresses β₀ and 1000·β₁ on dummies for every
// attribute level, with "Unknown" as the reference of each attribute.
std::array<DescriptiveRegression, 2> describe_parameters(std::span<const ValueModelFit> fits,
                                                         const std::map<CookieId, UserAttrs>& attrs);

}  // namespace cookielife
