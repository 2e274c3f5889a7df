#include "cookielife/valuemodel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include <fmt/format.h>

#include "cookielife/error.hpp"
#include "cookielife/ols.hpp"
#include "cookielife/special.hpp"

namespace cookielife {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct Design {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
  std::vector<const DailyObservation*> rows;
  std::size_t zero_dropped = 0;
};

Eigen::RowVectorXd regressor_row(const ModelSpec& spec, double day, double video, double fold, double retarget) {
  Eigen::RowVectorXd row(1 + spec.regressors());
  Eigen::Index c = 0;
  row[c++] = 1.0;
  row[c++] = day;
  if (spec.daycount_squared) row[c++] = day * day;
  if (spec.ad_inventory) {
    row[c++] = video;
    row[c++] = fold;
    row[c++] = retarget;
  }
  return row;
}

Design build_design(const CookieRecord& record, const ModelSpec& spec) {
  Design d;
  for (const auto& day : record.days) {
    if (spec.log_price && day.avg_price_cpm <= 0.0) {
      ++d.zero_dropped;
      continue;
    }
    d.rows.push_back(&day);
  }
  const auto n = static_cast<Eigen::Index>(d.rows.size());
  d.X.resize(n, 1 + spec.regressors());
  d.y.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& o = *d.rows[i];
    d.X.row(i) = regressor_row(spec, o.day_index, o.video_share, o.above_fold_share, o.retarget_share);
    d.y[i] = spec.log_price ? std::log(o.avg_price_cpm) : o.avg_price_cpm;
  }
  return d;
}

double predict_row(const Eigen::VectorXd& beta, const Eigen::RowVectorXd& row) {
  double v = 0.0;
  for (Eigen::Index j = 0; j < row.size(); ++j)
    if (!std::isnan(beta[j])) v += beta[j] * row[j];
  return v;
}

}  // namespace

ModelSpec ModelSpec::from_id(int id) {
  switch (id) {
    case 1:
      return {1, false, false, false};
    case 2:
      return {2, false, false, true};
    case 3:
      return {3, true, false, false};
    case 4:
      return {4, true, false, true};
    case 5:
      return {5, false, true, true};
    default:
      throw ConfigError(fmt::format("unknown model id {} (expected 1-5)", id));
  }
}

std::string_view class_code(EffectClass c) {
  switch (c) {
    case EffectClass::positive:
      return "pos";
    case EffectClass::negative:
      return "neg";
    case EffectClass::zero:
      return "zero";
    case EffectClass::not_estimable:
      return "na";
  }
  return "na";
}

EffectClass parse_class_code(std::string_view code) {
  if (code == "pos") return EffectClass::positive;
  if (code == "neg") return EffectClass::negative;
  if (code == "zero") return EffectClass::zero;
  if (code == "na") return EffectClass::not_estimable;
  throw DataError(fmt::format("unknown effect class '{}'", code));
}

EffectClass classify_effect(const ValueModelFit& fit, double alpha) {
  if (fit.n_obs < 2 || std::isnan(fit.slope) || std::isnan(fit.slope_p)) return EffectClass::not_estimable;
  if (fit.slope_p <= alpha && fit.slope > 0.0) return EffectClass::positive;
  if (fit.slope_p <= alpha && fit.slope < 0.0) return EffectClass::negative;
  return EffectClass::zero;
}

bool is_significant_zero(const ValueModelFit& fit, double alpha) {
  return fit.estimable() && fit.slope_p > alpha && fit.n_obs >= 10;
}

ValueModelFit fit_value_model(const CookieRecord& record, const ModelSpec& spec, double alpha) {
  ValueModelFit fit;
  fit.cookie_id = record.cookie_id;
  fit.model = spec.id;
  fit.log_price = spec.log_price;
  fit.beta_cov.fill(kNaN);

  const Design d = build_design(record, spec);
  fit.n_obs = d.rows.size();
  fit.zero_prices_dropped = d.zero_dropped;
  if (!d.rows.empty()) {
    for (const auto* o : d.rows) {
      fit.mean_shares[0] += o->video_share;
      fit.mean_shares[1] += o->above_fold_share;
      fit.mean_shares[2] += o->retarget_share;
    }
    for (double& s : fit.mean_shares) s /= static_cast<double>(d.rows.size());
  }

  const auto not_estimable = [&] {
    fit.intercept = fit.slope = fit.slope_se = fit.slope_p = fit.slope2 = kNaN;
    fit.r2 = fit.aic = fit.bic = kNaN;
    fit.effect_class = EffectClass::not_estimable;
    return fit;
  };
  if (fit.n_obs < static_cast<std::size_t>(spec.regressors() + 2)) return not_estimable();

  const OlsResult r = ols(d.X, d.y);
  if (!r.kept[0] || !r.kept[1]) return not_estimable();

  fit.intercept = r.beta[0];
  fit.slope = r.beta[1];
  fit.slope_se = r.se[1];
  fit.slope_p = r.p_value[1];
  Eigen::Index c = 2;
  if (spec.daycount_squared) {
    fit.slope2 = r.kept[c] ? r.beta[c] : 0.0;
    if (!r.kept[c]) fit.dropped.emplace_back("day2");
    ++c;
  } else {
    fit.slope2 = kNaN;
  }
  if (spec.ad_inventory) {
    for (std::size_t j = 0; j < 3; ++j, ++c) {
      if (r.kept[c]) {
        fit.beta_cov[j] = r.beta[c];
      } else {
        fit.dropped.emplace_back(kCovariateNames[j]);
      }
    }
  }
  fit.r2 = r.r2;
  fit.aic = r.aic;
  fit.bic = r.bic;
  fit.effect_class = classify_effect(fit, alpha);
  fit.significant_zero = is_significant_zero(fit, alpha);
  return fit;
}

void winsorize_fits(std::span<ValueModelFit> fits, double q) {
  if (!(q > 0.5 && q <= 1.0)) throw ConfigError("winsorization quantile must lie in (0.5, 1]");
  std::vector<double> b0, b1;
  for (const auto& f : fits) {
    if (!f.estimable()) continue;
    b0.push_back(f.intercept);
    b1.push_back(f.slope);
  }
  if (b0.size() < 2) return;
  std::sort(b0.begin(), b0.end());
  std::sort(b1.begin(), b1.end());
  const double lo0 = sorted_quantile(b0, 1.0 - q), hi0 = sorted_quantile(b0, q);
  const double lo1 = sorted_quantile(b1, 1.0 - q), hi1 = sorted_quantile(b1, q);
  for (auto& f : fits) {
    if (!f.estimable()) continue;
    f.intercept = std::clamp(f.intercept, lo0, hi0);
    f.slope = std::clamp(f.slope, lo1, hi1);
  }
}

QuantityFit fit_quantity_model(const CookieRecord& record) {
  QuantityFit q;
  const auto n = static_cast<Eigen::Index>(record.days.size());
  if (n == 0) return q;
  Eigen::MatrixXd X(n, 2);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    X(i, 0) = 1.0;
    X(i, 1) = record.days[i].day_index;
    y[i] = record.days[i].impressions;
  }
  if (n < 2) {
    q.intercept = y[0];
    q.n_bar = y[0];
    return q;
  }
  const OlsResult r = ols(X, y);
  q.intercept = r.beta[0];
  q.slope = r.kept[1] ? r.beta[1] : 0.0;
  q.n_bar = q.intercept + q.slope * X.col(1).mean();
  return q;
}

std::optional<QualityMetrics> prediction_quality(const CookieRecord& record, const ModelSpec& spec) {
  if (record.days.size() < 10) return std::nullopt;
  const Design d = build_design(record, spec);
  const auto n = static_cast<Eigen::Index>(d.rows.size());
  const Eigen::Index n_train = (4 * n + 4) / 5;
  const Eigen::Index n_test = n - n_train;
  if (n_train < spec.regressors() + 2 || n_test < 1) return std::nullopt;

  const auto to_price = [&](double v) { return spec.log_price ? std::exp(v) : v; };
  const OlsResult train = ols(d.X.topRows(n_train), d.y.head(n_train));
  QualityMetrics m;
  m.n_train = static_cast<std::size_t>(n_train);
  m.n_test = static_cast<std::size_t>(n_test);
  double sse = 0.0, sae = 0.0, mean_obs = 0.0;
  for (Eigen::Index i = n_train; i < n; ++i) mean_obs += d.rows[i]->avg_price_cpm;
  mean_obs /= static_cast<double>(n_test);
  double sst = 0.0;
  for (Eigen::Index i = n_train; i < n; ++i) {
    const double obs = d.rows[i]->avg_price_cpm;
    const double e = obs - to_price(predict_row(train.beta, d.X.row(i)));
    sse += e * e;
    sae += std::fabs(e);
    sst += (obs - mean_obs) * (obs - mean_obs);
  }
  const double nt = static_cast<double>(n_test);
  m.r2 = sst > 0.0 ? 1.0 - sse / sst : (sse <= 1e-24 ? 1.0 : kNaN);
  m.mae = sae / nt;
  m.rmse = std::sqrt(sse / nt);

  const OlsResult full = ols(d.X, d.y);
  double predicted_lvc = 0.0;
  for (const auto& o : record.days) {
    const auto row = regressor_row(spec, o.day_index, o.video_share, o.above_fold_share, o.retarget_share);
    predicted_lvc += o.impressions * to_price(predict_row(full.beta, row)) / 1000.0;
  }
  m.mape = record.observed_lvc > 0.0 ? std::fabs(record.observed_lvc - predicted_lvc) / record.observed_lvc : kNaN;
  return m;
}

std::array<DescriptiveRegression, 2> describe_parameters(std::span<const ValueModelFit> fits,
                                                         const std::map<CookieId, UserAttrs>& attrs) {
  std::vector<const ValueModelFit*> used;
  std::vector<UserAttrs> user;
  for (const auto& f : fits) {
    if (!f.estimable()) continue;
    used.push_back(&f);
    const auto it = attrs.find(f.cookie_id);
    user.push_back(it == attrs.end() ? UserAttrs{} : it->second);
  }

  using Getter = const std::string& (*)(const UserAttrs&);
  const std::array<std::pair<std::string_view, Getter>, 4> fields{{
      {"country", [](const UserAttrs& a) -> const std::string& { return a.country; }},
      {"device_type", [](const UserAttrs& a) -> const std::string& { return a.device_type; }},
      {"os", [](const UserAttrs& a) -> const std::string& { return a.os; }},
      {"browser", [](const UserAttrs& a) -> const std::string& { return a.browser; }},
  }};

  std::vector<std::string> terms{"(Intercept)"};
  std::vector<std::pair<std::size_t, std::string>> dummies;
  for (std::size_t f = 0; f < fields.size(); ++f) {
    std::set<std::string> levels;
    for (const auto& u : user)
      if (fields[f].second(u) != "Unknown") levels.insert(fields[f].second(u));
    for (const auto& level : levels) {
      dummies.emplace_back(f, level);
      terms.push_back(fmt::format("{}={}", fields[f].first, level));
    }
  }

  std::array<DescriptiveRegression, 2> out;
  out[0].dependent = "intercept";
  out[1].dependent = "slope_x1000";
  const auto n = static_cast<Eigen::Index>(used.size());
  for (auto& reg : out) reg.n = used.size();
  if (n == 0) return out;

  Eigen::MatrixXd X = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(terms.size()));
  Eigen::VectorXd y0(n), y1(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    X(i, 0) = 1.0;
    for (std::size_t j = 0; j < dummies.size(); ++j)
      X(i, static_cast<Eigen::Index>(j + 1)) = fields[dummies[j].first].second(user[i]) == dummies[j].second;
    y0[i] = used[i]->intercept;
    y1[i] = used[i]->slope * 1000.0;
  }

  const std::array<const Eigen::VectorXd*, 2> ys{&y0, &y1};
  for (std::size_t k = 0; k < 2; ++k) {
    auto& reg = out[k];
    if (n < 2) {
      reg.rows.push_back({terms[0], (*ys[k])[0], kNaN, kNaN});
      reg.r2 = reg.adj_r2 = kNaN;
      for (std::size_t j = 1; j < terms.size(); ++j) reg.dropped.push_back(terms[j]);
      continue;
    }
    const OlsResult r = ols(X, *ys[k]);
    for (std::size_t j = 0; j < terms.size(); ++j) {
      if (r.kept[j]) {
        reg.rows.push_back({terms[j], r.beta[j], r.se[j], r.p_value[j]});
      } else {
        reg.dropped.push_back(terms[j]);
      }
    }
    reg.r2 = r.r2;
    reg.adj_r2 = r.adj_r2;
  }
  return out;
}

}  // namespace cookielife
