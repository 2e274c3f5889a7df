#include "cookielife/survival.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/tools/roots.hpp>
#include <fmt/format.h>

#include "cookielife/error.hpp"
#include "cookielife/optimize.hpp"
#include "cookielife/special.hpp"

namespace cookielife {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kLogSqrt2Pi = 0.91893853320467274178;
constexpr double kZ975 = 1.959963984540054;
constexpr double kSaturation = 1e-300;
// Below this |Q| the generalized gamma is evaluated as its lognormal limit.
constexpr double kGenGammaLognormalLimit = 1e-3;

struct WeightedObs {
  double t;
  double log_t;
  bool censored;
  double weight;
};

std::vector<WeightedObs> compress(std::span<const LifetimeObservation> samples) {
  std::map<std::pair<double, bool>, double> counts;
  for (const auto& s : samples) counts[{s.lifetime, s.censored}] += 1.0;
  std::vector<WeightedObs> out;
  out.reserve(counts.size());
  for (const auto& [key, w] : counts) out.push_back({key.first, std::log(key.first), key.second, w});
  return out;
}

double weibull_log_density(double log_t, double shape, double scale) {
  const double lz = log_t - std::log(scale);
  return std::log(shape) - std::log(scale) + (shape - 1.0) * lz - std::exp(shape * lz);
}

double lognormal_log_density(double log_t, double sdlog, double meanlog) {
  const double w = (log_t - meanlog) / sdlog;
  return -log_t - std::log(sdlog) - kLogSqrt2Pi - 0.5 * w * w;
}

double gengamma_log_density(double log_t, double sigma, double mu, double q) {
  if (std::fabs(q) < kGenGammaLognormalLimit) return lognormal_log_density(log_t, sigma, mu);
  const double a = 1.0 / (q * q);
  const double w = (log_t - mu) / sigma;
  const double u = a * std::exp(q * w);
  return std::log(std::fabs(q)) + a * std::log(a) - std::log(sigma) - log_t - std::lgamma(a) + a * q * w - u;
}

double gengamma_log_survival(double log_t, double sigma, double mu, double q) {
  const double w = (log_t - mu) / sigma;
  if (std::fabs(q) < kGenGammaLognormalLimit) return log_normal_sf(w);
  const double a = 1.0 / (q * q);
  const double u = a * std::exp(q * w);
  if (!std::isfinite(u)) return q > 0 ? -kInf : 0.0;
  if (q > 0) return log_upper_gamma(a, u) - std::lgamma(a);
  return std::log(gamma_p(a, u));
}

double log_density_at(const Distribution& d, double log_t) {
  switch (d.family) {
    case Family::weibull:
      return weibull_log_density(log_t, d.shape, d.scale);
    case Family::lognormal:
      return lognormal_log_density(log_t, d.shape, d.scale);
    case Family::generalized_gamma:
      return gengamma_log_density(log_t, d.shape, d.scale, d.extra);
  }
  return -kInf;
}

double log_survival_at(const Distribution& d, double log_t) {
  switch (d.family) {
    case Family::weibull:
      return -std::exp(d.shape * (log_t - std::log(d.scale)));
    case Family::lognormal:
      return log_normal_sf((log_t - d.scale) / d.shape);
    case Family::generalized_gamma:
      return gengamma_log_survival(log_t, d.shape, d.scale, d.extra);
  }
  return -kInf;
}

double weighted_loglik(const Distribution& d, std::span<const WeightedObs> obs) {
  double ll = 0.0;
  for (const auto& o : obs) ll += o.weight * (o.censored ? log_survival_at(d, o.log_t) : log_density_at(d, o.log_t));
  return ll;
}

// Free-parameter vector θ <-> distribution.
struct Parametrization {
  Family family;
  std::optional<double> fixed_shape;

  int size() const {
    if (family == Family::generalized_gamma) return 3;
    return fixed_shape ? 1 : 2;
  }

  Distribution to_distribution(const Eigen::VectorXd& th) const {
    switch (family) {
      case Family::weibull:
        if (fixed_shape) return {family, *fixed_shape, std::exp(th[0])};
        return {family, std::exp(th[0]), std::exp(th[1])};
      case Family::lognormal:
        if (fixed_shape) return {family, *fixed_shape, th[0]};
        return {family, std::exp(th[1]), th[0]};
      case Family::generalized_gamma:
        return {family, std::exp(th[1]), th[0], th[2]};
    }
    return {};
  }

  // Natural parameters in (shape, scale[, extra]) order, skipping a fixed shape.
  Eigen::VectorXd natural(const Distribution& d) const {
    if (family == Family::generalized_gamma) return Eigen::Vector3d(d.shape, d.scale, d.extra);
    if (fixed_shape) return Eigen::VectorXd::Constant(1, d.scale);
    return Eigen::Vector2d(d.shape, d.scale);
  }

  Distribution from_natural(const Eigen::VectorXd& p) const {
    if (family == Family::generalized_gamma) return {family, p[0], p[1], p[2]};
    if (fixed_shape) return {family, *fixed_shape, p[0]};
    return {family, p[0], p[1]};
  }
};

bool valid(const Distribution& d) {
  if (!(d.shape > 0.0) || !std::isfinite(d.shape) || !std::isfinite(d.scale) || !std::isfinite(d.extra)) return false;
  if (d.family == Family::weibull && !(d.scale > 0.0)) return false;
  return true;
}

Eigen::VectorXd start_point(const Parametrization& par, std::span<const WeightedObs> obs) {
  double sw = 0.0, m = 0.0;
  for (const auto& o : obs) {
    sw += o.weight;
    m += o.weight * o.log_t;
  }
  m /= sw;
  double v = 0.0;
  for (const auto& o : obs) v += o.weight * (o.log_t - m) * (o.log_t - m);
  const double s = std::max(std::sqrt(v / sw), 1e-3);

  switch (par.family) {
    case Family::weibull: {
      if (par.fixed_shape) {
        // Closed-form MLE of the scale for known shape.
        const double a = *par.fixed_shape;
        double sum = 0.0, events = 0.0;
        for (const auto& o : obs) {
          sum += o.weight * std::pow(o.t, a);
          if (!o.censored) events += o.weight;
        }
        return Eigen::VectorXd::Constant(1, std::log(std::pow(sum / events, 1.0 / a)));
      }
      const double a0 = 1.2825 / s;
      return Eigen::Vector2d(std::log(a0), m + 0.5772 / a0);
    }
    case Family::lognormal:
      if (par.fixed_shape) return Eigen::VectorXd::Constant(1, m);
      return Eigen::Vector2d(m, std::log(s));
    case Family::generalized_gamma:
      return Eigen::Vector3d(m, std::log(s), 0.5);
  }
  return {};
}

struct Optimum {
  Eigen::VectorXd theta;
  double loglik = -kInf;
  int iterations = 0;
  bool converged = false;
  std::vector<std::string> trace;
};

Optimum maximize(const Parametrization& par, std::span<const WeightedObs> obs, const Eigen::VectorXd& start,
                 const FitOptions& opts) {
  const Objective neg = [&](const Eigen::VectorXd& th) {
    const Distribution d = par.to_distribution(th);
    if (!valid(d)) return kInf;
    const double ll = weighted_loglik(d, obs);
    return std::isfinite(ll) ? -ll : kInf;
  };
  SimplexOptions so;
  so.relative_tolerance = opts.tolerance;
  so.max_iterations = opts.max_iterations;
  auto sr = minimize_simplex(neg, start, so);

  Optimum o;
  o.theta = sr.argmin;
  o.loglik = -sr.minimum;
  o.iterations = sr.iterations;
  o.converged = sr.converged;
  o.trace = std::move(sr.trace);

  // Newton refinement; each accepted step must improve the log-likelihood.
  for (int it = 0; it < 25 && std::isfinite(o.loglik); ++it) {
    Eigen::VectorXd h(o.theta.size());
    for (Eigen::Index i = 0; i < h.size(); ++i) h[i] = 1e-4 * std::max(1.0, std::fabs(o.theta[i]));
    const Eigen::VectorXd g = numeric_gradient(neg, o.theta, h);
    const Eigen::MatrixXd hess = numeric_hessian(neg, o.theta, h);
    Eigen::LLT<Eigen::MatrixXd> llt(hess);
    if (llt.info() != Eigen::Success) break;
    Eigen::VectorXd step = llt.solve(g);
    bool improved = false;
    for (int half = 0; half < 12; ++half) {
      const Eigen::VectorXd cand = o.theta - step;
      const double f = neg(cand);
      if (f < -o.loglik) {
        o.theta = cand;
        o.loglik = -f;
        improved = true;
        break;
      }
      step *= 0.5;
    }
    if (!improved || step.cwiseAbs().maxCoeff() < 1e-12) break;
  }
  return o;
}

ParamEstimate positive_estimate(double log_value, double log_se) {
  const double v = std::exp(log_value);
  return {v, v * log_se, std::exp(log_value - kZ975 * log_se), std::exp(log_value + kZ975 * log_se)};
}

ParamEstimate real_estimate(double value, double se) { return {value, se, value - kZ975 * se, value + kZ975 * se}; }

}  // namespace

std::string_view to_string(CensoringKind kind) {
  switch (kind) {
    case CensoringKind::none:
      return "none";
    case CensoringKind::left:
      return "left";
    case CensoringKind::right:
      return "right";
    case CensoringKind::both:
      return "both";
  }
  return "none";
}

CensoringStatus classify_censoring(const CookieRecord& record, const Window& window, int threshold_days) {
  if (threshold_days < 1) throw ConfigError("censoring threshold must be positive");
  if (window.length_days() < 2 * threshold_days)
    throw ConfigError(fmt::format("window of {} days is shorter than twice the {}-day threshold", window.length_days(),
                                  threshold_days));
  if (!window.contains(record.first_date) || !window.contains(record.last_date))
    throw DataError(fmt::format("cookie {} has activity outside the observation window", record.cookie_id));
  const bool left = days_between(window.start, record.first_date) < threshold_days;
  const bool right = days_between(record.last_date, window.end) < threshold_days;
  CensoringStatus s;
  s.threshold_days = threshold_days;
  s.kind = left && right ? CensoringKind::both
           : left        ? CensoringKind::left
           : right       ? CensoringKind::right
                         : CensoringKind::none;
  return s;
}

std::string_view to_string(Family family) {
  switch (family) {
    case Family::weibull:
      return "weibull";
    case Family::lognormal:
      return "lognormal";
    case Family::generalized_gamma:
      return "generalized_gamma";
  }
  return "weibull";
}

Family parse_family(std::string_view name) {
  if (name == "weibull") return Family::weibull;
  if (name == "lognormal") return Family::lognormal;
  if (name == "generalized_gamma" || name == "gengamma") return Family::generalized_gamma;
  throw ConfigError(fmt::format("unknown lifetime family '{}'", name));
}

double Distribution::log_density(double t) const {
  if (!(t > 0.0)) return -kInf;
  return log_density_at(*this, std::log(t));
}

double Distribution::log_survival(double t) const {
  if (t <= 0.0) return 0.0;
  return log_survival_at(*this, std::log(t));
}

Distribution SurvivalFit::distribution() const { return {family, shape.value, scale.value, extra ? extra->value : 0.0}; }

double survival_loglik(const Distribution& dist, std::span<const LifetimeObservation> samples) {
  double ll = 0.0;
  for (const auto& s : samples) ll += s.censored ? dist.log_survival(s.lifetime) : dist.log_density(s.lifetime);
  return ll;
}

std::vector<LifetimeObservation> eligible_for_fit(std::span<const LifetimeObservation> samples, double min_lifetime) {
  std::vector<LifetimeObservation> out;
  for (const auto& s : samples)
    if (s.lifetime >= min_lifetime) out.push_back(s);
  return out;
}

SurvivalFit fit_survival(std::span<const LifetimeObservation> samples, Family family, const FitOptions& opts) {
  if (samples.empty()) throw DataError("no lifetimes to fit");
  bool any_event = false;
  for (const auto& s : samples) {
    if (!(s.lifetime > 0.0) || !std::isfinite(s.lifetime)) throw DomainError("lifetimes must be positive and finite");
    any_event |= !s.censored;
  }
  if (!any_event) throw DataError("all lifetimes are censored; the model is unidentifiable");
  if (opts.fixed_shape && family == Family::generalized_gamma)
    throw ConfigError("shape cannot be fixed for the generalized gamma");

  const auto obs = compress(samples);
  const Parametrization par{family, opts.fixed_shape};

  Optimum best;
  if (family == Family::generalized_gamma) {
    // Start once from the nested Weibull optimum (Q = 1) and once near the
    // lognormal limit; keep the better optimum.
    const Parametrization wpar{Family::weibull, std::nullopt};
    const Optimum w = maximize(wpar, obs, start_point(wpar, obs), opts);
    const Distribution wd = wpar.to_distribution(w.theta);
    best = maximize(par, obs, Eigen::Vector3d(std::log(wd.scale), -std::log(wd.shape), 1.0), opts);
    Optimum alt = maximize(par, obs, start_point(par, obs), opts);
    if (alt.loglik > best.loglik) best = std::move(alt);
  } else {
    best = maximize(par, obs, start_point(par, obs), opts);
  }

  const auto fail = [&](const std::string& why) {
    std::string msg = fmt::format("{} fit did not converge: {}", to_string(family), why);
    for (const auto& line : best.trace) msg += "\n  " + line;
    throw ConvergenceError(msg);
  };
  if (!std::isfinite(best.loglik)) fail("log-likelihood is not finite");
  if (!best.converged) fail(fmt::format("iteration limit {} reached", opts.max_iterations));

  const Objective neg = [&](const Eigen::VectorXd& th) {
    const Distribution d = par.to_distribution(th);
    return valid(d) ? -weighted_loglik(d, obs) : kInf;
  };
  Eigen::VectorXd h(best.theta.size());
  for (Eigen::Index i = 0; i < h.size(); ++i) h[i] = 1e-4 * std::max(1.0, std::fabs(best.theta[i]));
  const Eigen::MatrixXd info = numeric_hessian(neg, best.theta, h);
  Eigen::VectorXd se = Eigen::VectorXd::Constant(best.theta.size(), std::numeric_limits<double>::quiet_NaN());
  Eigen::FullPivLU<Eigen::MatrixXd> lu(info);
  if (lu.isInvertible()) {
    const Eigen::MatrixXd cov = lu.inverse();
    for (Eigen::Index i = 0; i < se.size(); ++i) se[i] = cov(i, i) > 0.0 ? std::sqrt(cov(i, i)) : se[i];
  }

  SurvivalFit fit;
  fit.family = family;
  fit.n = samples.size();
  fit.n_params = par.size();
  fit.iterations = best.iterations;
  fit.loglik = best.loglik;
  fit.aic = 2.0 * fit.n_params - 2.0 * fit.loglik;
  fit.bic = fit.n_params * std::log(static_cast<double>(fit.n)) - 2.0 * fit.loglik;
  const Eigen::VectorXd& th = best.theta;
  switch (family) {
    case Family::weibull:
      if (opts.fixed_shape) {
        fit.shape = {*opts.fixed_shape, 0.0, *opts.fixed_shape, *opts.fixed_shape};
        fit.scale = positive_estimate(th[0], se[0]);
      } else {
        fit.shape = positive_estimate(th[0], se[0]);
        fit.scale = positive_estimate(th[1], se[1]);
      }
      break;
    case Family::lognormal:
      if (opts.fixed_shape) {
        fit.shape = {*opts.fixed_shape, 0.0, *opts.fixed_shape, *opts.fixed_shape};
        fit.scale = real_estimate(th[0], se[0]);
      } else {
        fit.shape = positive_estimate(th[1], se[1]);
        fit.scale = real_estimate(th[0], se[0]);
      }
      break;
    case Family::generalized_gamma:
      fit.shape = positive_estimate(th[1], se[1]);
      fit.scale = real_estimate(th[0], se[0]);
      fit.extra = real_estimate(th[2], se[2]);
      break;
  }

  const auto grad = loglik_gradient(fit, samples);
  double norm = 0.0;
  for (double g : grad) norm += g * g;
  norm = std::sqrt(norm);
  if (!(norm < 1e-4 * std::max(1.0, std::fabs(fit.loglik))))
    fail(fmt::format("gradient norm {:.3g} at the optimum", norm));
  return fit;
}

std::vector<double> loglik_gradient(const SurvivalFit& fit, std::span<const LifetimeObservation> samples) {
  const bool fixed = fit.family != Family::generalized_gamma && fit.shape.se == 0.0 && fit.shape.ci_low == fit.shape.ci_high;
  const Parametrization par{fit.family, fixed ? std::optional<double>(fit.shape.value) : std::nullopt};
  const auto obs = compress(samples);
  const Eigen::VectorXd p = par.natural(fit.distribution());
  const Objective ll = [&](const Eigen::VectorXd& x) { return weighted_loglik(par.from_natural(x), obs); };
  Eigen::VectorXd h(p.size());
  for (Eigen::Index i = 0; i < h.size(); ++i) h[i] = 1e-5 * std::max(std::fabs(p[i]), 1e-8);
  const Eigen::VectorXd g = numeric_gradient(ll, p, h);
  return {g.data(), g.data() + g.size()};
}

double survival_fn(const Distribution& dist, double t) {
  if (t < 0.0 || std::isnan(t)) throw DomainError("survival function requires t >= 0");
  if (t == 0.0) return 1.0;
  return std::exp(dist.log_survival(t));
}

ResidualLife residual_mean_lifetime(const Distribution& d, double x) {
  if (x < 0.0 || std::isnan(x)) throw DomainError("residual lifetime requires x >= 0");
  const double log_sx = d.log_survival(x);
  if (log_sx < std::log(kSaturation)) return {0.0, true};

  switch (d.family) {
    case Family::weibull: {
      // ∫_x^∞ exp(-(t/μ)^α) dt = (μ/α) Γ(1/α, (x/μ)^α)
      const double a = 1.0 / d.shape;
      const double z = x > 0.0 ? std::pow(x / d.scale, d.shape) : 0.0;
      return {d.scale / d.shape * std::exp(log_upper_gamma(a, z) + z), false};
    }
    case Family::lognormal: {
      const double m = d.scale, s = d.shape;
      if (x == 0.0) return {std::exp(m + 0.5 * s * s), false};
      const double w = (std::log(x) - m) / s;
      // E[(T - x)+] / S(x) = e^{m + s²/2} Φc(w - s)/Φc(w) - x
      const double ratio = std::exp(log_normal_sf(w - s) - log_normal_sf(w));
      return {std::max(0.0, std::exp(m + 0.5 * s * s) * ratio - x), false};
    }
    case Family::generalized_gamma: {
      boost::math::quadrature::exp_sinh<double> integrator;
      const auto f = [&](double u) {
        const double v = std::exp(d.log_survival(x + u) - log_sx);
        return std::isfinite(v) ? v : 0.0;
      };
      return {integrator.integrate(f, 0.0, kInf), false};
    }
  }
  return {0.0, true};
}

ResidualLife residual_median_lifetime(const Distribution& d, double x) {
  if (x < 0.0 || std::isnan(x)) throw DomainError("residual lifetime requires x >= 0");
  const double log_sx = d.log_survival(x);
  if (log_sx < std::log(kSaturation)) return {0.0, true};
  const double target = log_sx - std::numbers::ln2;

  switch (d.family) {
    case Family::weibull: {
      const double z = x > 0.0 ? std::pow(x / d.scale, d.shape) : 0.0;
      return {std::max(0.0, d.scale * std::pow(z + std::numbers::ln2, 1.0 / d.shape) - x), false};
    }
    case Family::lognormal: {
      const boost::math::normal_distribution<double> nd;
      const double w = boost::math::quantile(boost::math::complement(nd, std::exp(target)));
      return {std::max(0.0, std::exp(d.scale + d.shape * w) - x), false};
    }
    case Family::generalized_gamma: {
      double lo = x;
      double hi = std::max(1.0, 2.0 * x);
      while (d.log_survival(hi) > target) {
        lo = hi;
        hi *= 2.0;
        if (hi > 1e12) return {0.0, true};
      }
      boost::uintmax_t iters = 200;
      const auto r = boost::math::tools::toms748_solve([&](double t) { return d.log_survival(t) - target; }, lo, hi,
                                                       boost::math::tools::eps_tolerance<double>(50), iters);
      return {std::max(0.0, 0.5 * (r.first + r.second) - x), false};
    }
  }
  return {0.0, true};
}

std::map<CookieId, int> uncensor_lifetimes(std::span<const CookieRecord> records, const SurvivalFit& fit,
                                           std::span<const CensoringStatus> statuses, ResidualStatistic statistic) {
  if (records.size() != statuses.size()) throw DataError("censoring statuses are not aligned with the panel");
  const Distribution d = fit.distribution();
  std::map<CookieId, int> out;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const int observed = records[i].observed_lifetime_days;
    int lifetime = observed;
    if (statuses[i].censored()) {
      const ResidualLife r = statistic == ResidualStatistic::mean ? residual_mean_lifetime(d, observed)
                                                                  : residual_median_lifetime(d, observed);
      lifetime += static_cast<int>(std::llround(r.days));
    }
    out[records[i].cookie_id] = lifetime;
  }
  return out;
}

SurvivalFit select_model(std::span<const SurvivalFit> fits) {
  if (fits.size() < 2) throw DataError("model selection needs at least two fits");
  const auto better = [](const SurvivalFit& a, const SurvivalFit& b) {
    if (a.aic != b.aic) return a.aic < b.aic;
    if (a.bic != b.bic) return a.bic < b.bic;
    return static_cast<int>(a.family) < static_cast<int>(b.family);
  };
  return *std::min_element(fits.begin(), fits.end(), better);
}

std::vector<CookieRecord> select_newborn_cohort(std::span<const CookieRecord> records, const Window& window,
                                                Date cohort_start, int cohort_days, int lookback_days) {
  if (cohort_days < 1) throw ConfigError("cohort length must be positive");
  if (days_between(window.start, cohort_start) < lookback_days)
    throw ConfigError(fmt::format("cohort start {} leaves less than {} days of lookback", format_date(cohort_start),
                                  lookback_days));
  if (!window.contains(cohort_start)) throw ConfigError("cohort start outside the observation window");
  const Date cohort_end = add_days(cohort_start, cohort_days);
  std::vector<CookieRecord> out;
  for (const auto& r : records)
    if (r.first_date >= cohort_start && r.first_date < cohort_end) out.push_back(r);
  return out;
}

namespace {

MeanInterval mean_interval(std::span<const double> v) {
  const double m = mean(v);
  const double half = v.size() > 1 ? kZ975 * stddev(v) / std::sqrt(static_cast<double>(v.size())) : 0.0;
  return {m, m - half, m + half};
}

PredictionMetrics score(std::span<const double> observed, std::span<const double> predicted) {
  PredictionMetrics pm;
  pm.uncensored_mean = mean_interval(predicted);
  const double mo = mean(observed);
  double sse = 0.0, sst = 0.0, sae = 0.0, sape = 0.0;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    const double e = observed[i] - predicted[i];
    sse += e * e;
    sst += (observed[i] - mo) * (observed[i] - mo);
    sae += std::fabs(e);
    sape += std::fabs(e) / observed[i];
  }
  const double n = static_cast<double>(observed.size());
  pm.r2 = sst > 0.0 ? 1.0 - sse / sst : (sse == 0.0 ? 1.0 : 0.0);
  pm.mae = sae / n;
  pm.rmse = std::sqrt(sse / n);
  pm.mape = sape / n;
  return pm;
}

}  // namespace

ValidationReport validate_holdout(std::span<const CookieRecord> newborn, int split_days, double min_lifetime) {
  if (newborn.empty()) throw DataError("newborn cohort is empty");
  if (split_days < 1) throw ConfigError("split must be at least one day");

  ValidationReport rep;
  rep.n = newborn.size();
  rep.split_days = split_days;

  std::vector<double> observed;
  std::vector<LifetimeObservation> training;
  for (const auto& r : newborn) {
    const double life = r.observed_lifetime_days;
    observed.push_back(life);
    const bool cut = life > split_days;
    rep.censored_at_split += cut;
    training.push_back({cut ? static_cast<double>(split_days) : life, cut});
  }
  rep.observed_mean = mean_interval(observed);
  const auto eligible = eligible_for_fit(training, min_lifetime);

  for (const Family fam : {Family::weibull, Family::lognormal, Family::generalized_gamma}) {
    FamilyValidation fv;
    fv.family = fam;
    try {
      fv.fit = fit_survival(eligible, fam);
    } catch (const std::exception& e) {
      fv.error = e.what();
      rep.families.push_back(std::move(fv));
      continue;
    }
    const Distribution d = fv.fit->distribution();
    const double extend_mean = rep.censored_at_split ? residual_mean_lifetime(d, split_days).days : 0.0;
    const double extend_median = rep.censored_at_split ? residual_median_lifetime(d, split_days).days : 0.0;
    std::vector<double> pred_mean, pred_median;
    for (const auto& t : training) {
      pred_mean.push_back(t.censored ? t.lifetime + extend_mean : t.lifetime);
      pred_median.push_back(t.censored ? t.lifetime + extend_median : t.lifetime);
    }
    fv.mean_rlt = score(observed, pred_mean);
    fv.median_rlt = score(observed, pred_median);
    rep.families.push_back(std::move(fv));
  }
  return rep;
}

}  // namespace cookielife
