#include "cookielife/special.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <boost/math/distributions/normal.hpp>

#include "cookielife/error.hpp"

namespace cookielife {

namespace {

constexpr double kEps = 1e-15;
constexpr double kTiny = 1e-300;

int iteration_cap(double a) { return 200 + static_cast<int>(20.0 * std::sqrt(a)); }

// Σ x^n / (a (a+1) ... (a+n)); P(a,x) = exp(-x + a ln x - lnΓ(a)) * series.
double lower_series(double a, double x) {
  double ap = a;
  double term = 1.0 / a;
  double sum = term;
  const int cap = iteration_cap(a) + static_cast<int>(x);
  for (int n = 0; n < cap; ++n) {
    ap += 1.0;
    term *= x / ap;
    sum += term;
    if (std::fabs(term) < std::fabs(sum) * kEps) return sum;
  }
  return sum;
}

// Continued fraction for Γ(a,x) e^x x^-a, modified Lentz.
double upper_fraction(double a, double x) {
  double b = x + 1.0 - a;
  double c = 1.0 / kTiny;
  double d = 1.0 / b;
  double h = d;
  const int cap = iteration_cap(a) + 100;
  for (int i = 1; i <= cap; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = b + an / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::fabs(delta - 1.0) < kEps) return h;
  }
  return h;
}

void check_args(double a, double x) {
  if (!(a > 0.0) || !(x >= 0.0) || std::isnan(x)) throw DomainError("incomplete gamma requires a > 0 and x >= 0");
}

}  // namespace

double gamma_p(double a, double x) {
  check_args(a, x);
  if (x == 0.0) return 0.0;
  if (std::isinf(x)) return 1.0;
  if (x < a + 1.0) return std::exp(-x + a * std::log(x) - std::lgamma(a)) * lower_series(a, x);
  return 1.0 - std::exp(-x + a * std::log(x) - std::lgamma(a)) * upper_fraction(a, x);
}

double gamma_q(double a, double x) {
  check_args(a, x);
  if (x == 0.0) return 1.0;
  if (std::isinf(x)) return 0.0;
  if (x < a + 1.0) return 1.0 - std::exp(-x + a * std::log(x) - std::lgamma(a)) * lower_series(a, x);
  return std::exp(-x + a * std::log(x) - std::lgamma(a)) * upper_fraction(a, x);
}

double log_upper_gamma(double a, double x) {
  check_args(a, x);
  if (x == 0.0) return std::lgamma(a);
  if (std::isinf(x)) return -std::numeric_limits<double>::infinity();
  if (x < a + 1.0) {
    const double p = std::exp(-x + a * std::log(x) - std::lgamma(a)) * lower_series(a, x);
    return std::lgamma(a) + std::log1p(-p);
  }
  return -x + a * std::log(x) + std::log(upper_fraction(a, x));
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

double log_normal_sf(double z) {
  if (z < 30.0) return std::log(0.5 * std::erfc(z / std::numbers::sqrt2));
  // Mills-ratio asymptotic series, accurate to double precision beyond z = 30.
  const double z2 = z * z;
  const double series = 1.0 - 1.0 / z2 + 3.0 / (z2 * z2) - 15.0 / (z2 * z2 * z2);
  return -0.5 * z2 - std::log(z) - 0.5 * std::log(2.0 * std::numbers::pi) + std::log(series);
}

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw DomainError("normal quantile requires 0 < p < 1");
  return boost::math::quantile(boost::math::normal_distribution<double>{}, p);
}

double sorted_quantile(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw DataError("quantile of empty sample");
  if (!(q >= 0.0 && q <= 1.0)) throw DomainError("quantile level outside [0,1]");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

double quantile(std::vector<double> values, double q) {
  std::sort(values.begin(), values.end());
  return sorted_quantile(values, q);
}

double mean(std::span<const double> values) {
  if (values.empty()) return 0.0;
  double s = 0.0;
  for (double v : values) s += v;
  return s / static_cast<double>(values.size());
}

double stddev(std::span<const double> values) {
  if (values.size() < 2) return 0.0;
  const double m = mean(values);
  double ss = 0.0;
  for (double v : values) ss += (v - m) * (v - m);
  return std::sqrt(ss / static_cast<double>(values.size() - 1));
}

}  // namespace cookielife
