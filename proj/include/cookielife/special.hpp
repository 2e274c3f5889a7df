#pragma once

#include <span>
#include <vector>

namespace cookielife {

// Regularized lower incomplete gamma P(a, x), a > 0, x >= 0.
double gamma_p(double a, double x);
// Regularized upper incomplete gamma Q(a, x) = 1 - P(a, x).
double gamma_q(double a, double x);
// ln Γ(a, x), the unregularized upper incomplete gamma, stable for large x.
//
// Series for x < a + 1, Lentz continued fraction otherwise; both stop at a
// relative increment of 1e-15.
double log_upper_gamma(double a, double x);

double normal_cdf(double z);
// ln(1 - Φ(z)) without underflow for large z.
double log_normal_sf(double z);
double normal_quantile(double p);

// Type-7 (linear interpolation) empirical quantile of unsorted data.
double quantile(std::vector<double> values, double q);
// Same on data already sorted ascending.
double sorted_quantile(std::span<const double> sorted, double q);

double mean(std::span<const double> values);
// Sample standard deviation (n - 1 denominator); 0 for fewer than 2 values.
double stddev(std::span<const double> values);

}  // namespace cookielife
