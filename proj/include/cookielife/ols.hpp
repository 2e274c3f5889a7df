#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Dense>

namespace cookielife {

struct OlsResult {
  // One entry per design column; dropped columns hold NaN.
  Eigen::VectorXd beta;
  Eigen::VectorXd se;
  Eigen::VectorXd p_value;
  std::vector<bool> kept;
  std::size_t n = 0;
  int rank = 0;
  int df = 0;  // n - rank
  double rss = 0.0;
  double tss = 0.0;  // centered
  double r2 = 0.0;
  double adj_r2 = 0.0;
  double loglik = 0.0;  // Gaussian, σ² = rss / n
  double aic = 0.0;     // counts σ as a parameter
  double bic = 0.0;
  bool exact_fit = false;

  Eigen::VectorXd residuals;
};

// Least squares of y on the columns of X. Column 0 is expected to be the
// intercept. Columns are admitted left to right and any column that is
// numerically a linear combination of those already admitted is dropped.
//
// When the residuals vanish relative to the scale of y the fit is exact:
// standard errors are 0, coefficients whose contribution is negligible are
// set to 0 with p = 1 and every other coefficient gets p = 0.
OlsResult ols(const Eigen::MatrixXd& X, const Eigen::VectorXd& y);

// Two-sided p-value of a t statistic with `df` degrees of freedom.
double t_test_p(double t, int df);

}  // namespace cookielife
