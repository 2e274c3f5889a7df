#include "cookielife/ols.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include <boost/math/distributions/students_t.hpp>

namespace cookielife {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

bool full_column_rank(const Eigen::MatrixXd& A) {
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
  qr.setThreshold(1e-10);
  return qr.rank() == A.cols();
}

}  // namespace

double t_test_p(double t, int df) {
  if (std::isnan(t) || df < 1) return kNaN;
  if (std::isinf(t)) return 0.0;
  const boost::math::students_t dist(df);
  return 2.0 * boost::math::cdf(boost::math::complement(dist, std::fabs(t)));
}

OlsResult ols(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  const Eigen::Index n = X.rows();
  const Eigen::Index k = X.cols();

  // Scale columns before the rank test so units do not matter.
  Eigen::MatrixXd scaled = X;
  for (Eigen::Index j = 0; j < k; ++j) {
    const double m = X.col(j).cwiseAbs().maxCoeff();
    if (m > 0.0) scaled.col(j) /= m;
  }
  OlsResult r;
  r.n = static_cast<std::size_t>(n);
  r.kept.assign(k, false);
  std::vector<Eigen::Index> cols;
  for (Eigen::Index j = 0; j < k; ++j) {
    if (scaled.col(j).cwiseAbs().maxCoeff() == 0.0) continue;
    Eigen::MatrixXd trial(n, cols.size() + 1);
    for (std::size_t c = 0; c < cols.size(); ++c) trial.col(c) = scaled.col(cols[c]);
    trial.col(cols.size()) = scaled.col(j);
    if (full_column_rank(trial)) {
      cols.push_back(j);
      r.kept[j] = true;
    }
  }

  const auto p = static_cast<Eigen::Index>(cols.size());
  Eigen::MatrixXd Xk(n, p);
  for (Eigen::Index c = 0; c < p; ++c) Xk.col(c) = X.col(cols[c]);

  const Eigen::HouseholderQR<Eigen::MatrixXd> qr(Xk);
  const Eigen::VectorXd b = qr.solve(y);
  r.residuals = y - Xk * b;
  r.rank = static_cast<int>(p);
  r.df = static_cast<int>(n - p);
  r.rss = r.residuals.squaredNorm();
  const double ybar = y.mean();
  r.tss = (y.array() - ybar).square().sum();

  const double yscale = y.cwiseAbs().maxCoeff();
  r.exact_fit = r.rss <= 1e-24 * std::max(y.squaredNorm(), std::numeric_limits<double>::min());

  // (X'X)^{-1} = R^{-1} R^{-T}
  const Eigen::MatrixXd R = qr.matrixQR().topLeftCorner(p, p).triangularView<Eigen::Upper>();
  const Eigen::MatrixXd Rinv = R.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(p, p));
  const Eigen::MatrixXd xtx_inv = Rinv * Rinv.transpose();
  const double sigma2 = r.df > 0 ? r.rss / r.df : kNaN;

  r.beta = Eigen::VectorXd::Constant(k, kNaN);
  r.se = Eigen::VectorXd::Constant(k, kNaN);
  r.p_value = Eigen::VectorXd::Constant(k, kNaN);
  for (Eigen::Index c = 0; c < p; ++c) {
    const Eigen::Index j = cols[c];
    double beta = b[c];
    if (r.exact_fit) {
      const double contribution = std::fabs(beta) * X.col(j).cwiseAbs().maxCoeff();
      const bool negligible = contribution <= 1e-10 * std::max(yscale, std::numeric_limits<double>::min());
      if (negligible && j != 0) beta = 0.0;
      r.beta[j] = beta;
      r.se[j] = 0.0;
      r.p_value[j] = beta == 0.0 ? 1.0 : 0.0;
    } else {
      r.beta[j] = beta;
      r.se[j] = std::sqrt(sigma2 * xtx_inv(c, c));
      r.p_value[j] = t_test_p(beta / r.se[j], r.df);
    }
  }

  const double nn = static_cast<double>(n);
  r.r2 = r.tss > 0.0 ? 1.0 - r.rss / r.tss : kNaN;
  r.adj_r2 = r.df > 0 ? 1.0 - (1.0 - r.r2) * (nn - 1.0) / r.df : kNaN;
  r.loglik = -0.5 * nn * (std::log(2.0 * std::numbers::pi) + std::log(r.rss / nn) + 1.0);
  r.aic = 2.0 * (p + 1) - 2.0 * r.loglik;
  r.bic = (p + 1) * std::log(nn) - 2.0 * r.loglik;
  return r;
}

}  // namespace cookielife
