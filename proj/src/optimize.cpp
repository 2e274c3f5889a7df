#include "cookielife/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <fmt/format.h>

namespace cookielife {

namespace {

double safe_eval(const Objective& f, const Eigen::VectorXd& x) {
  const double v = f(x);
  return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
}

std::string describe(int iter, const Eigen::VectorXd& x, double fx) {
  std::string s = fmt::format("iter {}: f={:.12g} x=[", iter, fx);
  for (Eigen::Index i = 0; i < x.size(); ++i) s += fmt::format("{}{:.10g}", i ? ", " : "", x[i]);
  return s + "]";
}

}  // namespace

SimplexResult minimize_simplex(const Objective& f, const Eigen::VectorXd& start, const SimplexOptions& opts) {
  const Eigen::Index n = start.size();
  std::vector<Eigen::VectorXd> pts(n + 1, start);
  std::vector<double> vals(n + 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double step = start[i] != 0.0 ? opts.initial_step * std::max(1.0, std::fabs(start[i])) : opts.initial_step;
    pts[i + 1][i] += step;
  }
  for (Eigen::Index i = 0; i <= n; ++i) vals[i] = safe_eval(f, pts[i]);

  SimplexResult res;
  std::vector<std::size_t> order(n + 1);
  int iter = 0;
  for (; iter < opts.max_iterations; ++iter) {
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return vals[a] < vals[b]; });
    const std::size_t best = order.front();
    const std::size_t worst = order.back();
    const std::size_t second = order[n - 1];

    if (iter % 50 == 0) res.trace.push_back(describe(iter, pts[best], vals[best]));

    const double spread = std::fabs(vals[worst] - vals[best]);
    if (std::isfinite(vals[worst]) && spread <= opts.relative_tolerance * (std::fabs(vals[best]) + 1e-300)) {
      double size = 0.0;
      for (Eigen::Index i = 0; i <= n; ++i) size = std::max(size, (pts[i] - pts[best]).cwiseAbs().maxCoeff());
      if (size <= 1e-6 * std::max(1.0, pts[best].cwiseAbs().maxCoeff())) {
        res.converged = true;
        break;
      }
    }

    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
    for (Eigen::Index i = 0; i <= n; ++i)
      if (static_cast<std::size_t>(i) != worst) centroid += pts[i];
    centroid /= static_cast<double>(n);

    const Eigen::VectorXd reflected = centroid + (centroid - pts[worst]);
    const double fr = safe_eval(f, reflected);
    if (fr < vals[best]) {
      const Eigen::VectorXd expanded = centroid + 2.0 * (centroid - pts[worst]);
      const double fe = safe_eval(f, expanded);
      if (fe < fr) {
        pts[worst] = expanded;
        vals[worst] = fe;
      } else {
        pts[worst] = reflected;
        vals[worst] = fr;
      }
      continue;
    }
    if (fr < vals[second]) {
      pts[worst] = reflected;
      vals[worst] = fr;
      continue;
    }
    const bool outside = fr < vals[worst];
    const Eigen::VectorXd contracted =
        outside ? Eigen::VectorXd(centroid + 0.5 * (reflected - centroid))
                : Eigen::VectorXd(centroid + 0.5 * (pts[worst] - centroid));
    const double fc = safe_eval(f, contracted);
    if (fc < (outside ? fr : vals[worst])) {
      pts[worst] = contracted;
      vals[worst] = fc;
      continue;
    }
    for (Eigen::Index i = 0; i <= n; ++i) {
      if (static_cast<std::size_t>(i) == best) continue;
      pts[i] = pts[best] + 0.5 * (pts[i] - pts[best]);
      vals[i] = safe_eval(f, pts[i]);
    }
  }

  const auto best = static_cast<std::size_t>(std::min_element(vals.begin(), vals.end()) - vals.begin());
  res.argmin = pts[best];
  res.minimum = vals[best];
  res.iterations = iter;
  res.trace.push_back(describe(iter, pts[best], vals[best]));
  return res;
}

Eigen::VectorXd numeric_gradient(const Objective& f, const Eigen::VectorXd& x, const Eigen::VectorXd& steps) {
  Eigen::VectorXd g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Eigen::VectorXd hi = x, lo = x;
    hi[i] += steps[i];
    lo[i] -= steps[i];
    g[i] = (f(hi) - f(lo)) / (2.0 * steps[i]);
  }
  return g;
}

Eigen::MatrixXd numeric_hessian(const Objective& f, const Eigen::VectorXd& x, const Eigen::VectorXd& steps) {
  const Eigen::Index n = x.size();
  Eigen::MatrixXd h(n, n);
  const double f0 = f(x);
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::VectorXd p = x, m = x;
    p[i] += steps[i];
    m[i] -= steps[i];
    h(i, i) = (f(p) - 2.0 * f0 + f(m)) / (steps[i] * steps[i]);
    for (Eigen::Index j = i + 1; j < n; ++j) {
      Eigen::VectorXd pp = x, pm = x, mp = x, mm = x;
      pp[i] += steps[i];
      pp[j] += steps[j];
      pm[i] += steps[i];
      pm[j] -= steps[j];
      mp[i] -= steps[i];
      mp[j] += steps[j];
      mm[i] -= steps[i];
      mm[j] -= steps[j];
      h(i, j) = h(j, i) = (f(pp) - f(pm) - f(mp) + f(mm)) / (4.0 * steps[i] * steps[j]);
    }
  }
  return h;
}

}  // namespace cookielife
