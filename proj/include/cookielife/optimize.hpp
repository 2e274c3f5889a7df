#pragma once

#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace cookielife {

using Objective = std::function<double(const Eigen::VectorXd&)>;

struct SimplexOptions {
  double relative_tolerance = 1e-10;  // on the spread of objective values
  int max_iterations = 10000;
  double initial_step = 0.1;  // per coordinate, in parameter units
};

struct SimplexResult {
  Eigen::VectorXd argmin;
  double minimum = 0.0;
  int iterations = 0;
  bool converged = false;
  // Best value every 50 iterations plus the last iterate; for diagnostics.
  std::vector<std::string> trace;
};

// Nelder-Mead downhill simplex with standard coefficients (1, 2, 0.5, 0.5).
// Non-finite objective values are treated as +inf, so infeasible regions are
// simply rejected.
SimplexResult minimize_simplex(const Objective& f, const Eigen::VectorXd& start, const SimplexOptions& opts = {});

// Central-difference gradient with per-coordinate step h_i.
Eigen::VectorXd numeric_gradient(const Objective& f, const Eigen::VectorXd& x, const Eigen::VectorXd& steps);
// Central-difference Hessian with per-coordinate step h_i.
Eigen::MatrixXd numeric_hessian(const Objective& f, const Eigen::VectorXd& x, const Eigen::VectorXd& steps);

}  // namespace cookielife
