#pragma once

#include <functional>
#include <string>

#include <Eigen/Dense>

namespace metabias::optim {

using Objective = std::function<double(const Eigen::VectorXd&)>;

struct BfgsOptions {
  int max_iterations = 200;
  double gradient_tolerance = 1e-7;
  double value_tolerance = 1e-12;
  double fd_step = 1e-5;
};

struct BfgsResult {
  Eigen::VectorXd x;
  double value = 0.0;
  int iterations = 0;
  bool converged = false;
  std::string message;
};

/// Central-difference gradient.
Eigen::VectorXd numeric_gradient(const Objective& f, const Eigen::VectorXd& x, double h = 1e-5);
/// Central-difference Hessian.
Eigen::MatrixXd numeric_hessian(const Objective& f, const Eigen::VectorXd& x, double h = 1e-4);

/// Quasi-Newton minimization with finite-difference gradients and a
/// backtracking Armijo line search. Non-finite objective values are treated
/// as +infinity so the line search backs away from them.
BfgsResult minimize_bfgs(const Objective& f, Eigen::VectorXd x0, const BfgsOptions& opts = {});

}  // namespace metabias::optim
