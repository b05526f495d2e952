#include "metabias/optim.hpp"

#include <cmath>
#include <limits>

namespace metabias::optim {

namespace {

double safe_eval(const Objective& f, const Eigen::VectorXd& x) {
  const double v = f(x);
  return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
}

}  // namespace

Eigen::VectorXd numeric_gradient(const Objective& f, const Eigen::VectorXd& x, double h) {
  Eigen::VectorXd g(x.size());
  Eigen::VectorXd xp = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double step = h * std::max(1.0, std::abs(x[i]));
    xp[i] = x[i] + step;
    const double fp = f(xp);
    xp[i] = x[i] - step;
    const double fm = f(xp);
    xp[i] = x[i];
    g[i] = (fp - fm) / (2.0 * step);
  }
  return g;
}

Eigen::MatrixXd numeric_hessian(const Objective& f, const Eigen::VectorXd& x, double h) {
  const Eigen::Index d = x.size();
  Eigen::MatrixXd hess(d, d);
  const double f0 = f(x);
  Eigen::VectorXd xp = x;
  std::vector<double> step(static_cast<std::size_t>(d));
  for (Eigen::Index i = 0; i < d; ++i) step[static_cast<std::size_t>(i)] = h * std::max(1.0, std::abs(x[i]));
  for (Eigen::Index i = 0; i < d; ++i) {
    const double hi = step[static_cast<std::size_t>(i)];
    xp[i] = x[i] + hi;
    const double fp = f(xp);
    xp[i] = x[i] - hi;
    const double fm = f(xp);
    xp[i] = x[i];
    hess(i, i) = (fp - 2.0 * f0 + fm) / (hi * hi);
    for (Eigen::Index j = 0; j < i; ++j) {
      const double hj = step[static_cast<std::size_t>(j)];
      xp[i] = x[i] + hi;
      xp[j] = x[j] + hj;
      const double fpp = f(xp);
      xp[j] = x[j] - hj;
      const double fpm = f(xp);
      xp[i] = x[i] - hi;
      const double fmm = f(xp);
      xp[j] = x[j] + hj;
      const double fmp = f(xp);
      xp[i] = x[i];
      xp[j] = x[j];
      hess(i, j) = hess(j, i) = (fpp - fpm - fmp + fmm) / (4.0 * hi * hj);
    }
  }
  return hess;
}

BfgsResult minimize_bfgs(const Objective& f, Eigen::VectorXd x0, const BfgsOptions& opts) {
  const Eigen::Index d = x0.size();
  BfgsResult res;
  res.x = std::move(x0);
  res.value = safe_eval(f, res.x);
  if (!std::isfinite(res.value)) {
    res.message = "objective not finite at start";
    return res;
  }
  if (d == 0) {
    res.converged = true;
    res.message = "no free parameters";
    return res;
  }
  Eigen::MatrixXd hinv = Eigen::MatrixXd::Identity(d, d);
  Eigen::VectorXd g = numeric_gradient(f, res.x, opts.fd_step);

  for (int it = 0; it < opts.max_iterations; ++it) {
    res.iterations = it + 1;
    if (g.lpNorm<Eigen::Infinity>() < opts.gradient_tolerance) {
      res.converged = true;
      res.message = "gradient tolerance reached";
      return res;
    }
    Eigen::VectorXd dir = -hinv * g;
    double slope = g.dot(dir);
    if (!(slope < 0.0)) {
      hinv.setIdentity();
      dir = -g;
      slope = -g.squaredNorm();
    }
    double step = 1.0;
    Eigen::VectorXd x_new;
    double f_new = std::numeric_limits<double>::infinity();
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls) {
      x_new = res.x + step * dir;
      f_new = safe_eval(f, x_new);
      if (f_new <= res.value + 1e-4 * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      // No descent along the search direction: treat as stationary when the
      // gradient is already small relative to the objective scale.
      res.converged = g.lpNorm<Eigen::Infinity>() < 1e-4 * std::max(1.0, std::abs(res.value));
      res.message = "line search failed";
      return res;
    }
    const Eigen::VectorXd s = x_new - res.x;
    const Eigen::VectorXd g_new = numeric_gradient(f, x_new, opts.fd_step);
    const Eigen::VectorXd y = g_new - g;
    const double change = res.value - f_new;
    res.x = x_new;
    res.value = f_new;
    g = g_new;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      const double rho = 1.0 / sy;
      const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(d, d);
      hinv = (eye - rho * s * y.transpose()) * hinv * (eye - rho * y * s.transpose()) + rho * s * s.transpose();
    }
    if (std::abs(change) < opts.value_tolerance * std::max(1.0, std::abs(res.value)) &&
        g.lpNorm<Eigen::Infinity>() < std::sqrt(opts.gradient_tolerance)) {
      res.converged = true;
      res.message = "objective change below tolerance";
      return res;
    }
  }
  res.message = "iteration limit reached";
  return res;
}

}  // namespace metabias::optim
