#pragma once

// Reference implementations used only by the tests. They favour the most
// direct formulation (dense matrices, explicit loops) over speed and share no
// code with the library beyond Eigen.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <random>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

inline double phi_upper(double x) { return 0.5 * std::erfc(x / std::sqrt(2.0)); }

// Inverse standard normal CDF by bisection on erfc.
inline double z_upper(double tail) {
  double lo = -40.0, hi = 40.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (phi_upper(mid) > tail) lo = mid; else hi = mid;
  }
  return 0.5 * (lo + hi);
}

struct WlsResult {
  Eigen::VectorXd beta;
  Eigen::MatrixXd cov_unit;  // (X' W X)^{-1}
  double rss = 0.0;           // weighted residual sum of squares
};

// Weighted least squares by Householder QR of W^{1/2} X.
inline WlsResult wls(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& w) {
  const Eigen::VectorXd s = w.array().sqrt();
  const Eigen::MatrixXd xs = s.asDiagonal() * x;
  const Eigen::VectorXd ys = s.asDiagonal() * y;
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(xs);
  WlsResult r;
  r.beta = qr.solve(ys);
  const Eigen::MatrixXd rmat = qr.matrixQR().topRows(x.cols()).triangularView<Eigen::Upper>();
  const Eigen::MatrixXd rinv = rmat.inverse();
  r.cov_unit = rinv * rinv.transpose();
  r.rss = (ys - xs * r.beta).squaredNorm();
  return r;
}

// Mean effect and its conventional regression standard error.
inline std::pair<double, double> uwls(const std::vector<double>& theta, const std::vector<double>& se) {
  const Eigen::Index n = static_cast<Eigen::Index>(theta.size());
  Eigen::MatrixXd x = Eigen::MatrixXd::Ones(n, 1);
  Eigen::VectorXd y(n), w(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    y[i] = theta[static_cast<std::size_t>(i)];
    w[i] = 1.0 / (se[static_cast<std::size_t>(i)] * se[static_cast<std::size_t>(i)]);
  }
  const auto r = wls(x, y, w);
  const double s2 = r.rss / static_cast<double>(n - 1);
  return {r.beta[0], std::sqrt(s2 * r.cov_unit(0, 0))};
}

// Probability that |X| / se falls between consecutive critical values when
// X ~ N(mean, var); cutpoints are two-sided p-value thresholds.
inline std::vector<double> interval_probs(const std::vector<double>& cutpoints, double mean, double var, double se) {
  const double sd = std::sqrt(var);
  std::vector<double> tail;  // Pr[|X| >= se z_c]
  for (double c : cutpoints) {
    const double t = se * z_upper(c / 2.0);
    tail.push_back(phi_upper((t - mean) / sd) + 1.0 - phi_upper((-t - mean) / sd));
  }
  std::vector<double> out;
  double prev = 0.0;
  for (double t : tail) {
    out.push_back(t - prev);
    prev = t;
  }
  out.push_back(1.0 - prev);
  return out;
}

inline double mvn_logpdf(const Eigen::VectorXd& x, const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov) {
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  const Eigen::VectorXd r = x - mean;
  const Eigen::VectorXd z = llt.matrixL().solve(r);
  double logdet = 0.0;
  for (Eigen::Index i = 0; i < cov.rows(); ++i) logdet += 2.0 * std::log(llt.matrixL()(i, i));
  return -0.5 * (static_cast<double>(x.size()) * std::log(2.0 * M_PI) + logdet + z.squaredNorm());
}

// Evidence of theta_i ~ N(mu, se_i^2) with mu ~ N(0, prior_sd^2): the data are
// jointly normal with covariance diag(se^2) + prior_sd^2 J.
inline double normal_normal_log_evidence(const std::vector<double>& theta, const std::vector<double>& se,
                                         double prior_sd) {
  const Eigen::Index n = static_cast<Eigen::Index>(theta.size());
  Eigen::MatrixXd cov = Eigen::MatrixXd::Constant(n, n, prior_sd * prior_sd);
  Eigen::VectorXd x(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    cov(i, i) += se[static_cast<std::size_t>(i)] * se[static_cast<std::size_t>(i)];
    x[i] = theta[static_cast<std::size_t>(i)];
  }
  return mvn_logpdf(x, Eigen::VectorXd::Zero(n), cov);
}

// Restricted log likelihood of the three-level model built from the dense
// marginal covariance.
inline double reml_loglik(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const std::vector<double>& se,
                          const std::vector<int>& study, double tau2_b, double tau2_w) {
  const Eigen::Index n = x.rows(), k = x.cols();
  Eigen::MatrixXd v = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) {
      if (study[static_cast<std::size_t>(i)] == study[static_cast<std::size_t>(j)]) v(i, j) += tau2_b;
      if (i == j) v(i, j) += tau2_w + se[static_cast<std::size_t>(i)] * se[static_cast<std::size_t>(i)];
    }
  Eigen::LDLT<Eigen::MatrixXd> ldlt(v);
  const Eigen::MatrixXd vinv = ldlt.solve(Eigen::MatrixXd::Identity(n, n));
  const Eigen::MatrixXd xtvx = x.transpose() * vinv * x;
  const Eigen::VectorXd beta = xtvx.ldlt().solve(x.transpose() * vinv * y);
  const Eigen::VectorXd r = y - x * beta;
  const double logdet_v = ldlt.vectorD().array().log().sum();
  const double logdet_x = xtvx.ldlt().vectorD().array().log().sum();
  return -0.5 * (static_cast<double>(n - k) * std::log(2.0 * M_PI) + logdet_v + logdet_x + r.dot(vinv * r));
}

// Log marginal likelihood (relative to the intercept-only model) of a linear
// regression under Zellner's g-prior: ((n-1-k)/2) log(1+g) - ((n-1)/2) log(1 + g(1-R^2)),
// with R^2 from an ordinary least-squares fit that includes an intercept.
inline double gprior_log_evidence(const Eigen::MatrixXd& regressors, const Eigen::VectorXd& y, double g) {
  const Eigen::Index n = y.size(), k = regressors.cols();
  Eigen::MatrixXd x(n, k + 1);
  x.col(0).setOnes();
  x.rightCols(k) = regressors;
  const Eigen::VectorXd beta = x.colPivHouseholderQr().solve(y);
  const double rss = (y - x * beta).squaredNorm();
  const double tss = (y.array() - y.mean()).square().sum();
  const double r2 = 1.0 - rss / tss;
  return 0.5 * static_cast<double>(n - 1 - k) * std::log(1.0 + g) -
         0.5 * static_cast<double>(n - 1) * std::log(1.0 + g * (1.0 - r2));
}

// Asymptotic Kolmogorov-Smirnov p-value for statistic d with n samples.
inline double ks_pvalue(double d, std::size_t n) {
  const double sn = std::sqrt(static_cast<double>(n));
  const double lambda = (sn + 0.12 + 0.11 / sn) * d;
  double sum = 0.0;
  for (int j = 1; j <= 200; ++j) {
    const double term = 2.0 * ((j % 2) ? 1.0 : -1.0) * std::exp(-2.0 * j * j * lambda * lambda);
    sum += term;
    if (std::abs(term) < 1e-16) break;
  }
  return std::clamp(sum, 0.0, 1.0);
}

// Upper tail of the chi-square distribution by series/continued fraction of
// the regularized incomplete gamma function.
inline double chi2_upper(double x, double df) {
  const double a = df / 2.0, z = x / 2.0;
  if (z <= 0.0) return 1.0;
  const double lg = std::lgamma(a);
  if (z < a + 1.0) {
    double sum = 1.0 / a, term = sum;
    for (int n = 1; n < 1000; ++n) {
      term *= z / (a + n);
      sum += term;
      if (term < sum * 1e-15) break;
    }
    return 1.0 - sum * std::exp(-z + a * std::log(z) - lg);
  }
  double b = z + 1.0 - a, c = 1e300, d = 1.0 / b, h = d;
  for (int i = 1; i < 1000; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < 1e-300) d = 1e-300;
    c = b + an / c;
    if (std::abs(c) < 1e-300) c = 1e-300;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < 1e-15) break;
  }
  return std::exp(-z + a * std::log(z) - lg) * h;
}

}  // namespace oracle
