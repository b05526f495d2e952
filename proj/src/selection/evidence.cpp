#include "metabias/selection/evidence.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <boost/math/quadrature/sinh_sinh.hpp>

#include "metabias/error.hpp"
#include "metabias/rng.hpp"
#include "metabias/stats.hpp"

namespace metabias::selection {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double mvn_log_density(const Eigen::VectorXd& x, const Eigen::VectorXd& mean, const Eigen::MatrixXd& chol,
                       double log_det) {
  const Eigen::VectorXd z = chol.triangularView<Eigen::Lower>().solve(x - mean);
  return -0.5 * static_cast<double>(x.size()) * std::log(2.0 * M_PI) - 0.5 * log_det - 0.5 * z.squaredNorm();
}

}  // namespace

std::string to_string(EvidenceMethod m) {
  switch (m) {
    case EvidenceMethod::automatic: return "automatic";
    case EvidenceMethod::exact: return "exact";
    case EvidenceMethod::quadrature: return "quadrature";
    case EvidenceMethod::bridge: return "bridge";
  }
  return "automatic";
}

EvidenceResult quadrature_log_evidence(const ModelSpec& model, const EffectData& data, const PriorConfig& priors,
                                       const EvidenceConfig& config) {
  const Parameterization param(model, priors);
  const LogPosterior target(param, data);
  const int d = param.dim();
  EvidenceResult res;
  res.method = EvidenceMethod::quadrature;
  if (d == 0) {
    res.method = EvidenceMethod::exact;
    res.log_evidence = target(Eigen::VectorXd(0));
    return res;
  }
  if (d > 2) throw ValidationError("quadrature evidence supports at most 2 free parameters");

  const LaplaceFit fit = find_mode(target);
  const double lp0 = fit.log_posterior;
  const double log_det_chol = fit.chol.diagonal().array().log().sum();
  const auto shifted = [&](const Eigen::VectorXd& z) {
    const double v = target(fit.mode + fit.chol * z) - lp0;
    if (std::isnan(v) || v == kNegInf) return 0.0;
    return std::exp(v);
  };

  boost::math::quadrature::sinh_sinh<double> integrator(12);
  const double tol = config.quadrature_tolerance;
  double integral = 0.0;
  double err = 0.0;
  if (d == 1) {
    Eigen::VectorXd z(1);
    integral = integrator.integrate(
        [&](double a) {
          z[0] = a;
          return shifted(z);
        },
        tol, &err);
  } else {
    boost::math::quadrature::sinh_sinh<double> inner(12);
    integral = integrator.integrate(
        [&](double a) {
          Eigen::VectorXd z(2);
          z[0] = a;
          double e = 0.0;
          const double v = inner.integrate(
              [&](double b) {
                z[1] = b;
                return shifted(z);
              },
              tol, &e);
          return std::isfinite(v) ? v : 0.0;
        },
        tol, &err);
  }
  if (!(integral > 0.0) || !std::isfinite(integral)) {
    throw ConvergenceError("quadrature produced a non-positive integral for " + model.label(),
                           {"integral=" + std::to_string(integral), "error=" + std::to_string(err)});
  }
  res.log_evidence = lp0 + log_det_chol + std::log(integral);
  std::ostringstream os;
  os << "mode_log_posterior=" << lp0 << " integral=" << integral << " error_estimate=" << err;
  res.trace.push_back(os.str());
  return res;
}

EvidenceResult bridge_log_evidence(const ModelSpec& model, const EffectData& data, const PriorConfig& priors,
                                   const ModelDraws& draws, std::uint64_t seed, const EvidenceConfig& config) {
  const Parameterization param(model, priors);
  const LogPosterior target(param, data);
  const int d = param.dim();
  EvidenceResult res;
  res.method = EvidenceMethod::bridge;
  if (d == 0) {
    res.method = EvidenceMethod::exact;
    res.log_evidence = target(Eigen::VectorXd(0));
    return res;
  }
  if (draws.unconstrained.empty() || draws.unconstrained.front().cols() != d)
    throw ValidationError("posterior draws do not match model " + model.label());

  std::vector<Eigen::VectorXd> fit_set, iter_set;
  for (const auto& chain : draws.unconstrained) {
    const Eigen::Index half = chain.rows() / 2;
    for (Eigen::Index i = 0; i < half; ++i) fit_set.push_back(chain.row(i).transpose());
    for (Eigen::Index i = half; i < chain.rows(); ++i) iter_set.push_back(chain.row(i).transpose());
  }
  if (fit_set.size() < static_cast<std::size_t>(2 * d + 2) || iter_set.empty())
    throw ValidationError("too few posterior draws for bridge sampling");

  Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
  for (const auto& x : fit_set) mean += x;
  mean /= static_cast<double>(fit_set.size());
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(d, d);
  for (const auto& x : fit_set) cov += (x - mean) * (x - mean).transpose();
  cov /= static_cast<double>(fit_set.size() - 1);
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success)
    throw ConvergenceError("bridge proposal covariance is not positive definite for " + model.label(), {});
  const Eigen::MatrixXd chol = llt.matrixL();
  const double log_det = 2.0 * chol.diagonal().array().log().sum();

  const std::size_t n1 = iter_set.size();
  const std::size_t n2 = n1;
  std::vector<double> l1(n1), l2(n2);
  for (std::size_t j = 0; j < n1; ++j) l1[j] = target(iter_set[j]) - mvn_log_density(iter_set[j], mean, chol, log_det);
  Rng rng(derive_seed(seed, "bridge"));
  std::normal_distribution<double> std_normal(0.0, 1.0);
  Eigen::VectorXd z(d);
  for (std::size_t i = 0; i < n2; ++i) {
    for (int k = 0; k < d; ++k) z[k] = std_normal(rng);
    const Eigen::VectorXd y = mean + chol * z;
    l2[i] = target(y) - mvn_log_density(y, mean, chol, log_det);
  }

  std::vector<double> sorted_l1 = l1;
  const double lstar = stats::quantile(sorted_l1, 0.5);
  for (auto& v : l1) v -= lstar;
  for (auto& v : l2) v -= lstar;
  const double log_s1 = std::log(static_cast<double>(n1) / static_cast<double>(n1 + n2));
  const double log_s2 = std::log(static_cast<double>(n2) / static_cast<double>(n1 + n2));

  double log_r = 0.0;
  std::vector<double> num_terms(n2), den_terms(n1);
  for (int it = 1; it <= config.bridge_max_iterations; ++it) {
    for (std::size_t i = 0; i < n2; ++i)
      num_terms[i] = l2[i] - stats::log_add_exp(log_s1 + l2[i], log_s2 + log_r);
    for (std::size_t j = 0; j < n1; ++j) den_terms[j] = -stats::log_add_exp(log_s1 + l1[j], log_s2 + log_r);
    const double num = stats::log_sum_exp(num_terms) - std::log(static_cast<double>(n2));
    const double den = stats::log_sum_exp(den_terms) - std::log(static_cast<double>(n1));
    const double next = num - den;
    std::ostringstream os;
    os << "iteration " << it << ": log r = " << next + lstar;
    res.trace.push_back(os.str());
    if (!std::isfinite(next)) break;
    const double change = std::abs(next - log_r);
    log_r = next;
    res.iterations = it;
    if (change < config.bridge_tolerance) {
      res.log_evidence = log_r + lstar;
      return res;
    }
  }
  throw ConvergenceError("bridge sampling did not converge for " + model.label(), res.trace);
}

EvidenceResult log_marginal_likelihood(const ModelSpec& model, const EffectData& data, const PriorConfig& priors,
                                       const ModelDraws& draws, std::uint64_t seed, const EvidenceConfig& config) {
  const Parameterization param(model, priors);
  const int d = param.dim();
  EvidenceMethod method = config.method;
  if (d == 0) method = EvidenceMethod::exact;
  if (method == EvidenceMethod::automatic)
    method = d <= config.quadrature_max_dim ? EvidenceMethod::quadrature : EvidenceMethod::bridge;
  switch (method) {
    case EvidenceMethod::exact: {
      EvidenceResult r;
      r.method = EvidenceMethod::exact;
      r.log_evidence = LogPosterior(param, data)(Eigen::VectorXd(0));
      return r;
    }
    case EvidenceMethod::quadrature: return quadrature_log_evidence(model, data, priors, config);
    default: return bridge_log_evidence(model, data, priors, draws, seed, config);
  }
}

EvidenceResult log_marginal_likelihood(const ModelSpec& model, const EffectData& data, const SamplerConfig& sampler,
                                       const PriorConfig& priors, std::uint64_t seed, const EvidenceConfig& config) {
  const Parameterization param(model, priors);
  const bool needs_draws = param.dim() > 0 && (config.method == EvidenceMethod::bridge ||
                                                (config.method == EvidenceMethod::automatic &&
                                                 param.dim() > config.quadrature_max_dim));
  ModelDraws draws;
  if (needs_draws) draws = sample_posterior(model, data, sampler, priors, derive_seed(seed, "sampler"));
  return log_marginal_likelihood(model, data, priors, draws, derive_seed(seed, "evidence"), config);
}

}  // namespace metabias::selection
