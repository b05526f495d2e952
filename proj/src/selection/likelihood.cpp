#include "metabias/selection/likelihood.hpp"

#include <cmath>
#include <limits>

#include "metabias/error.hpp"
#include "metabias/stats.hpp"
#include "metabias/selection/weight_function.hpp"

namespace metabias::selection {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

const std::vector<double>& crit_05() {
  static const std::vector<double> c = critical_z({0.05});
  return c;
}

const std::vector<double>& crit_05_10() {
  static const std::vector<double> c = critical_z({0.05, 0.10});
  return c;
}

}  // namespace

EffectData::EffectData(std::vector<double> theta, std::vector<double> se) : theta_(std::move(theta)), se_(std::move(se)) {
  if (theta_.size() != se_.size()) throw ValidationError("theta and se must have equal length");
  var_.resize(se_.size());
  interval_05_.resize(se_.size());
  interval_05_10_.resize(se_.size());
  const auto c05 = cutpoints_for(BiasKind::weightfn_05);
  const auto c0510 = cutpoints_for(BiasKind::weightfn_05_10);
  for (std::size_t q = 0; q < se_.size(); ++q) {
    if (!(se_[q] > 0.0) || !std::isfinite(se_[q]) || !std::isfinite(theta_[q]))
      throw ValidationError("estimates need finite theta and se > 0");
    var_[q] = se_[q] * se_[q];
    const double p = stats::two_sided_p_normal(theta_[q] / se_[q]);
    interval_05_[q] = p_interval(c05, p);
    interval_05_10_[q] = p_interval(c0510, p);
  }
}

EffectData::EffectData(const MetaDataset& data) : EffectData(data.thetas(), data.ses()) {}

const std::vector<std::size_t>& EffectData::intervals(BiasKind kind) const {
  if (kind == BiasKind::weightfn_05) return interval_05_;
  if (kind == BiasKind::weightfn_05_10) return interval_05_10_;
  throw DomainError("no weight-function intervals for bias kind " + to_string(kind));
}

double log_likelihood(const ModelSpec& model, const ParameterPoint& params, const EffectData& data) {
  if (!(params.tau >= 0.0)) throw DomainError("tau must be >= 0");
  const double mu = model.has_effect ? params.mu : 0.0;
  const double tau2 = model.has_heterogeneity ? params.tau * params.tau : 0.0;
  const double pet = model.bias == BiasKind::pet ? params.pet : 0.0;
  const double peese = model.bias == BiasKind::peese ? params.peese : 0.0;

  const auto& theta = data.theta();
  const auto& se = data.se();
  const auto& var = data.variance();
  const std::size_t n = data.size();
  double ll = 0.0;

  if (!is_selection(model.bias)) {
    for (std::size_t q = 0; q < n; ++q) {
      const double mean = mu + pet * se[q] + peese * var[q];
      ll += stats::log_normal_pdf(theta[q], mean, var[q] + tau2);
    }
    return std::isnan(ll) ? kNegInf : ll;
  }

  const auto& omegas = params.omegas;
  const auto& crit = model.bias == BiasKind::weightfn_05 ? crit_05() : crit_05_10();
  if (omegas.size() != crit.size() + 1) throw DomainError("weight vector has the wrong length for this model");
  std::vector<double> log_omega(omegas.size());
  for (std::size_t j = 0; j < omegas.size(); ++j) {
    if (!(omegas[j] > 0.0 && omegas[j] <= 1.0)) throw DomainError("weights must lie in (0, 1]");
    log_omega[j] = std::log(omegas[j]);
  }
  const auto& interval = data.intervals(model.bias);
  for (std::size_t q = 0; q < n; ++q) {
    const double v = var[q] + tau2;
    ll += stats::log_normal_pdf(theta[q], mu, v) + log_omega[interval[q]] -
          std::log(selection_normalizer(crit, omegas, mu, v, se[q]));
  }
  return std::isnan(ll) ? kNegInf : ll;
}

double log_likelihood(const ModelSpec& model, const ParameterPoint& params, const MetaDataset& data) {
  return log_likelihood(model, params, EffectData(data));
}

double LogPosterior::log_likelihood_at(const Eigen::VectorXd& u) const {
  const ParameterPoint p = param_.to_point(u);
  for (double w : p.omegas)
    if (!(w > 0.0)) return kNegInf;
  return log_likelihood(param_.spec(), p, data_);
}

double LogPosterior::operator()(const Eigen::VectorXd& u) const {
  for (Eigen::Index i = 0; i < u.size(); ++i)
    if (!std::isfinite(u[i])) return kNegInf;
  const double lp = param_.log_prior(u);
  if (lp == kNegInf) return kNegInf;
  const double v = lp + log_likelihood_at(u);
  return std::isnan(v) ? kNegInf : v;
}

}  // namespace metabias::selection
