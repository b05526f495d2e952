#pragma once

#include <vector>

#include <Eigen/Dense>

#include "metabias/dataset.hpp"
#include "metabias/selection/model_space.hpp"

namespace metabias::selection {

/// Effect sizes and standard errors with the p-value interval of every
/// estimate precomputed for both weight-function cutpoint sets. Estimates are
/// treated as exchangeable; study membership is not used.
class EffectData {
 public:
  EffectData(std::vector<double> theta, std::vector<double> se);
  explicit EffectData(const MetaDataset& data);

  std::size_t size() const noexcept { return theta_.size(); }
  const std::vector<double>& theta() const noexcept { return theta_; }
  const std::vector<double>& se() const noexcept { return se_; }
  const std::vector<double>& variance() const noexcept { return var_; }
  /// Interval index of each estimate's p-value for the given selection kind.
  const std::vector<std::size_t>& intervals(BiasKind kind) const;

 private:
  std::vector<double> theta_, se_, var_;
  std::vector<std::size_t> interval_05_, interval_05_10_;
};

/// Log likelihood of the data under one ensemble member at a parameter point.
/// Non-selection models: sum_q log N(theta_q; mu + bias_q, se_q^2 + tau^2).
/// Selection models add log omega(p_q) - log A_q per estimate.
/// Throws DomainError for tau < 0 or weights outside (0, 1].
double log_likelihood(const ModelSpec& model, const ParameterPoint& params, const EffectData& data);
double log_likelihood(const ModelSpec& model, const ParameterPoint& params, const MetaDataset& data);

/// Unnormalized log posterior over a model's unconstrained coordinates.
class LogPosterior {
 public:
  LogPosterior(const Parameterization& param, const EffectData& data) : param_(param), data_(data) {}

  double operator()(const Eigen::VectorXd& u) const;
  double log_likelihood_at(const Eigen::VectorXd& u) const;
  const Parameterization& parameterization() const noexcept { return param_; }
  const EffectData& data() const noexcept { return data_; }

 private:
  const Parameterization& param_;
  const EffectData& data_;
};

}  // namespace metabias::selection
