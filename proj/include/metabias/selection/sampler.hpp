#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "metabias/selection/likelihood.hpp"
#include "metabias/selection/model_space.hpp"

namespace metabias::selection {

struct SamplerConfig {
  int chains = 4;
  int iterations = 5000;  // per chain, burn-in included
  int burn_in = 1000;
  double target_acceptance = 0.44;
  double rhat_threshold = 1.05;
};

/// Posterior mode in the unconstrained space with its Laplace covariance.
struct LaplaceFit {
  Eigen::VectorXd mode;
  double log_posterior = 0.0;
  Eigen::MatrixXd covariance;
  /// Lower Cholesky factor of covariance.
  Eigen::MatrixXd chol;
  bool hessian_ok = false;
};

/// Moment-based starting point for a model's unconstrained coordinates.
Eigen::VectorXd initial_point(const Parameterization& param, const EffectData& data);
LaplaceFit find_mode(const LogPosterior& target);

struct ModelDraws {
  int chains = 0;
  int draws_per_chain = 0;
  std::vector<std::string> names;
  /// One (draws_per_chain x dim) matrix per chain, unconstrained coordinates.
  std::vector<Eigen::MatrixXd> unconstrained;
  /// Natural-scale draws pooled in chain order. Parameters a model does not
  /// have hold their fixed value (0 for mu, tau and slopes).
  std::vector<double> mu, tau, pet, peese;
  /// omegas[j][draw] for selection models.
  std::vector<std::vector<double>> omegas;
  /// Post burn-in acceptance rate per coordinate, averaged over chains.
  std::vector<double> acceptance;
  /// Split-chain potential scale reduction per coordinate.
  std::vector<double> rhat;
  double max_rhat = 1.0;
  bool converged = true;

  std::size_t size() const noexcept { return mu.size(); }
};

/// Metropolis-within-Gibbs: each sweep updates the coordinates one direction
/// at a time with Gaussian random-walk proposals. Directions start from the
/// Laplace covariance; step sizes and directions adapt during burn-in only.
/// Deterministic given seed; chain c draws from derive_seed(seed, "chain", c).
ModelDraws sample_posterior(const ModelSpec& model, const EffectData& data, const SamplerConfig& config,
                            const PriorConfig& priors, std::uint64_t seed);

/// Split-R-hat over chains of equal length (columns of one coordinate).
double split_rhat(const std::vector<std::vector<double>>& chains);

}  // namespace metabias::selection
