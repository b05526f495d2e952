#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace metabias::selection {

// Two-sided selection only; one-sided weight functions are not modelled.
enum class BiasKind { none, weightfn_05, weightfn_05_10, pet, peese };

std::string to_string(BiasKind kind);
BiasKind bias_kind_from_string(const std::string& s);
bool is_selection(BiasKind kind);
/// Cutpoints of the weight function for selection kinds, empty otherwise.
std::vector<double> cutpoints_for(BiasKind kind);

struct ModelSpec {
  bool has_effect = false;
  bool has_heterogeneity = false;
  BiasKind bias = BiasKind::none;
  double prior_prob = 0.05;
  /// Selection kinds only: pins the weights instead of giving them a prior.
  std::optional<std::vector<double>> fixed_omegas;

  std::string label() const;
};

/// The 2 x 2 x 5 ensemble with equal prior probability. Order: effect
/// (false, true) outermost, then heterogeneity, then bias kind.
std::vector<ModelSpec> build_model_space();

struct PriorConfig {
  double mu_sd = 2.0;
  // Inverse-gamma on tau.
  double tau_shape = 1.0;
  double tau_scale = 0.15;
  double pet_scale = 1.0;
  double peese_scale = 5.0;
  // Symmetric Dirichlet concentration for the cumulative weight increments.
  double omega_alpha = 1.0;
};

/// A point in the natural parameter space; unused entries stay at their
/// fixed values (mu = 0, tau = 0, slopes 0, no weights).
struct ParameterPoint {
  double mu = 0.0;
  double tau = 0.0;
  std::vector<double> omegas;
  double pet = 0.0;
  double peese = 0.0;
};

/// Maps an unconstrained vector onto a model's free parameters and carries
/// the prior density (including the change-of-variables term) in that
/// space. Coordinates, in order when present: mu, log tau, additive
/// log-ratio coordinates of the weight increments, PET or PEESE slope.
///
/// Weights follow the cumulative construction: increments eta ~ Dirichlet
/// over J intervals and omega for the k-th least significant interval is
/// eta_0 + ... + eta_k, so omega_0 = 1 and weights never increase with p.
class Parameterization {
 public:
  Parameterization(ModelSpec spec, PriorConfig priors);

  const ModelSpec& spec() const noexcept { return spec_; }
  const PriorConfig& priors() const noexcept { return priors_; }
  int dim() const noexcept { return dim_; }
  std::vector<std::string> names() const;
  std::size_t n_weights() const noexcept { return n_intervals_; }
  bool has_free_weights() const noexcept { return free_weights_; }

  ParameterPoint to_point(const Eigen::VectorXd& u) const;
  /// Log prior density of u (normalized), -inf outside the support.
  double log_prior(const Eigen::VectorXd& u) const;

  /// Weights implied by alr coordinates (length J - 1).
  static std::vector<double> omegas_from_alr(const double* z, std::size_t j_intervals);

 private:
  ModelSpec spec_;
  PriorConfig priors_;
  int dim_ = 0;
  int i_mu_ = -1, i_tau_ = -1, i_w_ = -1, i_slope_ = -1;
  std::size_t n_intervals_ = 0;
  bool free_weights_ = false;
};

}  // namespace metabias::selection
