#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <vector>

#include "json.hpp"
#include "metabias/dataset.hpp"
#include "metabias/selection/evidence.hpp"
#include "metabias/selection/sampler.hpp"

namespace metabias::selection {

struct ModelPosterior {
  ModelSpec spec;
  double log_marginal_likelihood = 0.0;
  EvidenceMethod evidence_method = EvidenceMethod::exact;
  double posterior_prob = 0.0;
  ModelDraws draws;
};

struct ComponentSummary {
  double posterior_prob = 0.0;
  double prior_prob = 0.0;
  /// Inclusion Bayes factor; +inf when it overflows a double.
  double bf = 1.0;
  double log10_bf = 0.0;
};

struct IntervalEstimate {
  double mean = 0.0;
  double lower = 0.0;
  double upper = 0.0;
};

/// Model-averaged component evidence and parameter summaries. Parameters a
/// model lacks enter the mixture at their null value (0 for mu, tau and the
/// PET/PEESE slopes, 1 for every weight). Intervals are equal-tailed 95%.
struct EnsembleSummary {
  ComponentSummary effect, heterogeneity, bias;
  IntervalEstimate mu, tau, pet, peese;
  /// Union of the weight-function cutpoints, ascending.
  std::vector<double> omega_cutpoints;
  /// One entry per interval of omega_cutpoints.
  std::vector<IntervalEstimate> omega;
};

struct EnsembleConfig {
  SamplerConfig sampler;
  PriorConfig priors;
  EvidenceConfig evidence;
  std::uint64_t seed = 1;
  int jobs = 1;
};

/// Samples every model and computes its evidence. Each model runs on its own
/// seed-derived stream; results are ordered by model index regardless of
/// `jobs`.
std::vector<ModelPosterior> fit_models(const std::vector<ModelSpec>& models, const EffectData& data,
                                       const EnsembleConfig& config);

/// Fills posterior_prob in place from prior x evidence and returns the
/// averaged summary. Throws DegenerateEnsembleError if every evidence is -inf.
EnsembleSummary average_ensemble(std::vector<ModelPosterior>& posteriors);

struct EnsembleResult {
  std::vector<ModelPosterior> models;
  EnsembleSummary summary;
  std::size_t n_estimates = 0;

  nlohmann::json to_json() const;
};

EnsembleResult run_ensemble(const MetaDataset& data, const EnsembleConfig& config);
EnsembleResult run_ensemble(const EffectData& data, const EnsembleConfig& config);

/// Model-averaged weight function over a p grid of `points` values in [0, 1]:
/// columns p, omega_mean, omega_lower, omega_upper.
void write_weightfn_csv(std::ostream& out, const EnsembleSummary& summary, std::size_t points = 201);

}  // namespace metabias::selection
