#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "metabias/dataset.hpp"
#include "metabias/selection/weight_function.hpp"

namespace metabias {

struct SimConfig {
  double mu_true = 0.0;
  double tau_between = 0.0;
  double tau_within = 0.0;
  /// Publication filter applied per estimate; none means every draw is kept.
  std::optional<selection::WeightFunction> weightfn;
  int n_studies = 10;
  int min_estimates_per_study = 1;
  int max_estimates_per_study = 1;
  double se_min = 0.005;
  double se_max = 0.3;
  /// Moderators drawn per estimate: binary ~ Bernoulli(0.5), continuous ~ N(0, 1).
  std::vector<ModeratorSpec> moderators;
  /// Coefficients on moderators; names absent from `moderators` are rejected.
  std::map<std::string, double> beta_true;
  /// Small-study terms added to the mean: pet_slope * se + peese_slope * se^2.
  double pet_slope = 0.0;
  double peese_slope = 0.0;
  /// Upper bound on proposals (accepted + rejected) across the whole dataset.
  std::uint64_t max_draws = 50'000'000;
  std::uint64_t seed = 1;

  /// Throws DomainError on invalid settings.
  void validate() const;
  nlohmann::json to_json() const;
  static SimConfig from_json(const nlohmann::json& j);
};

/// Proposal bookkeeping by p-value interval of the weight function.
struct SimStats {
  std::vector<std::uint64_t> proposed;
  std::vector<std::uint64_t> retained;
  std::uint64_t total_proposed = 0;
};

MetaDataset generate(const SimConfig& config);
MetaDataset generate(const SimConfig& config, SimStats& stats);

/// Replicate r uses the stream derived from (seed, "replicate", r).
MetaDataset generate_replicate(const SimConfig& config, std::uint64_t replicate);

}  // namespace metabias
