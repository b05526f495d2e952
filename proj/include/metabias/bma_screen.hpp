#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "metabias/dataset.hpp"

namespace metabias {

enum class ModelPrior { uniform, beta_binomial };

struct BmaConfig {
  ModelPrior model_prior = ModelPrior::uniform;
  /// Weight observations by 1/se^2 in the screening regression.
  bool precision_weighted = false;
  /// Exact enumeration limit on the number of candidates.
  std::size_t max_candidates = 25;
  int jobs = 1;
};

/// Posterior inclusion probabilities from exhaustive enumeration of candidate
/// subsets under Zellner's g-prior with g = max(n, K^2), K = number of
/// non-intercept regressors in the largest model. Every model contains the
/// intercept and the forced regressors.
struct BmaScreenResult {
  std::vector<std::string> candidates;
  std::map<std::string, double> pips;
  std::set<std::string> included;
  std::set<std::string> forced;
  std::map<std::string, double> posterior_mean_beta;
  std::uint64_t n_models_evaluated = 0;
  double threshold = 0.1;
  double g = 0.0;
};

BmaScreenResult bma_screen(const MetaDataset& data, const std::vector<std::string>& candidates,
                           const std::vector<std::string>& forced, double threshold = 0.1,
                           const BmaConfig& config = {});

/// Log marginal likelihood (up to a constant shared by all models on the same
/// data) of a regression with k non-intercept regressors and coefficient of
/// determination r2: ((n-1-k)/2) log(1+g) - ((n-1)/2) log(1 + g (1 - r2)).
double g_prior_log_evidence(std::size_t n, std::size_t k, double r2, double g);

/// Table rows: moderator, pip, included (yes/no), forced (yes/no); forced
/// regressors first, then candidates in the order given.
void write_screen_csv(std::ostream& out, const BmaScreenResult& result);

}  // namespace metabias
