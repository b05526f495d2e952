#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "metabias/selection/likelihood.hpp"
#include "metabias/selection/sampler.hpp"

namespace metabias::selection {

enum class EvidenceMethod { automatic, exact, quadrature, bridge };

std::string to_string(EvidenceMethod m);

struct EvidenceConfig {
  EvidenceMethod method = EvidenceMethod::automatic;
  /// Models with at most this many free parameters use quadrature.
  int quadrature_max_dim = 2;
  double quadrature_tolerance = 1e-9;
  int bridge_max_iterations = 1000;
  double bridge_tolerance = 1e-10;
};

struct EvidenceResult {
  double log_evidence = 0.0;
  EvidenceMethod method = EvidenceMethod::exact;
  int iterations = 0;
  std::vector<std::string> trace;
};

/// Integrates prior x likelihood over the unconstrained coordinates of a model
/// with at most two free parameters. Coordinates are centred and whitened at
/// the posterior mode, then each axis is integrated over the whole real line
/// with nested double-exponential (sinh-sinh) quadrature.
EvidenceResult quadrature_log_evidence(const ModelSpec& model, const EffectData& data, const PriorConfig& priors,
                                       const EvidenceConfig& config = {});

/// Iterative bridge sampling with a multivariate normal proposal fitted to
/// the first half of each chain; the second halves enter the fixed-point
/// iteration. Throws ConvergenceError (with the iteration trace) when the
/// scheme does not settle.
EvidenceResult bridge_log_evidence(const ModelSpec& model, const EffectData& data, const PriorConfig& priors,
                                   const ModelDraws& draws, std::uint64_t seed, const EvidenceConfig& config = {});

/// Zero-parameter models: the likelihood itself. Up to
/// config.quadrature_max_dim parameters: quadrature. Otherwise bridge
/// sampling on `draws`.
EvidenceResult log_marginal_likelihood(const ModelSpec& model, const EffectData& data, const PriorConfig& priors,
                                       const ModelDraws& draws, std::uint64_t seed, const EvidenceConfig& config = {});

/// Convenience overload that samples the posterior first when needed.
EvidenceResult log_marginal_likelihood(const ModelSpec& model, const EffectData& data, const SamplerConfig& sampler,
                                       const PriorConfig& priors, std::uint64_t seed,
                                       const EvidenceConfig& config = {});

}  // namespace metabias::selection
