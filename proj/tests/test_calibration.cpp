#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <random>

#include "metabias/rng.hpp"
#include "metabias/selection/sampler.hpp"
#include "metabias/simulate.hpp"
#include "oracles/oracles.hpp"

using namespace metabias;
using namespace metabias::selection;

namespace {

// Parameters drawn from the model's prior, returned as a simulation config.
SimConfig prior_draw(const ModelSpec& m, const PriorConfig& pr, Rng& rng) {
  std::normal_distribution<double> nd(0.0, 1.0);
  std::exponential_distribution<double> ex(1.0);
  std::cauchy_distribution<double> cauchy(0.0, 1.0);
  SimConfig c;
  c.mu_true = m.has_effect ? pr.mu_sd * nd(rng) : 0.0;
  c.tau_between = m.has_heterogeneity ? pr.tau_scale / std::gamma_distribution<double>(pr.tau_shape, 1.0)(rng) : 0.0;
  if (m.bias == BiasKind::pet) c.pet_slope = pr.pet_scale * cauchy(rng);
  if (m.bias == BiasKind::peese) c.peese_slope = pr.peese_scale * cauchy(rng);
  if (is_selection(m.bias)) {
    const auto cuts = cutpoints_for(m.bias);
    std::vector<double> eta(cuts.size() + 1);
    double s = 0.0;
    for (auto& e : eta) s += (e = ex(rng));
    // Least significant interval gets eta_0, the next eta_0 + eta_1, and so on.
    std::vector<double> om(eta.size());
    double acc = 0.0;
    for (std::size_t k = 0; k < eta.size(); ++k) {
      acc += eta[k] / s;
      om[eta.size() - 1 - k] = std::min(acc, 1.0);
    }
    om[0] = 1.0;
    c.weightfn.emplace(cuts, om);
  }
  return c;
}

}  // namespace

TEST_CASE("posterior ranks of mu are uniform across the effect models") {
  const auto space = build_model_space();
  std::vector<ModelSpec> effect_models;
  for (const auto& m : space)
    if (m.has_effect) effect_models.push_back(m);
  const PriorConfig priors;
  SamplerConfig sampler;
  sampler.chains = 4;
  sampler.iterations = 2000;
  sampler.burn_in = 500;

  constexpr int kReps = 200;
  constexpr int kDraws = 99;  // ranks take values 0..99
  constexpr int kBins = 10;
  std::vector<int> bins(kBins, 0);
  Rng rng(derive_seed(2024, "sbc"));
  for (int rep = 0; rep < kReps; ++rep) {
    const ModelSpec m = effect_models[static_cast<std::size_t>(rep) % effect_models.size()];
    SimConfig c = prior_draw(m, priors, rng);
    c.n_studies = 20;
    c.se_min = 0.2;
    c.se_max = 1.0;
    c.max_draws = 100'000'000;
    c.seed = derive_seed(2024, "sbc-data", static_cast<std::uint64_t>(rep));
    const auto data = generate(c);
    const auto draws = sample_posterior(m, EffectData(data), sampler, priors,
                                        derive_seed(2024, "sbc-fit", static_cast<std::uint64_t>(rep)));
    const std::size_t total = draws.mu.size();
    int rank = 0;
    for (int k = 0; k < kDraws; ++k) {
      const std::size_t idx = (static_cast<std::size_t>(k) * total) / kDraws + total / (2 * kDraws);
      rank += draws.mu[idx] < c.mu_true;
    }
    ++bins[static_cast<std::size_t>(rank * kBins / (kDraws + 1))];
  }
  const double expected = static_cast<double>(kReps) / kBins;
  double chi2 = 0.0;
  for (int b : bins) chi2 += (b - expected) * (b - expected) / expected;
  const double p = oracle::chi2_upper(chi2, kBins - 1);
  std::string hist;
  for (int b : bins) hist += std::to_string(b) + " ";
  INFO("rank histogram: " << hist << " chi2 " << chi2 << " p " << p);
  CHECK(p > 0.01);
}
