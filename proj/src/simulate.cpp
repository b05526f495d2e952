#include "metabias/simulate.hpp"

#include <cmath>
#include <random>

#include "metabias/error.hpp"
#include "metabias/rng.hpp"
#include "metabias/stats.hpp"

namespace metabias {

void SimConfig::validate() const {
  if (!std::isfinite(mu_true)) throw DomainError("mu_true must be finite");
  if (!(tau_between >= 0.0) || !(tau_within >= 0.0)) throw DomainError("tau_between and tau_within must be >= 0");
  if (n_studies < 1) throw DomainError("n_studies must be >= 1");
  if (min_estimates_per_study < 1 || max_estimates_per_study < min_estimates_per_study)
    throw DomainError("estimates per study must satisfy 1 <= min <= max");
  if (!(se_min > 0.0) || !(se_max >= se_min)) throw DomainError("se range must satisfy 0 < min <= max");
  for (const auto& [name, b] : beta_true) {
    bool found = false;
    for (const auto& m : moderators) found = found || m.name == name;
    if (!found) throw DomainError("beta_true names unknown moderator '" + name + "'");
    if (!std::isfinite(b)) throw DomainError("beta_true['" + name + "'] must be finite");
  }
  ModeratorSchema check(moderators);  // uniqueness and reserved names
  (void)check;
}

nlohmann::json SimConfig::to_json() const {
  using nlohmann::json;
  json j{{"mu_true", mu_true},
         {"tau_between", tau_between},
         {"tau_within", tau_within},
         {"n_studies", n_studies},
         {"estimates_per_study", json::array({min_estimates_per_study, max_estimates_per_study})},
         {"se_range", json::array({se_min, se_max})},
         {"moderators", ModeratorSchema(moderators).to_json()},
         {"beta_true", beta_true},
         {"pet_slope", pet_slope},
         {"peese_slope", peese_slope},
         {"max_draws", max_draws},
         {"seed", seed}};
  if (weightfn) {
    j["weightfn"] = {{"cutpoints", weightfn->cutpoints()}, {"omegas", weightfn->omegas()}};
  } else {
    j["weightfn"] = nullptr;
  }
  return j;
}

SimConfig SimConfig::from_json(const nlohmann::json& j) {
  SimConfig c;
  try {
    c.mu_true = j.value("mu_true", c.mu_true);
    c.tau_between = j.value("tau_between", c.tau_between);
    c.tau_within = j.value("tau_within", c.tau_within);
    c.n_studies = j.value("n_studies", c.n_studies);
    if (j.contains("estimates_per_study")) {
      const auto& r = j.at("estimates_per_study");
      c.min_estimates_per_study = r.at(0).get<int>();
      c.max_estimates_per_study = r.at(1).get<int>();
    }
    if (j.contains("se_range")) {
      c.se_min = j.at("se_range").at(0).get<double>();
      c.se_max = j.at("se_range").at(1).get<double>();
    }
    if (j.contains("moderators")) c.moderators = ModeratorSchema::from_json(j.at("moderators")).entries();
    if (j.contains("beta_true")) c.beta_true = j.at("beta_true").get<std::map<std::string, double>>();
    c.pet_slope = j.value("pet_slope", c.pet_slope);
    c.peese_slope = j.value("peese_slope", c.peese_slope);
    c.max_draws = j.value("max_draws", c.max_draws);
    c.seed = j.value("seed", c.seed);
    if (j.contains("weightfn") && !j.at("weightfn").is_null()) {
      const auto& w = j.at("weightfn");
      c.weightfn.emplace(w.at("cutpoints").get<std::vector<double>>(), w.at("omegas").get<std::vector<double>>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("invalid simulation config: ") + e.what());
  }
  c.validate();
  return c;
}

namespace {

MetaDataset generate_with(const SimConfig& config, std::uint64_t stream_seed, SimStats* stats) {
  config.validate();
  Rng rng(stream_seed);
  std::normal_distribution<double> std_normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> count(config.min_estimates_per_study, config.max_estimates_per_study);
  std::bernoulli_distribution coin(0.5);

  const std::size_t n_intervals = config.weightfn ? config.weightfn->intervals() : 1;
  SimStats local;
  local.proposed.assign(n_intervals, 0);
  local.retained.assign(n_intervals, 0);

  std::vector<EffectEstimate> out;
  for (int r = 0; r < config.n_studies; ++r) {
    const std::string study_id = "s" + std::to_string(r + 1);
    const double u = config.tau_between * std_normal(rng);
    const int n_r = count(rng);
    for (int q = 0; q < n_r; ++q) {
      for (;;) {
        if (++local.total_proposed > config.max_draws)
          throw BudgetError("selection retains too few draws: more than " + std::to_string(config.max_draws) +
                            " proposals needed; raise max_draws or the weight-function floor");
        EffectEstimate e;
        double mean = config.mu_true + u;
        for (const auto& m : config.moderators) {
          const double x = m.kind == ModeratorKind::binary ? (coin(rng) ? 1.0 : 0.0) : std_normal(rng);
          e.moderators[m.name] = x;
          if (auto it = config.beta_true.find(m.name); it != config.beta_true.end()) mean += it->second * x;
        }
        e.se = config.se_min + (config.se_max - config.se_min) * unit(rng);
        mean += config.tau_within * std_normal(rng);
        mean += config.pet_slope * e.se + config.peese_slope * e.se * e.se;
        e.theta = mean + e.se * std_normal(rng);
        std::size_t k = 0;
        bool keep = true;
        if (config.weightfn) {
          const double p = stats::two_sided_p_normal(e.theta / e.se);
          k = config.weightfn->interval_of(p);
          keep = unit(rng) < config.weightfn->omegas()[k];
        }
        ++local.proposed[k];
        if (!keep) continue;
        ++local.retained[k];
        e.study_id = study_id;
        e.estimate_id = std::to_string(out.size() + 1);
        out.push_back(std::move(e));
        break;
      }
    }
  }
  if (stats) *stats = std::move(local);
  return MetaDataset(std::move(out), ModeratorSchema(config.moderators), "simulated (seed " + std::to_string(config.seed) + ")");
}

}  // namespace

MetaDataset generate(const SimConfig& config) { return generate_with(config, derive_seed(config.seed, "simulate"), nullptr); }

MetaDataset generate(const SimConfig& config, SimStats& stats) {
  return generate_with(config, derive_seed(config.seed, "simulate"), &stats);
}

MetaDataset generate_replicate(const SimConfig& config, std::uint64_t replicate) {
  return generate_with(config, derive_seed(config.seed, "replicate", replicate), nullptr);
}

}  // namespace metabias
