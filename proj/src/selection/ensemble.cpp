#include "metabias/selection/ensemble.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <ostream>
#include <thread>

#include "metabias/error.hpp"
#include "metabias/json_io.hpp"
#include "metabias/rng.hpp"
#include "metabias/stats.hpp"
#include "metabias/selection/weight_function.hpp"

namespace metabias::selection {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

using Selector = bool (*)(const ModelSpec&);

ComponentSummary component(const std::vector<ModelPosterior>& models, Selector in) {
  std::vector<double> post_in, post_out;
  double prior_in = 0.0, prior_out = 0.0, p_in = 0.0;
  for (const auto& m : models) {
    const double lp = std::log(m.spec.prior_prob) + m.log_marginal_likelihood;
    if (in(m.spec)) {
      post_in.push_back(lp);
      prior_in += m.spec.prior_prob;
      p_in += m.posterior_prob;
    } else {
      post_out.push_back(lp);
      prior_out += m.spec.prior_prob;
    }
  }
  const double total_prior = prior_in + prior_out;
  ComponentSummary c;
  c.prior_prob = prior_in / total_prior;
  c.posterior_prob = std::clamp(p_in, 0.0, 1.0);
  const double log_bf = (stats::log_sum_exp(post_in) - stats::log_sum_exp(post_out)) -
                        (std::log(prior_in) - std::log(prior_out));
  c.log10_bf = log_bf / std::log(10.0);
  c.bf = std::exp(log_bf);
  return c;
}

struct Mixture {
  std::vector<std::pair<double, double>> points;
  double mean = 0.0;

  void add_draws(const std::vector<double>& xs, double prob) {
    if (prob <= 0.0 || xs.empty()) return;
    const double w = prob / static_cast<double>(xs.size());
    double s = 0.0;
    for (double x : xs) {
      points.emplace_back(x, w);
      s += x;
    }
    mean += prob * s / static_cast<double>(xs.size());
  }
  void add_point(double x, double prob) {
    if (prob <= 0.0) return;
    points.emplace_back(x, prob);
    mean += prob * x;
  }
  IntervalEstimate summarize() {
    if (points.empty()) return {};
    return {mean, stats::weighted_quantile(points, 0.025), stats::weighted_quantile(points, 0.975)};
  }
};

IntervalEstimate mix(const std::vector<ModelPosterior>& models, bool (*has)(const ModelSpec&),
                     const std::vector<double> ModelDraws::*field) {
  Mixture m;
  for (const auto& mp : models) {
    if (has(mp.spec) && !(mp.draws.*field).empty()) {
      m.add_draws(mp.draws.*field, mp.posterior_prob);
    } else {
      m.add_point(0.0, mp.posterior_prob);
    }
  }
  return m.summarize();
}

}  // namespace

std::vector<ModelPosterior> fit_models(const std::vector<ModelSpec>& models, const EffectData& data,
                                       const EnsembleConfig& config) {
  std::vector<ModelPosterior> out(models.size());
  std::vector<std::exception_ptr> errors(models.size());
  std::atomic<std::size_t> next{0};
  const auto work = [&] {
    for (std::size_t i = next++; i < models.size(); i = next++) {
      try {
        const std::uint64_t model_seed = derive_seed(config.seed, "ensemble", i);
        ModelPosterior mp;
        mp.spec = models[i];
        mp.draws = sample_posterior(models[i], data, config.sampler, config.priors, derive_seed(model_seed, "sampler"));
        const auto ev = log_marginal_likelihood(models[i], data, config.priors, mp.draws,
                                                derive_seed(model_seed, "evidence"), config.evidence);
        mp.log_marginal_likelihood = ev.log_evidence;
        mp.evidence_method = ev.method;
        out[i] = std::move(mp);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const int jobs = std::max(1, std::min<int>(config.jobs, static_cast<int>(models.size())));
  if (jobs == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < jobs; ++t) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

EnsembleSummary average_ensemble(std::vector<ModelPosterior>& posteriors) {
  if (posteriors.empty()) throw DegenerateEnsembleError("no models to average");
  std::vector<double> lp;
  for (const auto& m : posteriors) {
    if (std::isnan(m.log_marginal_likelihood))
      throw DegenerateEnsembleError("model " + m.spec.label() + " has an undefined evidence");
    lp.push_back(std::log(m.spec.prior_prob) + m.log_marginal_likelihood);
  }
  const double total = stats::log_sum_exp(lp);
  if (total == kNegInf || !std::isfinite(total))
    throw DegenerateEnsembleError("every model evidence is -inf (or +inf); posterior probabilities are undefined");
  for (std::size_t i = 0; i < posteriors.size(); ++i) posteriors[i].posterior_prob = std::exp(lp[i] - total);

  EnsembleSummary s;
  s.effect = component(posteriors, [](const ModelSpec& m) { return m.has_effect; });
  s.heterogeneity = component(posteriors, [](const ModelSpec& m) { return m.has_heterogeneity; });
  s.bias = component(posteriors, [](const ModelSpec& m) { return m.bias != BiasKind::none; });

  s.mu = mix(posteriors, [](const ModelSpec& m) { return m.has_effect; }, &ModelDraws::mu);
  s.tau = mix(posteriors, [](const ModelSpec& m) { return m.has_heterogeneity; }, &ModelDraws::tau);
  s.pet = mix(posteriors, [](const ModelSpec& m) { return m.bias == BiasKind::pet; }, &ModelDraws::pet);
  s.peese = mix(posteriors, [](const ModelSpec& m) { return m.bias == BiasKind::peese; }, &ModelDraws::peese);

  std::vector<double> cuts;
  for (const auto& m : posteriors)
    for (double c : cutpoints_for(m.spec.bias))
      if (std::find(cuts.begin(), cuts.end(), c) == cuts.end()) cuts.push_back(c);
  std::sort(cuts.begin(), cuts.end());
  s.omega_cutpoints = cuts;
  for (std::size_t k = 0; k <= cuts.size(); ++k) {
    // Any p strictly inside union interval k identifies the model's interval.
    const double lo = k == 0 ? 0.0 : cuts[k - 1];
    const double hi = k == cuts.size() ? 1.0 : cuts[k];
    const double p_mid = 0.5 * (lo + hi);
    Mixture m;
    for (const auto& mp : posteriors) {
      if (!is_selection(mp.spec.bias)) {
        m.add_point(1.0, mp.posterior_prob);
        continue;
      }
      const std::size_t j = p_interval(cutpoints_for(mp.spec.bias), p_mid);
      if (mp.spec.fixed_omegas) {
        m.add_point((*mp.spec.fixed_omegas)[j], mp.posterior_prob);
      } else if (j < mp.draws.omegas.size()) {
        m.add_draws(mp.draws.omegas[j], mp.posterior_prob);
      } else {
        m.add_point(1.0, mp.posterior_prob);
      }
    }
    s.omega.push_back(m.summarize());
  }
  return s;
}

EnsembleResult run_ensemble(const EffectData& data, const EnsembleConfig& config) {
  EnsembleResult r;
  r.n_estimates = data.size();
  r.models = fit_models(build_model_space(), data, config);
  r.summary = average_ensemble(r.models);
  return r;
}

EnsembleResult run_ensemble(const MetaDataset& data, const EnsembleConfig& config) {
  if (data.size() < 2) throw InsufficientDataError("the ensemble needs at least 2 estimates");
  return run_ensemble(EffectData(data), config);
}

nlohmann::json EnsembleResult::to_json() const {
  using nlohmann::json;
  const auto interval = [](const IntervalEstimate& e) {
    return json{{"mean", e.mean}, {"ci95", json::array({e.lower, e.upper})}};
  };
  const auto comp = [](const ComponentSummary& c) {
    return json{{"posterior_prob", c.posterior_prob},
                {"prior_prob", c.prior_prob},
                {"bf", c.bf},
                {"log10_bf", c.log10_bf}};
  };
  json models_json = json::array();
  for (std::size_t i = 0; i < models.size(); ++i) {
    const auto& m = models[i];
    json acc = json::array();
    for (double a : m.draws.acceptance) acc.push_back(a);
    models_json.push_back({{"index", i},
                           {"label", m.spec.label()},
                           {"has_effect", m.spec.has_effect},
                           {"has_heterogeneity", m.spec.has_heterogeneity},
                           {"bias", to_string(m.spec.bias)},
                           {"prior_prob", m.spec.prior_prob},
                           {"log_evidence", m.log_marginal_likelihood},
                           {"evidence_method", to_string(m.evidence_method)},
                           {"posterior_prob", m.posterior_prob},
                           {"n_draws", m.draws.size()},
                           {"max_rhat", m.draws.max_rhat},
                           {"converged", m.draws.converged},
                           {"acceptance", acc}});
  }
  json omega = json::array();
  for (std::size_t k = 0; k < summary.omega.size(); ++k) {
    const double lo = k == 0 ? 0.0 : summary.omega_cutpoints[k - 1];
    const double hi = k == summary.omega_cutpoints.size() ? 1.0 : summary.omega_cutpoints[k];
    json e = interval(summary.omega[k]);
    e["interval"] = json::array({lo, hi});
    omega.push_back(e);
  }
  return json{{"n_estimates", n_estimates},
              {"n_models", models.size()},
              {"models", models_json},
              {"components",
               {{"effect", comp(summary.effect)},
                {"heterogeneity", comp(summary.heterogeneity)},
                {"bias", comp(summary.bias)}}},
              {"estimates",
               {{"mu", interval(summary.mu)},
                {"tau", interval(summary.tau)},
                {"omega", omega},
                {"pet", interval(summary.pet)},
                {"peese", interval(summary.peese)}}}};
}

void write_weightfn_csv(std::ostream& out, const EnsembleSummary& summary, std::size_t points) {
  points = std::max<std::size_t>(points, 2);
  out << "p,omega_mean,omega_lower,omega_upper\n";
  for (std::size_t i = 0; i < points; ++i) {
    const double p = static_cast<double>(i) / static_cast<double>(points - 1);
    const std::size_t k = p_interval(summary.omega_cutpoints, p);
    const auto& e = summary.omega.at(k);
    out << format_number(p) << ',' << format_number(e.mean) << ',' << format_number(e.lower) << ','
        << format_number(e.upper) << '\n';
  }
}

}  // namespace metabias::selection
