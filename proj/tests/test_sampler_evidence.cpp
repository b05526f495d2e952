#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "metabias/error.hpp"
#include "metabias/rng.hpp"
#include "metabias/selection/evidence.hpp"
#include "metabias/selection/sampler.hpp"
#include "metabias/stats.hpp"
#include "oracles/oracles.hpp"

using namespace metabias;
using namespace metabias::selection;
using Catch::Approx;

namespace {

EffectData normal_data(std::size_t n, double mu, double tau, std::uint64_t seed, double se_lo = 0.05,
                       double se_hi = 0.5) {
  Rng rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::uniform_real_distribution<double> su(se_lo, se_hi);
  std::vector<double> theta, se;
  for (std::size_t i = 0; i < n; ++i) {
    se.push_back(su(rng));
    theta.push_back(mu + tau * nd(rng) + se.back() * nd(rng));
  }
  return EffectData(theta, se);
}

SamplerConfig short_run() {
  SamplerConfig c;
  c.iterations = 2000;
  c.burn_in = 500;
  return c;
}

}  // namespace

TEST_CASE("draw counts and determinism") {
  const auto data = normal_data(40, 0.2, 0.1, 1);
  const ModelSpec m{true, true, BiasKind::weightfn_05_10};
  auto cfg = short_run();
  cfg.chains = 3;
  const auto a = sample_posterior(m, data, cfg, {}, 42);
  const auto b = sample_posterior(m, data, cfg, {}, 42);
  CHECK(a.size() == 3u * 1500u);
  CHECK(a.draws_per_chain == 1500);
  REQUIRE(a.unconstrained.size() == 3);
  CHECK(a.unconstrained[0].rows() == 1500);
  CHECK(a.mu == b.mu);
  CHECK(a.tau == b.tau);
  CHECK(a.omegas == b.omegas);
  const auto c = sample_posterior(m, data, cfg, {}, 43);
  CHECK(a.mu != c.mu);
  for (double x : a.tau) CHECK(x > 0.0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a.omegas[0][i] == 1.0);
    CHECK(a.omegas[2][i] <= a.omegas[1][i]);
  }
}

TEST_CASE("zero-parameter model has no free coordinates") {
  const auto data = normal_data(10, 0.0, 0.0, 2);
  const ModelSpec m{false, false, BiasKind::none};
  const Parameterization param(m, {});
  CHECK(param.dim() == 0);
  const auto ev = log_marginal_likelihood(m, data, short_run(), {}, 1);
  CHECK(ev.method == EvidenceMethod::exact);
  CHECK(ev.log_evidence == log_likelihood(m, ParameterPoint{}, data));
}

TEST_CASE("effect-only posterior agrees with the conjugate normal posterior") {
  const auto data = normal_data(500, 0.5, 0.0, 3);
  const ModelSpec m{true, false, BiasKind::none};
  const auto draws = sample_posterior(m, data, short_run(), {}, 7);
  // Conjugate: precision = 1/4 + sum 1/se^2, mean = sum(theta/se^2) / precision.
  double prec = 1.0 / 4.0, num = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    prec += 1.0 / data.variance()[i];
    num += data.theta()[i] / data.variance()[i];
  }
  const double post_mean = num / prec, post_sd = 1.0 / std::sqrt(prec);
  const double m_hat = stats::mean(draws.mu);
  const double s_hat = stats::sd(draws.mu);
  CHECK(std::abs(m_hat - 0.5) < 3.0 * s_hat);
  CHECK(std::abs(m_hat - post_mean) < 0.1 * post_sd);
  CHECK(s_hat == Approx(post_sd).epsilon(0.1));
  CHECK(draws.converged);
}

TEST_CASE("effect-only evidence matches the normal-normal closed form") {
  for (std::uint64_t seed : {11u, 12u, 13u}) {
    const auto data = normal_data(25, 0.3, 0.0, seed);
    const double want = oracle::normal_normal_log_evidence(data.theta(), data.se(), 2.0);
    const auto q = quadrature_log_evidence({true, false, BiasKind::none}, data, {});
    CHECK(q.log_evidence == Approx(want).margin(1e-6));
    const ModelSpec m{true, false, BiasKind::none};
    const auto draws = sample_posterior(m, data, short_run(), {}, seed);
    const auto b = bridge_log_evidence(m, data, {}, draws, seed);
    CHECK(b.log_evidence == Approx(want).margin(1e-2));  // Monte Carlo error of a short run
  }
}

TEST_CASE("fixed uniform weights match the no-bias twin; free weights cost evidence") {
  const auto data = normal_data(60, 0.2, 0.1, 21);
  for (bool het : {false, true}) {
    const ModelSpec plain{true, het, BiasKind::none};
    ModelSpec fixed{true, het, BiasKind::weightfn_05_10};
    fixed.fixed_omegas = std::vector<double>{1.0, 1.0, 1.0};
    const auto a = quadrature_log_evidence(plain, data, {});
    const auto b = quadrature_log_evidence(fixed, data, {});
    CHECK(b.log_evidence == Approx(a.log_evidence).margin(1e-9));
  }
  const ModelSpec free{true, false, BiasKind::weightfn_05};
  const auto twin = quadrature_log_evidence({true, false, BiasKind::none}, data, {});
  const auto ev = quadrature_log_evidence(free, data, {});
  CHECK(ev.log_evidence < twin.log_evidence);
}

TEST_CASE("quadrature and bridge sampling agree on low-dimensional models") {
  const auto data = normal_data(50, 0.15, 0.15, 31);
  for (const ModelSpec& m : {ModelSpec{true, false, BiasKind::none}, ModelSpec{false, true, BiasKind::none},
                             ModelSpec{true, true, BiasKind::none}, ModelSpec{false, false, BiasKind::weightfn_05_10},
                             ModelSpec{false, true, BiasKind::pet}, ModelSpec{true, false, BiasKind::weightfn_05}}) {
    const auto q = quadrature_log_evidence(m, data, {});
    const auto draws = sample_posterior(m, data, short_run(), {}, 5);
    const auto b = bridge_log_evidence(m, data, {}, draws, 6);
    INFO(m.label());
    CHECK(std::abs(q.log_evidence - b.log_evidence) < 0.05);
  }
}

TEST_CASE("bridge sampling reports non-convergence with a trace") {
  const auto data = normal_data(30, 0.1, 0.1, 41);
  const ModelSpec m{true, true, BiasKind::pet};
  const auto draws = sample_posterior(m, data, short_run(), {}, 1);
  EvidenceConfig cfg;
  cfg.bridge_max_iterations = 2;
  cfg.bridge_tolerance = 0.0;
  try {
    bridge_log_evidence(m, data, {}, draws, 1, cfg);
    FAIL("expected ConvergenceError");
  } catch (const ConvergenceError& e) {
    CHECK(e.trace().size() == 2);
  }
}

TEST_CASE("split R-hat") {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::vector<std::vector<double>> good(4), bad(4);
  for (int c = 0; c < 4; ++c)
    for (int i = 0; i < 1000; ++i) {
      good[c].push_back(nd(rng));
      bad[c].push_back(nd(rng) + 3.0 * c);
    }
  CHECK(split_rhat(good) < 1.01);
  CHECK(split_rhat(bad) > 1.5);
}
