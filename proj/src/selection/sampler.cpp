#include "metabias/selection/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "metabias/error.hpp"
#include "metabias/optim.hpp"
#include "metabias/rng.hpp"
#include "metabias/stats.hpp"

namespace metabias::selection {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

bool cholesky_of(const Eigen::MatrixXd& cov, Eigen::MatrixXd& chol) {
  if (!cov.allFinite()) return false;
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) return false;
  chol = llt.matrixL();
  return chol.allFinite() && chol.diagonal().minCoeff() > 0.0;
}

}  // namespace

Eigen::VectorXd initial_point(const Parameterization& param, const EffectData& data) {
  Eigen::VectorXd u = Eigen::VectorXd::Zero(param.dim());
  const auto names = param.names();
  double sw = 0.0, swt = 0.0, mean_var = 0.0;
  for (std::size_t q = 0; q < data.size(); ++q) {
    const double w = 1.0 / data.variance()[q];
    sw += w;
    swt += w * data.theta()[q];
    mean_var += data.variance()[q];
  }
  const double wmean = swt / sw;
  mean_var /= static_cast<double>(data.size());
  const double excess = std::max(0.0, stats::sd(data.theta()) * stats::sd(data.theta()) - mean_var);
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == "mu") u[static_cast<Eigen::Index>(i)] = wmean;
    if (names[i] == "log_tau") u[static_cast<Eigen::Index>(i)] = std::log(std::max(0.01, std::sqrt(excess)));
  }
  return u;
}

LaplaceFit find_mode(const LogPosterior& target) {
  const Parameterization& param = target.parameterization();
  const int d = param.dim();
  LaplaceFit fit;
  fit.mode = Eigen::VectorXd::Zero(d);
  if (d == 0) {
    fit.log_posterior = target(fit.mode);
    fit.covariance = Eigen::MatrixXd::Zero(0, 0);
    fit.chol = fit.covariance;
    fit.hessian_ok = true;
    return fit;
  }
  const auto names = param.names();
  const Eigen::VectorXd base = initial_point(param, target.data());
  std::vector<Eigen::VectorXd> starts = {base};
  for (double log_tau : {std::log(0.01), std::log(0.3)}) {
    Eigen::VectorXd s = base;
    bool changed = false;
    for (int i = 0; i < d; ++i)
      if (names[static_cast<std::size_t>(i)] == "log_tau") {
        s[i] = log_tau;
        changed = true;
      }
    if (changed) starts.push_back(s);
  }
  for (double slope : {-1.0, 1.0}) {
    Eigen::VectorXd s = base;
    bool changed = false;
    for (int i = 0; i < d; ++i)
      if (names[static_cast<std::size_t>(i)].rfind("beta_", 0) == 0) {
        s[i] = slope;
        changed = true;
      }
    if (changed) starts.push_back(s);
  }

  const optim::Objective neg = [&](const Eigen::VectorXd& u) { return -target(u); };
  double best = std::numeric_limits<double>::infinity();
  for (const auto& s : starts) {
    auto r = optim::minimize_bfgs(neg, s, {.max_iterations = 500});
    if (std::isfinite(r.value) && r.value < best) {
      best = r.value;
      fit.mode = r.x;
    }
  }
  fit.log_posterior = -best;

  const Eigen::MatrixXd hess = optim::numeric_hessian(neg, fit.mode);
  Eigen::MatrixXd cov;
  Eigen::LLT<Eigen::MatrixXd> llt(hess);
  if (hess.allFinite() && llt.info() == Eigen::Success) {
    cov = llt.solve(Eigen::MatrixXd::Identity(d, d));
    cov = 0.5 * (cov + cov.transpose());
    fit.hessian_ok = cholesky_of(cov, fit.chol);
  }
  if (!fit.hessian_ok) {
    cov = Eigen::MatrixXd::Identity(d, d) * 0.01;
    for (int i = 0; i < d; ++i)
      if (hess(i, i) > 0.0 && std::isfinite(hess(i, i))) cov(i, i) = 1.0 / hess(i, i);
    cholesky_of(cov, fit.chol);
  }
  fit.covariance = cov;
  return fit;
}

double split_rhat(const std::vector<std::vector<double>>& chains) {
  std::vector<std::vector<double>> halves;
  for (const auto& c : chains) {
    const std::size_t h = c.size() / 2;
    if (h < 2) return std::numeric_limits<double>::quiet_NaN();
    halves.emplace_back(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(h));
    halves.emplace_back(c.end() - static_cast<std::ptrdiff_t>(h), c.end());
  }
  const double n = static_cast<double>(halves.front().size());
  const double m = static_cast<double>(halves.size());
  std::vector<double> means;
  double w = 0.0;
  for (const auto& h : halves) {
    means.push_back(stats::mean(h));
    const double s = stats::sd(h);
    w += s * s;
  }
  w /= m;
  const double sd_means = stats::sd(means);
  const double b = n * sd_means * sd_means;
  if (w <= 0.0) return b <= 0.0 ? 1.0 : std::numeric_limits<double>::infinity();
  const double var_plus = (n - 1.0) / n * w + b / n;
  return std::sqrt(var_plus / w);
}

ModelDraws sample_posterior(const ModelSpec& model, const EffectData& data, const SamplerConfig& config,
                            const PriorConfig& priors, std::uint64_t seed) {
  if (config.chains < 1 || config.burn_in < 0 || config.iterations <= config.burn_in)
    throw ValidationError("sampler needs chains >= 1 and iterations > burn_in >= 0");
  const Parameterization param(model, priors);
  const LogPosterior target(param, data);
  const int d = param.dim();
  const int keep = config.iterations - config.burn_in;

  ModelDraws out;
  out.chains = config.chains;
  out.draws_per_chain = keep;
  out.names = param.names();
  const std::size_t total = static_cast<std::size_t>(config.chains) * static_cast<std::size_t>(keep);
  out.mu.reserve(total);
  out.tau.reserve(total);
  out.pet.reserve(total);
  out.peese.reserve(total);
  if (is_selection(model.bias)) out.omegas.assign(param.n_weights(), {});
  for (auto& w : out.omegas) w.reserve(total);

  const auto record = [&](const Eigen::VectorXd& u) {
    const ParameterPoint p = param.to_point(u);
    out.mu.push_back(p.mu);
    out.tau.push_back(p.tau);
    out.pet.push_back(p.pet);
    out.peese.push_back(p.peese);
    for (std::size_t j = 0; j < out.omegas.size(); ++j) out.omegas[j].push_back(p.omegas[j]);
  };

  if (d == 0) {
    const Eigen::VectorXd empty(0);
    for (std::size_t i = 0; i < total; ++i) record(empty);
    out.unconstrained.assign(static_cast<std::size_t>(config.chains), Eigen::MatrixXd(keep, 0));
    return out;
  }

  const LaplaceFit fit = find_mode(target);
  std::vector<double> accept_total(static_cast<std::size_t>(d), 0.0);

  for (int c = 0; c < config.chains; ++c) {
    Rng rng(derive_seed(seed, "chain", static_cast<std::uint64_t>(c)));
    std::normal_distribution<double> std_normal(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    Eigen::VectorXd u = fit.mode;
    {
      Eigen::VectorXd z(d);
      for (int i = 0; i < d; ++i) z[i] = std_normal(rng);
      const Eigen::VectorXd start = fit.mode + fit.chol * z;
      if (target(start) > kNegInf) u = start;
    }
    double lp = target(u);
    Eigen::MatrixXd basis = fit.chol;
    std::vector<double> log_scale(static_cast<std::size_t>(d), 0.0);
    std::vector<int> batch_accepts(static_cast<std::size_t>(d), 0);
    std::vector<int> kept_accepts(static_cast<std::size_t>(d), 0);
    const int batch = 50;
    int batch_index = 0;
    const int rebasis_at = config.burn_in / 2;
    std::vector<Eigen::VectorXd> warm;
    Eigen::MatrixXd chain(keep, d);

    for (int it = 0; it < config.iterations; ++it) {
      for (int k = 0; k < d; ++k) {
        const double step = std::exp(log_scale[static_cast<std::size_t>(k)]) * std_normal(rng);
        const Eigen::VectorXd prop = u + step * basis.col(k);
        const double lpp = target(prop);
        if (lpp > kNegInf && std::log(unif(rng)) < lpp - lp) {
          u = prop;
          lp = lpp;
          if (it < config.burn_in) {
            ++batch_accepts[static_cast<std::size_t>(k)];
          } else {
            ++kept_accepts[static_cast<std::size_t>(k)];
          }
        }
      }
      if (it < config.burn_in) {
        if (it >= config.burn_in / 4 && it < rebasis_at) warm.push_back(u);
        if ((it + 1) % batch == 0) {
          ++batch_index;
          const double delta = std::min(0.25, 1.0 / std::sqrt(static_cast<double>(batch_index)));
          for (int k = 0; k < d; ++k) {
            const double rate = batch_accepts[static_cast<std::size_t>(k)] / static_cast<double>(batch);
            log_scale[static_cast<std::size_t>(k)] += rate > config.target_acceptance ? delta : -delta;
            batch_accepts[static_cast<std::size_t>(k)] = 0;
          }
        }
        if (it + 1 == rebasis_at && d >= 2 && warm.size() >= static_cast<std::size_t>(10 * d)) {
          Eigen::MatrixXd m(static_cast<Eigen::Index>(warm.size()), d);
          for (std::size_t i = 0; i < warm.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = warm[i].transpose();
          const Eigen::MatrixXd centered = m.rowwise() - m.colwise().mean();
          const Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(warm.size() - 1);
          Eigen::MatrixXd chol;
          if (cholesky_of(cov, chol)) {
            basis = chol;
            std::fill(log_scale.begin(), log_scale.end(), 0.0);
          }
          warm.clear();
        }
      } else {
        chain.row(it - config.burn_in) = u.transpose();
        record(u);
      }
    }
    for (int k = 0; k < d; ++k)
      accept_total[static_cast<std::size_t>(k)] += kept_accepts[static_cast<std::size_t>(k)] / static_cast<double>(keep);
    out.unconstrained.push_back(std::move(chain));
  }

  out.acceptance.resize(static_cast<std::size_t>(d));
  out.rhat.resize(static_cast<std::size_t>(d));
  out.max_rhat = 1.0;
  for (int k = 0; k < d; ++k) {
    out.acceptance[static_cast<std::size_t>(k)] = accept_total[static_cast<std::size_t>(k)] / config.chains;
    std::vector<std::vector<double>> per_chain;
    for (const auto& ch : out.unconstrained) {
      per_chain.emplace_back(ch.col(k).data(), ch.col(k).data() + ch.rows());
    }
    const double r = split_rhat(per_chain);
    out.rhat[static_cast<std::size_t>(k)] = r;
    if (std::isnan(r) || r > out.max_rhat) out.max_rhat = std::isnan(r) ? out.max_rhat : r;
  }
  out.converged = out.max_rhat < config.rhat_threshold;
  return out;
}

}  // namespace metabias::selection
