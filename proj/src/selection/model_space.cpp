#include "metabias/selection/model_space.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "metabias/error.hpp"
#include "metabias/stats.hpp"

namespace metabias::selection {

std::string to_string(BiasKind kind) {
  switch (kind) {
    case BiasKind::none: return "none";
    case BiasKind::weightfn_05: return "weightfn_05";
    case BiasKind::weightfn_05_10: return "weightfn_05_10";
    case BiasKind::pet: return "PET";
    case BiasKind::peese: return "PEESE";
  }
  return "none";
}

BiasKind bias_kind_from_string(const std::string& s) {
  if (s == "none") return BiasKind::none;
  if (s == "weightfn_05") return BiasKind::weightfn_05;
  if (s == "weightfn_05_10") return BiasKind::weightfn_05_10;
  if (s == "PET" || s == "pet") return BiasKind::pet;
  if (s == "PEESE" || s == "peese") return BiasKind::peese;
  throw ValidationError("unknown bias kind '" + s + "'");
}

bool is_selection(BiasKind kind) { return kind == BiasKind::weightfn_05 || kind == BiasKind::weightfn_05_10; }

std::vector<double> cutpoints_for(BiasKind kind) {
  if (kind == BiasKind::weightfn_05) return {0.05};
  if (kind == BiasKind::weightfn_05_10) return {0.05, 0.10};
  return {};
}

std::string ModelSpec::label() const {
  return std::string(has_effect ? "effect" : "no-effect") + "/" +
         (has_heterogeneity ? "heterogeneity" : "no-heterogeneity") + "/" + to_string(bias);
}

std::vector<ModelSpec> build_model_space() {
  constexpr BiasKind kinds[] = {BiasKind::none, BiasKind::weightfn_05, BiasKind::weightfn_05_10, BiasKind::pet,
                                BiasKind::peese};
  std::vector<ModelSpec> out;
  for (bool effect : {false, true})
    for (bool het : {false, true})
      for (BiasKind k : kinds) out.push_back(ModelSpec{effect, het, k, 1.0 / 20.0, std::nullopt});
  return out;
}

Parameterization::Parameterization(ModelSpec spec, PriorConfig priors)
    : spec_(std::move(spec)), priors_(priors) {
  int d = 0;
  if (spec_.has_effect) i_mu_ = d++;
  if (spec_.has_heterogeneity) i_tau_ = d++;
  if (is_selection(spec_.bias)) {
    n_intervals_ = cutpoints_for(spec_.bias).size() + 1;
    if (spec_.fixed_omegas) {
      if (spec_.fixed_omegas->size() != n_intervals_) throw DomainError("fixed weights have the wrong length");
      for (double w : *spec_.fixed_omegas)
        if (!(w > 0.0 && w <= 1.0)) throw DomainError("weights must lie in (0, 1]");
    } else {
      free_weights_ = true;
      i_w_ = d;
      d += static_cast<int>(n_intervals_) - 1;
    }
  }
  if (spec_.bias == BiasKind::pet || spec_.bias == BiasKind::peese) i_slope_ = d++;
  dim_ = d;
}

std::vector<std::string> Parameterization::names() const {
  std::vector<std::string> out;
  if (i_mu_ >= 0) out.push_back("mu");
  if (i_tau_ >= 0) out.push_back("log_tau");
  if (free_weights_)
    for (std::size_t k = 1; k < n_intervals_; ++k) out.push_back("weight_alr_" + std::to_string(k));
  if (i_slope_ >= 0) out.push_back(spec_.bias == BiasKind::pet ? "beta_pet" : "beta_peese");
  return out;
}

std::vector<double> Parameterization::omegas_from_alr(const double* z, std::size_t j_intervals) {
  // eta_0 is the reference increment (least significant interval).
  double m = 0.0;
  for (std::size_t i = 0; i + 1 < j_intervals; ++i) m = std::max(m, z[i]);
  std::vector<double> eta(j_intervals);
  double denom = std::exp(-m);
  for (std::size_t i = 0; i + 1 < j_intervals; ++i) denom += std::exp(z[i] - m);
  eta[0] = std::exp(-m) / denom;
  for (std::size_t i = 1; i < j_intervals; ++i) eta[i] = std::exp(z[i - 1] - m) / denom;
  std::vector<double> omegas(j_intervals);
  double acc = 0.0;
  for (std::size_t k = 0; k < j_intervals; ++k) {
    acc += eta[k];
    omegas[j_intervals - 1 - k] = std::min(acc, 1.0);
  }
  omegas[0] = 1.0;
  return omegas;
}

ParameterPoint Parameterization::to_point(const Eigen::VectorXd& u) const {
  ParameterPoint p;
  if (i_mu_ >= 0) p.mu = u[i_mu_];
  if (i_tau_ >= 0) p.tau = std::exp(u[i_tau_]);
  if (is_selection(spec_.bias)) {
    if (free_weights_) {
      p.omegas = omegas_from_alr(u.data() + i_w_, n_intervals_);
    } else {
      p.omegas = *spec_.fixed_omegas;
    }
  }
  if (i_slope_ >= 0) {
    if (spec_.bias == BiasKind::pet) {
      p.pet = u[i_slope_];
    } else {
      p.peese = u[i_slope_];
    }
  }
  return p;
}

double Parameterization::log_prior(const Eigen::VectorXd& u) const {
  double lp = 0.0;
  if (i_mu_ >= 0) lp += stats::log_normal_pdf(u[i_mu_], 0.0, priors_.mu_sd * priors_.mu_sd);
  if (i_tau_ >= 0) {
    // Inverse-gamma density of tau times d tau / d log tau.
    const double lt = u[i_tau_];
    const double a = priors_.tau_shape;
    const double b = priors_.tau_scale;
    lp += a * std::log(b) - std::lgamma(a) - a * lt - b * std::exp(-lt);
  }
  if (free_weights_) {
    const std::size_t j = n_intervals_;
    const double* z = u.data() + i_w_;
    double lse = 0.0;  // log(1 + sum exp z)
    {
      double m = 0.0;
      for (std::size_t i = 0; i + 1 < j; ++i) m = std::max(m, z[i]);
      double s = std::exp(-m);
      for (std::size_t i = 0; i + 1 < j; ++i) s += std::exp(z[i] - m);
      lse = m + std::log(s);
    }
    double sum_log_eta = -lse;
    for (std::size_t i = 0; i + 1 < j; ++i) sum_log_eta += z[i] - lse;
    const double alpha = priors_.omega_alpha;
    const double jd = static_cast<double>(j);
    // Dirichlet density plus the alr Jacobian prod(eta).
    lp += std::lgamma(jd * alpha) - jd * std::lgamma(alpha) + alpha * sum_log_eta;
  }
  if (i_slope_ >= 0) {
    const double s = spec_.bias == BiasKind::pet ? priors_.pet_scale : priors_.peese_scale;
    const double x = u[i_slope_] / s;
    lp += -std::log(std::numbers::pi * s) - std::log1p(x * x);
  }
  if (std::isnan(lp)) return -std::numeric_limits<double>::infinity();
  return lp;
}

}  // namespace metabias::selection
