#include "metabias/selection/weight_function.hpp"

#include <algorithm>
#include <cmath>

#include "metabias/error.hpp"
#include "metabias/stats.hpp"

namespace metabias::selection {

WeightFunction::WeightFunction(std::vector<double> cutpoints, std::vector<double> omegas)
    : cutpoints_(std::move(cutpoints)), omegas_(std::move(omegas)) {
  if (omegas_.size() != cutpoints_.size() + 1)
    throw DomainError("weight function needs one more weight than cutpoints");
  for (std::size_t i = 0; i < cutpoints_.size(); ++i) {
    if (!(cutpoints_[i] > 0.0 && cutpoints_[i] < 1.0)) throw DomainError("cutpoints must lie in (0, 1)");
    if (i > 0 && !(cutpoints_[i] > cutpoints_[i - 1])) throw DomainError("cutpoints must be strictly ascending");
  }
  if (omegas_[0] != 1.0) throw DomainError("weight of the most significant interval must be 1");
  for (double w : omegas_)
    if (!(w > 0.0 && w <= 1.0)) throw DomainError("weights must lie in (0, 1]");
}

WeightFunction WeightFunction::uniform(std::vector<double> cutpoints) {
  std::vector<double> ones(cutpoints.size() + 1, 1.0);
  return WeightFunction(std::move(cutpoints), std::move(ones));
}

std::size_t WeightFunction::interval_of(double p) const { return p_interval(cutpoints_, p); }

std::size_t p_interval(const std::vector<double>& cutpoints, double p) {
  std::size_t j = 0;
  while (j < cutpoints.size() && p > cutpoints[j]) ++j;
  return j;
}

std::vector<double> critical_z(const std::vector<double>& cutpoints) {
  std::vector<double> z;
  z.reserve(cutpoints.size());
  for (double c : cutpoints) z.push_back(stats::normal_quantile(1.0 - c / 2.0));
  return z;
}

void interval_probabilities(const std::vector<double>& crit, double mean, double variance, double se,
                            std::vector<double>& out) {
  const double sd = std::sqrt(variance);
  out.resize(crit.size() + 1);
  // tail(c) = Pr[|X| >= se * z_c]; tail is increasing in the cutpoint.
  double prev_tail = 0.0;
  for (std::size_t j = 0; j < crit.size(); ++j) {
    const double t = se * crit[j];
    const double tail = stats::normal_ccdf((t - mean) / sd) + stats::normal_ccdf((t + mean) / sd);
    out[j] = tail - prev_tail;
    prev_tail = tail;
  }
  out[crit.size()] = 1.0 - prev_tail;
}

double selection_normalizer(const std::vector<double>& crit, const std::vector<double>& omegas, double mean,
                            double variance, double se) {
  if (std::all_of(omegas.begin(), omegas.end(), [](double w) { return w == 1.0; })) return 1.0;
  const double sd = std::sqrt(variance);
  double prev_tail = 0.0;
  double a = 0.0;
  for (std::size_t j = 0; j < crit.size(); ++j) {
    const double t = se * crit[j];
    const double tail = stats::normal_ccdf((t - mean) / sd) + stats::normal_ccdf((t + mean) / sd);
    a += omegas[j] * (tail - prev_tail);
    prev_tail = tail;
  }
  return a + omegas[crit.size()] * (1.0 - prev_tail);
}

}  // namespace metabias::selection
