#pragma once

#include <vector>

namespace metabias::selection {

/// Step function of relative publication probability over two-sided p-value
/// intervals [0, c1], (c1, c2], ..., (c_{J-1}, 1]. Weights are reported
/// relative to the most significant interval, so omegas()[0] == 1.
class WeightFunction {
 public:
  WeightFunction(std::vector<double> cutpoints, std::vector<double> omegas);

  /// All weights equal to 1 (no selection).
  static WeightFunction uniform(std::vector<double> cutpoints);

  const std::vector<double>& cutpoints() const noexcept { return cutpoints_; }
  const std::vector<double>& omegas() const noexcept { return omegas_; }
  std::size_t intervals() const noexcept { return omegas_.size(); }

  /// Interval holding p; a p-value equal to a cutpoint belongs to the more
  /// significant (lower) interval.
  std::size_t interval_of(double p) const;
  double operator()(double p) const { return omegas_[interval_of(p)]; }

 private:
  std::vector<double> cutpoints_;
  std::vector<double> omegas_;
};

/// Critical |z| for each cutpoint, z_c = Phi^{-1}(1 - c / 2).
std::vector<double> critical_z(const std::vector<double>& cutpoints);

/// Interval index of a two-sided p-value against ascending cutpoints.
std::size_t p_interval(const std::vector<double>& cutpoints, double p);

/// Probability that the two-sided p-value of an estimate with standard error
/// `se` falls in each interval when the estimate is Normal(mean, variance).
/// `crit` comes from critical_z(cutpoints); the result has crit.size() + 1
/// entries summing to 1.
void interval_probabilities(const std::vector<double>& crit, double mean, double variance, double se,
                            std::vector<double>& out);

/// Per-observation normalizer sum_j omega_j Pr[p in interval j].
double selection_normalizer(const std::vector<double>& crit, const std::vector<double>& omegas, double mean,
                            double variance, double se);

}  // namespace metabias::selection
