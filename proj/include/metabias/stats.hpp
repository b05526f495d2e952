#pragma once

#include <span>
#include <utility>
#include <vector>

namespace metabias::stats {

inline constexpr double kLogSqrt2Pi = 0.91893853320467274178;

double normal_cdf(double x);
// Upper tail 1 - Phi(x), accurate for large x.
double normal_ccdf(double x);
double normal_quantile(double p);
double log_normal_pdf(double x, double mean, double variance);

// Two-sided p-value of a z statistic, 2 * (1 - Phi(|z|)).
double two_sided_p_normal(double z);
// Two-sided p-value of a t statistic with `df` degrees of freedom.
double two_sided_p_t(double t, double df);

double log_sum_exp(std::span<const double> xs);
double log_add_exp(double a, double b);

double mean(std::span<const double> xs);
// Sample standard deviation with the n-1 denominator; 0 for n < 2.
double sd(std::span<const double> xs);

// Quantile by linear interpolation between order statistics
// (h = (n-1) p). `sorted` must be ascending and non-empty.
double quantile_sorted(std::span<const double> sorted, double p);
double quantile(std::vector<double> xs, double p);

// Quantile of a discrete weighted distribution; weights need not be
// normalized. Uses the inverse of the step CDF (smallest value whose
// cumulative weight reaches p).
double weighted_quantile(std::vector<std::pair<double, double>> value_weight, double p);

}  // namespace metabias::stats
