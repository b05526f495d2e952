#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"
#include "metabias/dataset.hpp"

namespace metabias {

/// Unrestricted weighted least squares estimate of the mean effect.
struct PooledEstimate {
  double mu_hat = 0.0;
  /// Conventional WLS standard error, residual dispersion estimated from the data.
  double se_naive = 0.0;
  /// Study-clustered sandwich standard error with G/(G-1) correction.
  double se_cluster = 0.0;
  double t_cluster = 0.0;
  /// Two-sided, t reference with G-1 degrees of freedom.
  double p_value_cluster = 1.0;
  std::vector<double> weights;
  std::size_t n_estimates = 0;
  std::size_t n_studies = 0;

  nlohmann::json to_json() const;
};

PooledEstimate uwls(const MetaDataset& data);

struct FunnelRow {
  enum class Kind { point, band_low, band_high };
  Kind kind;
  double theta;
  double se;
};

/// Scatter points plus pseudo 95% band lines mu +/- 1.96 se over an evenly
/// spaced se grid from 0 to the largest observed se.
std::vector<FunnelRow> funnel_data(const MetaDataset& data, double mu, std::size_t grid_points = 100);
void write_funnel_csv(std::ostream& out, const std::vector<FunnelRow>& rows);

}  // namespace metabias
