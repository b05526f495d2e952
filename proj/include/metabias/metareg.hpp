#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "metabias/dataset.hpp"

namespace metabias {

/// Intercept column followed by the requested moderators (the name "se"
/// refers to the standard-error column).
struct DesignMatrix {
  std::vector<std::string> columns;
  Eigen::MatrixXd values;
};

/// Throws RankDeficientError naming the columns involved in a linear
/// dependence.
DesignMatrix build_design(const MetaDataset& data, const std::vector<std::string>& moderators);

struct RemlOptions {
  /// Multi-start values applied to both variance components.
  std::vector<double> starts = {1e-6, 1.7782794100389228e-5, 3.1622776601683794e-4, 5.6234132519034911e-3, 1e-1};
  /// Skip estimation and evaluate the model at fixed (between, within).
  std::optional<std::pair<double, double>> fixed_variances;
};

struct RemlFit {
  std::vector<std::string> names;
  Eigen::VectorXd beta;
  Eigen::MatrixXd beta_cov;
  double tau2_between = 0.0;
  double tau2_within = 0.0;
  double log_restricted_likelihood = 0.0;
  std::size_t n_obs = 0;
  std::size_t n_studies = 0;
  bool converged = false;
  std::vector<std::string> trace;

  nlohmann::json to_json() const;
};

/// Restricted log likelihood of theta = X beta + u_study + w + e with
/// Var(u) = tau2_between, Var(w) = tau2_within, Var(e) = se^2.
double restricted_log_likelihood(const MetaDataset& data, const DesignMatrix& design, double tau2_between,
                                 double tau2_within);

/// REML over (tau2_between, tau2_within) >= 0, then GLS for beta.
RemlFit reml_fit(const MetaDataset& data, const std::vector<std::string>& moderators, const RemlOptions& options = {});

struct CoefficientRow {
  std::string name;
  double estimate = 0.0;
  double se = 0.0;
  double z = 0.0;
  double p = 1.0;
  std::string stars;
};

/// Normal-reference two-sided p-values; * p < 0.10, ** p < 0.05, *** p < 0.01.
std::vector<CoefficientRow> coefficient_table(const RemlFit& fit);
std::string significance_stars(double p);
void write_coefficient_csv(std::ostream& out, const std::vector<CoefficientRow>& rows);
nlohmann::json coefficient_json(const std::vector<CoefficientRow>& rows);

}  // namespace metabias
