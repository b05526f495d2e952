#include "metabias/pooling.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "metabias/error.hpp"
#include "metabias/json_io.hpp"
#include "metabias/stats.hpp"

namespace metabias {

PooledEstimate uwls(const MetaDataset& data) {
  data.require_poolable();
  const auto& est = data.estimates();
  const std::size_t n = est.size();
  const std::size_t g = data.n_studies();

  PooledEstimate out;
  out.n_estimates = n;
  out.n_studies = g;
  out.weights.resize(n);
  double sw = 0.0;
  double swt = 0.0;
  for (std::size_t q = 0; q < n; ++q) {
    const double w = 1.0 / (est[q].se * est[q].se);
    out.weights[q] = w;
    sw += w;
    swt += w * est[q].theta;
  }
  out.mu_hat = swt / sw;

  double rss = 0.0;
  std::vector<double> score(g, 0.0);
  for (std::size_t q = 0; q < n; ++q) {
    const double e = est[q].theta - out.mu_hat;
    rss += out.weights[q] * e * e;
    score[data.study_index()[q]] += out.weights[q] * e;
  }
  out.se_naive = std::sqrt(rss / static_cast<double>(n - 1) / sw);

  double meat = 0.0;
  for (double s : score) meat += s * s;
  const double gd = static_cast<double>(g);
  out.se_cluster = std::sqrt(gd / (gd - 1.0) * meat) / sw;

  if (out.se_cluster > 0.0) {
    out.t_cluster = out.mu_hat / out.se_cluster;
    out.p_value_cluster = stats::two_sided_p_t(out.t_cluster, gd - 1.0);
  } else {
    // Every residual is zero; the estimate is exact.
    out.t_cluster = out.mu_hat == 0.0 ? 0.0 : std::copysign(INFINITY, out.mu_hat);
    out.p_value_cluster = out.mu_hat == 0.0 ? 1.0 : 0.0;
  }
  return out;
}

nlohmann::json PooledEstimate::to_json() const {
  return {{"method", "uwls"},
          {"mu_hat", mu_hat},
          {"se_naive", se_naive},
          {"se_cluster", se_cluster},
          {"t_cluster", t_cluster},
          {"df", static_cast<double>(n_studies) - 1.0},
          {"p_value_cluster", p_value_cluster},
          {"n_estimates", n_estimates},
          {"n_studies", n_studies}};
}

std::vector<FunnelRow> funnel_data(const MetaDataset& data, double mu, std::size_t grid_points) {
  if (!std::isfinite(mu)) throw DomainError("funnel centre must be finite");
  grid_points = std::max<std::size_t>(grid_points, 50);
  std::vector<FunnelRow> rows;
  double max_se = 0.0;
  for (const auto& e : data.estimates()) {
    rows.push_back({FunnelRow::Kind::point, e.theta, e.se});
    max_se = std::max(max_se, e.se);
  }
  for (std::size_t i = 0; i < grid_points; ++i) {
    const double se = max_se * static_cast<double>(i) / static_cast<double>(grid_points - 1);
    rows.push_back({FunnelRow::Kind::band_low, mu - 1.96 * se, se});
  }
  for (std::size_t i = 0; i < grid_points; ++i) {
    const double se = max_se * static_cast<double>(i) / static_cast<double>(grid_points - 1);
    rows.push_back({FunnelRow::Kind::band_high, mu + 1.96 * se, se});
  }
  return rows;
}

void write_funnel_csv(std::ostream& out, const std::vector<FunnelRow>& rows) {
  out << "kind,theta,se\n";
  for (const auto& r : rows) {
    const char* kind = r.kind == FunnelRow::Kind::point      ? "point"
                       : r.kind == FunnelRow::Kind::band_low ? "band_low"
                                                             : "band_high";
    out << kind << ',' << format_number(r.theta) << ',' << format_number(r.se) << '\n';
  }
}

}  // namespace metabias
