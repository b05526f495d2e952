#include "metabias/bma_screen.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <limits>
#include <ostream>
#include <thread>

#include <Eigen/Dense>

#include "metabias/error.hpp"
#include "metabias/json_io.hpp"
#include "metabias/metareg.hpp"
#include "metabias/stats.hpp"

namespace metabias {

namespace {

constexpr std::uint64_t kChunk = 4096;

// Partial sums over one block of model indices, scaled by exp(-max_log).
struct ChunkSums {
  double max_log = -std::numeric_limits<double>::infinity();
  double total = 0.0;
  std::vector<double> inclusion;  // per regressor (forced first, then candidates)
  std::vector<double> beta;       // per regressor, sum of weight * posterior mean

  explicit ChunkSums(std::size_t p) : inclusion(p, 0.0), beta(p, 0.0) {}

  void rescale_to(double new_max) {
    if (max_log == new_max) return;
    const double f = max_log == -std::numeric_limits<double>::infinity() ? 0.0 : std::exp(max_log - new_max);
    total *= f;
    for (auto& v : inclusion) v *= f;
    for (auto& v : beta) v *= f;
    max_log = new_max;
  }

  void merge(const ChunkSums& other) {
    if (other.max_log == -std::numeric_limits<double>::infinity()) return;
    const double m = std::max(max_log, other.max_log);
    rescale_to(m);
    const double f = std::exp(other.max_log - m);
    total += f * other.total;
    for (std::size_t i = 0; i < inclusion.size(); ++i) {
      inclusion[i] += f * other.inclusion[i];
      beta[i] += f * other.beta[i];
    }
  }
};

// In-place Cholesky solve of the s x s system a x = b (a row-major, s <= cap).
// Returns false if a is not positive definite.
bool cholesky_solve(std::vector<double>& a, std::vector<double>& b, std::size_t s) {
  for (std::size_t j = 0; j < s; ++j) {
    double d = a[j * s + j];
    for (std::size_t k = 0; k < j; ++k) d -= a[j * s + k] * a[j * s + k];
    if (!(d > 0.0)) return false;
    d = std::sqrt(d);
    a[j * s + j] = d;
    for (std::size_t i = j + 1; i < s; ++i) {
      double v = a[i * s + j];
      for (std::size_t k = 0; k < j; ++k) v -= a[i * s + k] * a[j * s + k];
      a[i * s + j] = v / d;
    }
  }
  for (std::size_t i = 0; i < s; ++i) {
    double v = b[i];
    for (std::size_t k = 0; k < i; ++k) v -= a[i * s + k] * b[k];
    b[i] = v / a[i * s + i];
  }
  for (std::size_t ii = s; ii-- > 0;) {
    double v = b[ii];
    for (std::size_t k = ii + 1; k < s; ++k) v -= a[k * s + ii] * b[k];
    b[ii] = v / a[ii * s + ii];
  }
  return true;
}

}  // namespace

double g_prior_log_evidence(std::size_t n, std::size_t k, double r2, double g) {
  const double nd = static_cast<double>(n);
  const double kd = static_cast<double>(k);
  return 0.5 * (nd - 1.0 - kd) * std::log1p(g) - 0.5 * (nd - 1.0) * std::log1p(g * (1.0 - r2));
}

BmaScreenResult bma_screen(const MetaDataset& data, const std::vector<std::string>& candidates,
                           const std::vector<std::string>& forced, double threshold, const BmaConfig& config) {
  if (!(threshold > 0.0 && threshold < 1.0)) throw DomainError("threshold must lie in (0, 1)");
  if (candidates.size() > config.max_candidates) {
    throw EnumerationBoundError("exact enumeration is limited to " + std::to_string(config.max_candidates) +
                                " candidates (2^" + std::to_string(config.max_candidates) + " models); got " +
                                std::to_string(candidates.size()) + ", reduce the candidate list");
  }
  for (const auto& c : candidates)
    if (std::find(forced.begin(), forced.end(), c) != forced.end())
      throw ValidationError("'" + c + "' is both a candidate and a forced regressor");

  std::vector<std::string> all = forced;
  all.insert(all.end(), candidates.begin(), candidates.end());
  build_design(data, all);  // column existence and full-rank check

  const std::size_t n = data.size();
  const std::size_t nf = forced.size();
  const std::size_t m = candidates.size();
  const std::size_t p = nf + m;
  if (n <= p + 1) throw InsufficientDataError("screening needs more estimates than regressors plus one");

  Eigen::VectorXd w = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(n));
  if (config.precision_weighted) {
    for (std::size_t i = 0; i < n; ++i) {
      const double se = data.estimates()[i].se;
      w[static_cast<Eigen::Index>(i)] = 1.0 / (se * se);
    }
  }
  const Eigen::VectorXd sqrt_w = w.array().sqrt();
  const double sw = w.sum();

  std::vector<double> scale(p, 1.0);
  Eigen::MatrixXd z(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
  for (std::size_t j = 0; j < p; ++j) {
    auto col = data.column(all[j]);
    Eigen::Map<Eigen::VectorXd> v(col.data(), static_cast<Eigen::Index>(n));
    const bool continuous_candidate =
        j >= nf && !(data.schema().kind_of(all[j]) == ModeratorKind::binary);
    if (continuous_candidate) {
      const double s = stats::sd(col);
      const double mean = stats::mean(col);
      if (s > 0.0) {
        scale[j] = s;
        v = (v.array() - mean) / s;
      }
    }
    const double wmean = w.dot(v) / sw;
    z.col(static_cast<Eigen::Index>(j)) = sqrt_w.array() * (v.array() - wmean);
  }
  const auto theta = data.thetas();
  Eigen::Map<const Eigen::VectorXd> yv(theta.data(), static_cast<Eigen::Index>(n));
  const double ymean = w.dot(yv) / sw;
  const Eigen::VectorXd y = sqrt_w.array() * (yv.array() - ymean);

  const Eigen::MatrixXd gram = z.transpose() * z;
  const Eigen::VectorXd zty = z.transpose() * y;
  const double sst = y.squaredNorm();
  if (!(sst > 0.0)) throw DomainError("theta has no variation; inclusion probabilities are undefined");

  const double g = std::max(static_cast<double>(n), static_cast<double>(p) * static_cast<double>(p));
  const double shrink = g / (1.0 + g);
  const std::uint64_t n_models = std::uint64_t{1} << m;
  const std::uint64_t n_chunks = (n_models + kChunk - 1) / kChunk;

  std::vector<double> log_model_prior(m + 1, 0.0);
  if (config.model_prior == ModelPrior::beta_binomial) {
    for (std::size_t k = 0; k <= m; ++k) {
      const double md = static_cast<double>(m), kd = static_cast<double>(k);
      log_model_prior[k] = -std::log(md + 1.0) - (std::lgamma(md + 1.0) - std::lgamma(kd + 1.0) - std::lgamma(md - kd + 1.0));
    }
  }

  std::vector<ChunkSums> chunks(n_chunks, ChunkSums(p));
  std::atomic<std::uint64_t> next{0};
  std::atomic<bool> failed{false};
  const auto work = [&] {
    std::vector<std::size_t> idx(p);
    std::vector<double> a(p * p), b(p);
    std::vector<double> log_ev(kChunk);
    for (std::uint64_t c = next++; c < n_chunks; c = next++) {
      ChunkSums& sums = chunks[c];
      const std::uint64_t lo = c * kChunk;
      const std::uint64_t hi = std::min(n_models, lo + kChunk);
      // Two passes per chunk: evidences first, then weighted sums.
      std::vector<std::vector<double>> betas(hi - lo);
      for (std::uint64_t mask = lo; mask < hi; ++mask) {
        std::size_t s = 0;
        for (std::size_t j = 0; j < nf; ++j) idx[s++] = j;
        for (std::size_t j = 0; j < m; ++j)
          if (mask >> j & 1U) idx[s++] = nf + j;
        for (std::size_t r = 0; r < s; ++r) {
          b[r] = zty[static_cast<Eigen::Index>(idx[r])];
          for (std::size_t q = 0; q < s; ++q)
            a[r * s + q] = gram(static_cast<Eigen::Index>(idx[r]), static_cast<Eigen::Index>(idx[q]));
        }
        double r2 = 0.0;
        if (s > 0) {
          std::vector<double> rhs(b.begin(), b.begin() + static_cast<std::ptrdiff_t>(s));
          if (!cholesky_solve(a, rhs, s)) {
            failed = true;
            return;
          }
          for (std::size_t r = 0; r < s; ++r) r2 += b[r] * rhs[r];
          r2 /= sst;
          betas[mask - lo] = std::move(rhs);
        }
        log_ev[mask - lo] = g_prior_log_evidence(n, s, std::min(r2, 1.0), g) +
                            log_model_prior[static_cast<std::size_t>(std::popcount(mask))];
        sums.max_log = std::max(sums.max_log, log_ev[mask - lo]);
      }
      for (std::uint64_t mask = lo; mask < hi; ++mask) {
        const double wgt = std::exp(log_ev[mask - lo] - sums.max_log);
        sums.total += wgt;
        std::size_t s = 0;
        const auto& beta = betas[mask - lo];
        for (std::size_t j = 0; j < nf; ++j, ++s) {
          sums.inclusion[j] += wgt;
          sums.beta[j] += wgt * shrink * beta[s];
        }
        for (std::size_t j = 0; j < m; ++j)
          if (mask >> j & 1U) {
            sums.inclusion[nf + j] += wgt;
            sums.beta[nf + j] += wgt * shrink * beta[s];
            ++s;
          }
      }
    }
  };
  const int jobs = std::max(1, config.jobs);
  if (jobs == 1 || n_chunks == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < jobs; ++t) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  if (failed) throw NumericalError("a candidate subset produced a singular Gram matrix");

  ChunkSums total(p);
  for (const auto& c : chunks) total.merge(c);

  BmaScreenResult res;
  res.candidates = candidates;
  res.threshold = threshold;
  res.n_models_evaluated = n_models;
  res.g = g;
  for (std::size_t j = 0; j < p; ++j) {
    const std::string& name = all[j];
    const bool is_forced = j < nf;
    const double pip = is_forced ? 1.0 : std::clamp(total.inclusion[j] / total.total, 0.0, 1.0);
    res.pips[name] = pip;
    res.posterior_mean_beta[name] = total.beta[j] / total.total / scale[j];
    if (is_forced) {
      res.forced.insert(name);
      res.included.insert(name);
    } else if (pip >= threshold) {
      res.included.insert(name);
    }
  }
  return res;
}

void write_screen_csv(std::ostream& out, const BmaScreenResult& result) {
  out << "moderator,pip,included,forced\n";
  std::vector<std::string> order(result.forced.begin(), result.forced.end());
  for (const auto& [name, pip] : result.pips)
    if (!result.forced.count(name) && std::find(result.candidates.begin(), result.candidates.end(), name) == result.candidates.end())
      order.push_back(name);
  order.insert(order.end(), result.candidates.begin(), result.candidates.end());
  for (const auto& name : order) {
    out << name << ',' << format_number(result.pips.at(name)) << ',' << (result.included.count(name) ? "yes" : "no")
        << ',' << (result.forced.count(name) ? "yes" : "no") << '\n';
  }
}

}  // namespace metabias
