#include "metabias/metareg.hpp"

#include <cmath>
#include <limits>
#include <ostream>
#include <sstream>

#include "metabias/error.hpp"
#include "metabias/json_io.hpp"
#include "metabias/optim.hpp"
#include "metabias/stats.hpp"

namespace metabias {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

// Sufficient quantities of the GLS problem at fixed variance components,
// accumulated study by study via Sherman-Morrison on each block
// V_r = diag(tau2_within + se^2) + tau2_between * J.
struct GlsPieces {
  Eigen::MatrixXd xtvx;
  Eigen::VectorXd xtvy;
  double ytvy = 0.0;
  double log_det_v = 0.0;
};

GlsPieces accumulate(const MetaDataset& data, const Eigen::MatrixXd& x, double tau2_between, double tau2_within) {
  const Eigen::Index k = x.cols();
  const std::size_t g = data.n_studies();
  const auto& est = data.estimates();
  const auto& study = data.study_index();

  std::vector<Eigen::VectorXd> xd(g, Eigen::VectorXd::Zero(k));
  std::vector<double> yd(g, 0.0), s(g, 0.0);
  GlsPieces p;
  p.xtvx = Eigen::MatrixXd::Zero(k, k);
  p.xtvy = Eigen::VectorXd::Zero(k);
  for (std::size_t i = 0; i < est.size(); ++i) {
    const double d = tau2_within + est[i].se * est[i].se;
    const std::size_t r = study[i];
    const auto xi = x.row(static_cast<Eigen::Index>(i)).transpose();
    const double y = est[i].theta;
    p.xtvx.noalias() += xi * xi.transpose() / d;
    p.xtvy += xi * (y / d);
    p.ytvy += y * y / d;
    p.log_det_v += std::log(d);
    xd[r] += xi / d;
    yd[r] += y / d;
    s[r] += 1.0 / d;
  }
  if (tau2_between > 0.0) {
    for (std::size_t r = 0; r < g; ++r) {
      const double denom = 1.0 + tau2_between * s[r];
      const double f = tau2_between / denom;
      p.xtvx.noalias() -= f * xd[r] * xd[r].transpose();
      p.xtvy -= f * xd[r] * yd[r];
      p.ytvy -= f * yd[r] * yd[r];
      p.log_det_v += std::log(denom);
    }
  }
  return p;
}

double reml_from_pieces(const GlsPieces& p, std::size_t n, Eigen::VectorXd* beta, Eigen::MatrixXd* cov) {
  const Eigen::Index k = p.xtvx.rows();
  Eigen::LLT<Eigen::MatrixXd> llt(p.xtvx);
  if (llt.info() != Eigen::Success) return -std::numeric_limits<double>::infinity();
  const Eigen::VectorXd b = llt.solve(p.xtvy);
  const double log_det_xtvx = 2.0 * Eigen::MatrixXd(llt.matrixL()).diagonal().array().log().sum();
  const double rss = p.ytvy - b.dot(p.xtvy);
  if (beta) *beta = b;
  if (cov) *cov = llt.solve(Eigen::MatrixXd::Identity(k, k));
  return -0.5 * (static_cast<double>(n - static_cast<std::size_t>(k)) * kLog2Pi + p.log_det_v + log_det_xtvx + rss);
}

RemlFit finish(const MetaDataset& data, const DesignMatrix& design, double tb, double tw) {
  RemlFit fit;
  fit.names = design.columns;
  fit.tau2_between = tb;
  fit.tau2_within = tw;
  fit.n_obs = data.size();
  fit.n_studies = data.n_studies();
  const GlsPieces p = accumulate(data, design.values, tb, tw);
  fit.log_restricted_likelihood = reml_from_pieces(p, data.size(), &fit.beta, &fit.beta_cov);
  fit.beta_cov = 0.5 * (fit.beta_cov + fit.beta_cov.transpose());
  return fit;
}

std::string fmt(double x) { return format_number(x); }

}  // namespace

DesignMatrix build_design(const MetaDataset& data, const std::vector<std::string>& moderators) {
  DesignMatrix dm;
  dm.columns.push_back("intercept");
  for (const auto& m : moderators) {
    if (m == "intercept" || m == "theta") throw SchemaError("'" + m + "' cannot be used as a moderator");
    if (!data.has_column(m)) throw SchemaError("unknown moderator '" + m + "'");
    if (std::find(dm.columns.begin(), dm.columns.end(), m) != dm.columns.end())
      throw RankDeficientError("moderator '" + m + "' listed twice", {m, m});
    dm.columns.push_back(m);
  }
  const auto n = static_cast<Eigen::Index>(data.size());
  const auto k = static_cast<Eigen::Index>(dm.columns.size());
  dm.values.resize(n, k);
  dm.values.col(0).setOnes();
  for (Eigen::Index c = 1; c < k; ++c) {
    const auto col = data.column(dm.columns[static_cast<std::size_t>(c)]);
    dm.values.col(c) = Eigen::Map<const Eigen::VectorXd>(col.data(), n);
  }

  // Scale columns before the rank test so units do not matter.
  Eigen::MatrixXd scaled = dm.values;
  for (Eigen::Index c = 0; c < k; ++c) {
    const double norm = scaled.col(c).norm();
    if (norm > 0.0) scaled.col(c) /= norm;
  }
  Eigen::FullPivLU<Eigen::MatrixXd> lu(scaled);
  lu.setThreshold(1e-10);
  if (lu.rank() < k) {
    const Eigen::MatrixXd kernel = lu.kernel();
    std::vector<std::string> involved;
    for (Eigen::Index c = 0; c < k; ++c)
      if (kernel.row(c).cwiseAbs().maxCoeff() > 1e-8) involved.push_back(dm.columns[static_cast<std::size_t>(c)]);
    std::string msg = "design matrix is rank deficient; collinear columns:";
    for (const auto& name : involved) msg += " " + name;
    throw RankDeficientError(msg, involved);
  }
  return dm;
}

double restricted_log_likelihood(const MetaDataset& data, const DesignMatrix& design, double tau2_between,
                                 double tau2_within) {
  if (tau2_between < 0.0 || tau2_within < 0.0) throw DomainError("variance components must be >= 0");
  return reml_from_pieces(accumulate(data, design.values, tau2_between, tau2_within), data.size(), nullptr, nullptr);
}

RemlFit reml_fit(const MetaDataset& data, const std::vector<std::string>& moderators, const RemlOptions& options) {
  if (data.n_studies() < 2) throw InsufficientDataError("meta-regression needs at least 2 studies");
  const DesignMatrix design = build_design(data, moderators);
  const std::size_t k = design.columns.size();
  if (data.size() <= k + 2) {
    throw InsufficientDataError("meta-regression needs more than " + std::to_string(k + 2) + " estimates for " +
                                std::to_string(k) + " coefficients");
  }

  if (options.fixed_variances) {
    const auto [tb, tw] = *options.fixed_variances;
    if (tb < 0.0 || tw < 0.0) throw DomainError("variance components must be >= 0");
    RemlFit fit = finish(data, design, tb, tw);
    fit.converged = true;
    fit.trace.push_back("variance components fixed");
    return fit;
  }

  const auto neg_reml = [&](double tb, double tw) {
    const double v = restricted_log_likelihood(data, design, tb, tw);
    return std::isfinite(v) ? -v : std::numeric_limits<double>::infinity();
  };

  std::vector<std::string> trace;
  struct Candidate {
    double tb, tw, value;
    std::string origin;
  };
  std::vector<Candidate> candidates;

  const optim::Objective obj2 = [&](const Eigen::VectorXd& psi) { return neg_reml(std::exp(psi[0]), std::exp(psi[1])); };
  for (double s0 : options.starts) {
    Eigen::VectorXd x0(2);
    x0 << std::log(s0), std::log(s0);
    const auto r = optim::minimize_bfgs(obj2, x0, {.max_iterations = 300, .gradient_tolerance = 1e-8});
    std::ostringstream os;
    os << "start " << fmt(s0) << ": tau2_between=" << fmt(std::exp(r.x[0])) << " tau2_within=" << fmt(std::exp(r.x[1]))
       << " -logREML=" << fmt(r.value) << " iterations=" << r.iterations << " (" << r.message << ")";
    trace.push_back(os.str());
    if (std::isfinite(r.value)) candidates.push_back({std::exp(r.x[0]), std::exp(r.x[1]), r.value, "interior"});
  }
  if (candidates.empty()) throw ConvergenceError("REML optimization failed from every start", trace);

  // Boundary candidates: one or both components at exactly zero.
  const auto profile = [&](bool between_free) {
    const optim::Objective obj1 = [&](const Eigen::VectorXd& psi) {
      return between_free ? neg_reml(std::exp(psi[0]), 0.0) : neg_reml(0.0, std::exp(psi[0]));
    };
    Candidate best{0.0, 0.0, std::numeric_limits<double>::infinity(), between_free ? "within=0" : "between=0"};
    for (double s0 : options.starts) {
      Eigen::VectorXd x0(1);
      x0 << std::log(s0);
      const auto r = optim::minimize_bfgs(obj1, x0, {.max_iterations = 300, .gradient_tolerance = 1e-8});
      if (r.value < best.value) {
        best.value = r.value;
        (between_free ? best.tb : best.tw) = std::exp(r.x[0]);
      }
    }
    return best;
  };
  std::vector<Candidate> boundary = {{0.0, 0.0, neg_reml(0.0, 0.0), "both=0"}, profile(true), profile(false)};
  for (const auto& c : boundary) {
    trace.push_back("boundary " + c.origin + ": tau2_between=" + fmt(c.tb) + " tau2_within=" + fmt(c.tw) +
                    " -logREML=" + fmt(c.value));
  }

  const Candidate* best = &candidates.front();
  for (const auto& c : candidates)
    if (c.value < best->value) best = &c;
  // Prefer an exact boundary solution when it is as good as the interior one.
  const Candidate* chosen = best;
  for (const auto& c : boundary)
    if (std::isfinite(c.value) && c.value <= chosen->value + 1e-9 && (chosen == best || c.value < chosen->value))
      chosen = &c;

  RemlFit fit = finish(data, design, chosen->tb, chosen->tw);
  fit.converged = std::isfinite(fit.log_restricted_likelihood);
  trace.push_back("selected " + chosen->origin);
  fit.trace = std::move(trace);
  if (!fit.converged) throw ConvergenceError("REML optimum has a non-finite likelihood", fit.trace);
  return fit;
}

nlohmann::json RemlFit::to_json() const {
  nlohmann::json beta_json = nlohmann::json::object();
  for (std::size_t i = 0; i < names.size(); ++i) beta_json[names[i]] = beta[static_cast<Eigen::Index>(i)];
  nlohmann::json cov = nlohmann::json::array();
  for (Eigen::Index i = 0; i < beta_cov.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < beta_cov.cols(); ++j) row.push_back(beta_cov(i, j));
    cov.push_back(row);
  }
  return {{"method", "reml"},
          {"columns", names},
          {"beta", beta_json},
          {"beta_cov", cov},
          {"tau2_between", tau2_between},
          {"tau2_within", tau2_within},
          {"log_restricted_likelihood", log_restricted_likelihood},
          {"n_obs", n_obs},
          {"n_studies", n_studies},
          {"converged", converged},
          {"trace", trace}};
}

std::string significance_stars(double p) {
  if (p < 0.01) return "***";
  if (p < 0.05) return "**";
  if (p < 0.10) return "*";
  return "";
}

std::vector<CoefficientRow> coefficient_table(const RemlFit& fit) {
  std::vector<CoefficientRow> rows;
  for (std::size_t i = 0; i < fit.names.size(); ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    CoefficientRow r;
    r.name = fit.names[i];
    r.estimate = fit.beta[ii];
    r.se = std::sqrt(std::max(0.0, fit.beta_cov(ii, ii)));
    r.z = r.estimate == 0.0 ? 0.0 : r.estimate / r.se;
    r.p = stats::two_sided_p_normal(r.z);
    r.stars = significance_stars(r.p);
    rows.push_back(r);
  }
  return rows;
}

void write_coefficient_csv(std::ostream& out, const std::vector<CoefficientRow>& rows) {
  out << "name,estimate,se,z,p,stars\n";
  for (const auto& r : rows) {
    out << r.name << ',' << format_number(r.estimate) << ',' << format_number(r.se) << ',' << format_number(r.z)
        << ',' << format_number(r.p) << ',' << r.stars << '\n';
  }
}

nlohmann::json coefficient_json(const std::vector<CoefficientRow>& rows) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : rows)
    arr.push_back({{"name", r.name}, {"estimate", r.estimate}, {"se", r.se}, {"z", r.z}, {"p", r.p}, {"stars", r.stars}});
  return arr;
}

}  // namespace metabias
