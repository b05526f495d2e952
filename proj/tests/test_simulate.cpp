#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <sstream>

#include "metabias/error.hpp"
#include "metabias/simulate.hpp"
#include "metabias/stats.hpp"
#include "oracles/oracles.hpp"

using namespace metabias;
using Catch::Approx;

namespace {

std::string csv_of(const MetaDataset& d) {
  std::ostringstream os;
  write_csv(os, d);
  return os.str();
}

double share_significant(const MetaDataset& d) {
  double k = 0;
  for (const auto& e : d.estimates()) k += e.p_value() <= 0.05;
  return k / static_cast<double>(d.size());
}

}  // namespace

TEST_CASE("same seed gives the same dataset") {
  SimConfig c;
  c.n_studies = 30;
  c.max_estimates_per_study = 4;
  c.tau_between = 0.05;
  c.tau_within = 0.02;
  c.seed = 7;
  CHECK(csv_of(generate(c)) == csv_of(generate(c)));
  c.seed = 8;
  const auto other = csv_of(generate(c));
  c.seed = 7;
  CHECK(csv_of(generate(c)) != other);
  CHECK(csv_of(generate_replicate(c, 0)) != csv_of(generate_replicate(c, 1)));
  CHECK(csv_of(generate_replicate(c, 3)) == csv_of(generate_replicate(c, 3)));
}

TEST_CASE("sample mean converges to the true effect") {
  SimConfig c;
  c.mu_true = 0.3;
  c.n_studies = 20000;
  c.se_min = 0.1;
  c.se_max = 0.5;
  const auto d = generate(c);
  const auto th = d.thetas();
  const double m = stats::mean(th);
  CHECK(std::abs(m - 0.3) < 3.0 * stats::sd(th) / std::sqrt(static_cast<double>(th.size())));
}

TEST_CASE("standardized residuals are normal without selection") {
  SimConfig c;
  c.mu_true = -0.02;
  c.tau_between = 0.04;
  c.tau_within = 0.03;
  c.n_studies = 10000;
  c.seed = 99;
  const auto d = generate(c);
  std::vector<double> u;
  for (const auto& e : d.estimates())
    u.push_back(1.0 - oracle::phi_upper((e.theta - c.mu_true) /
                                        std::sqrt(e.se * e.se + c.tau_between * c.tau_between +
                                                  c.tau_within * c.tau_within)));
  std::sort(u.begin(), u.end());
  double dmax = 0.0;
  const double n = static_cast<double>(u.size());
  for (std::size_t i = 0; i < u.size(); ++i)
    dmax = std::max({dmax, std::abs(u[i] - static_cast<double>(i) / n), std::abs(static_cast<double>(i + 1) / n - u[i])});
  CHECK(oracle::ks_pvalue(dmax, u.size()) > 0.01);
}

TEST_CASE("selection favours significant estimates") {
  SimConfig c;
  c.mu_true = 0.05;
  c.tau_between = 0.05;
  c.n_studies = 3000;
  c.se_min = 0.02;
  c.se_max = 0.2;
  c.seed = 5;
  const auto plain = generate(c);
  c.weightfn.emplace(std::vector<double>{0.05, 0.10}, std::vector<double>{1.0, 0.01, 0.01});
  SimStats st;
  const auto selected = generate(c, st);
  CHECK(selected.size() == plain.size());
  CHECK(share_significant(selected) > share_significant(plain) + 0.2);
  REQUIRE(st.proposed.size() == 3);
  // Retention per interval is omega_j up to binomial error.
  const std::vector<double> om = {1.0, 0.01, 0.01};
  for (std::size_t j = 0; j < 3; ++j) {
    const double p = static_cast<double>(st.retained[j]) / static_cast<double>(st.proposed[j]);
    const double sd = std::sqrt(om[j] * (1 - om[j]) / static_cast<double>(st.proposed[j]));
    CHECK(std::abs(p - om[j]) <= 4.0 * sd + 1e-12);
  }
  CHECK(st.total_proposed == st.proposed[0] + st.proposed[1] + st.proposed[2]);
}

TEST_CASE("draw budget") {
  SimConfig c;
  c.mu_true = 0.0;
  c.n_studies = 200;
  c.se_min = 0.1;
  c.se_max = 0.2;
  c.weightfn.emplace(std::vector<double>{0.05}, std::vector<double>{1.0, 1e-6});
  c.max_draws = 1000;
  CHECK_THROWS_AS(generate(c), BudgetError);
}

TEST_CASE("moderators, coefficients and structure") {
  SimConfig c;
  c.n_studies = 400;
  c.min_estimates_per_study = 2;
  c.max_estimates_per_study = 5;
  c.moderators = {{"x", ModeratorKind::continuous}, {"d", ModeratorKind::binary}};
  c.beta_true = {{"d", 1.0}};
  c.se_min = 0.01;
  c.se_max = 0.02;
  const auto data = generate(c);
  CHECK(data.n_studies() == 400);
  CHECK(data.size() >= 800);
  CHECK(data.size() <= 2000);
  double with = 0, without = 0, nw = 0, nwo = 0;
  for (const auto& e : data.estimates()) {
    CHECK((e.moderators.at("d") == 0.0 || e.moderators.at("d") == 1.0));
    CHECK(e.se >= 0.01);
    CHECK(e.se <= 0.02);
    if (e.moderators.at("d") == 1.0) {
      with += e.theta;
      ++nw;
    } else {
      without += e.theta;
      ++nwo;
    }
  }
  CHECK(with / nw - without / nwo == Approx(1.0).margin(0.01));
}

TEST_CASE("config validation and JSON round trip") {
  SimConfig c;
  c.n_studies = 0;
  CHECK_THROWS_AS(c.validate(), DomainError);
  c.n_studies = 3;
  c.se_min = 0.0;
  CHECK_THROWS_AS(c.validate(), DomainError);
  c.se_min = 0.01;
  c.beta_true = {{"ghost", 1.0}};
  CHECK_THROWS_AS(c.validate(), DomainError);

  SimConfig full;
  full.mu_true = -0.016;
  full.tau_between = 0.066;
  full.tau_within = 0.01;
  full.weightfn.emplace(std::vector<double>{0.05, 0.10}, std::vector<double>{1.0, 0.739, 0.415});
  full.n_studies = 12;
  full.min_estimates_per_study = 2;
  full.max_estimates_per_study = 7;
  full.moderators = {{"cross", ModeratorKind::binary}};
  full.beta_true = {{"cross", -0.05}};
  full.pet_slope = 0.3;
  full.seed = 1234567890123ULL;
  const auto back = SimConfig::from_json(full.to_json());
  CHECK(back.to_json() == full.to_json());
  CHECK(csv_of(generate(back)) == csv_of(generate(full)));
}
