#include <catch2/catch_amalgamated.hpp>

#include <random>
#include <sstream>

#include "metabias/error.hpp"
#include "metabias/pooling.hpp"
#include "oracles/oracles.hpp"
#include "support.hpp"

using namespace metabias;
using Catch::Approx;
using testing_support::make_data;

TEST_CASE("three unit-variance estimates") {
  const auto p = uwls(make_data({1, 2, 3}, {1, 1, 1}));
  CHECK(p.mu_hat == Approx(2.0).margin(1e-15));
  CHECK(p.se_naive * p.se_naive == Approx(1.0 / 3.0).epsilon(1e-14));
}

TEST_CASE("weights 1 and 3") {
  const auto p = uwls(make_data({1, 3}, {1, 1 / std::sqrt(3.0)}));
  CHECK(p.mu_hat == Approx(2.5).epsilon(1e-14));
  CHECK(p.weights[0] == 1.0);
  CHECK(p.weights[1] == Approx(3.0).epsilon(1e-14));
}

TEST_CASE("constant data") {
  const auto p = uwls(make_data({-0.02, -0.02}, {0.01, 0.01}));
  CHECK(p.mu_hat == Approx(-0.02).margin(1e-16));
  CHECK(p.p_value_cluster >= 0.0);
  CHECK(p.p_value_cluster <= 1.0);
}

TEST_CASE("single study is rejected") {
  CHECK_THROWS_AS(uwls(make_data({0.1, 0.2, 0.3}, {0.1, 0.1, 0.1}, {1, 1, 1})), InsufficientDataError);
}

TEST_CASE("matches the QR weighted-regression oracle") {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> size(5, 50);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::uniform_real_distribution<double> su(0.01, 2.0);
  for (int rep = 0; rep < 200; ++rep) {
    const int n = size(rng);
    std::vector<double> theta, se;
    std::vector<int> study;
    for (int i = 0; i < n; ++i) {
      theta.push_back(nd(rng));
      se.push_back(su(rng));
      study.push_back(i % 4);
    }
    const auto p = uwls(make_data(theta, se, study));
    const auto [mu, se_naive] = oracle::uwls(theta, se);
    CHECK(std::abs(p.mu_hat - mu) <= 1e-10);
    CHECK(std::abs(p.se_naive - se_naive) <= 1e-10);
    for (double w : p.weights) CHECK(w > 0.0);
  }
}

TEST_CASE("cluster-robust SE matches a direct sandwich") {
  // 3 studies; sandwich = (sum_w)^-1 [G/(G-1) sum_g (sum_{q in g} w e)^2] (sum_w)^-1
  const std::vector<double> theta = {0.1, 0.3, -0.2, 0.05, 0.4, 0.0};
  const std::vector<double> se = {0.1, 0.2, 0.15, 0.1, 0.3, 0.25};
  const std::vector<int> study = {1, 1, 2, 2, 3, 3};
  const auto p = uwls(make_data(theta, se, study));
  double sw = 0, swt = 0;
  for (std::size_t i = 0; i < 6; ++i) {
    sw += 1 / (se[i] * se[i]);
    swt += theta[i] / (se[i] * se[i]);
  }
  const double mu = swt / sw;
  double meat = 0;
  for (int g = 1; g <= 3; ++g) {
    double s = 0;
    for (std::size_t i = 0; i < 6; ++i)
      if (study[i] == g) s += (theta[i] - mu) / (se[i] * se[i]);
    meat += s * s;
  }
  const double expected = std::sqrt(1.5 * meat) / sw;
  CHECK(p.se_cluster == Approx(expected).epsilon(1e-12));
  CHECK(p.t_cluster == Approx(mu / expected).epsilon(1e-12));
  CHECK(p.p_value_cluster > 0.0);
  CHECK(p.p_value_cluster < 1.0);
}

TEST_CASE("scale covariance") {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::vector<double> theta, se;
  std::vector<int> study;
  for (int i = 0; i < 30; ++i) {
    theta.push_back(nd(rng));
    se.push_back(0.1 + std::abs(nd(rng)));
    study.push_back(i % 7);
  }
  const auto a = uwls(make_data(theta, se, study));
  for (double c : {0.001, 3.0, 250.0}) {
    std::vector<double> t2, s2;
    for (std::size_t i = 0; i < theta.size(); ++i) {
      t2.push_back(c * theta[i]);
      s2.push_back(c * se[i]);
    }
    const auto b = uwls(make_data(t2, s2, study));
    CHECK(b.mu_hat == Approx(c * a.mu_hat).epsilon(1e-12));
    CHECK(b.se_naive == Approx(c * a.se_naive).epsilon(1e-12));
    CHECK(b.se_cluster == Approx(c * a.se_cluster).epsilon(1e-12));
  }
}

TEST_CASE("funnel rows") {
  const auto d = make_data({0.1, -0.2, 0.05}, {1.0, 0.5, 0.25});
  const auto rows = funnel_data(d, 0.0, 101);
  std::size_t points = 0;
  bool found = false;
  for (const auto& r : rows) {
    if (r.kind == FunnelRow::Kind::point) ++points;
    if (r.kind == FunnelRow::Kind::band_low && r.se == 1.0) {
      CHECK(r.theta == Approx(-1.96));
      found = true;
    }
    if (r.kind == FunnelRow::Kind::band_high && r.se == 1.0) CHECK(r.theta == Approx(1.96));
  }
  CHECK(points == d.size());
  CHECK(found);
  const auto apex = funnel_data(d, -0.019);
  for (const auto& r : apex)
    if (r.kind != FunnelRow::Kind::point && r.se == 0.0) CHECK(r.theta == -0.019);
  std::ostringstream os;
  write_funnel_csv(os, rows);
  CHECK(os.str().rfind("kind,theta,se\npoint,", 0) == 0);
}
