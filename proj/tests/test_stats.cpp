// Copyright 2026 The RLPF Desk Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <numeric>

#include <doctest.h>

#include "rlpf/error.hpp"
#include "rlpf/io.hpp"
#include "rlpf/rng.hpp"
#include "rlpf/stats.hpp"

using namespace rlpf;
using namespace rlpf::stats;

namespace {

// Reference values from statsmodels (coefficients, model SEs, Pearson) and a
// direct numpy evaluation of n/(n-k) B M B with IRLS weights and working scores.
struct Fixture {
  Eigen::VectorXd n{12}, y{12};
  Eigen::MatrixXd X{12, 3};
  std::vector<std::string> names{"treatment", "z", "Constant"};
  Fixture() {
    n << 1200, 800, 1500, 950, 2000, 640, 1100, 1750, 900, 1300, 700, 1600;
    y << 40, 22, 51, 30, 70, 15, 38, 66, 25, 47, 18, 59;
    const double z[] = {0.3, -1.2, 0.8, 0.1, -0.5, 1.4, -0.9, 0.6, 0.0, -0.3, 1.1, -1.0};
    for (int i = 0; i < 12; ++i) X.row(i) << (i % 2 == 0 ? 1.0 : 0.0), z[i], 1.0;
  }
};

void check_close(const Eigen::VectorXd& got, std::initializer_list<double> want, double tol) {
  REQUIRE(got.size() == static_cast<Eigen::Index>(want.size()));
  Eigen::Index i = 0;
  for (double w : want) {
    CHECK(got[i] == doctest::Approx(w).epsilon(tol));
    ++i;
  }
}

Eigen::VectorXd ses(const Fit& f, bool robust) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(f.k));
  for (std::size_t i = 0; i < f.k; ++i) out[static_cast<Eigen::Index>(i)] = f.se(i, robust);
  return out;
}

}  // namespace

TEST_CASE("log-binomial fit matches reference estimates and both covariances") {
  Fixture d;
  const auto f = fit_glm(d.X, d.names, d.y, d.n, Family::Binomial, Link::Log);
  CHECK(f.converged);
  CHECK_FALSE(f.boundary);
  check_close(f.coef, {-0.028678822969147255, -0.04817525282735091, -3.389903630297909}, 1e-7);
  check_close(ses(f, false), {0.09036283155381358, 0.06060315411321688, 0.06432823820175675}, 1e-6);
  check_close(ses(f, true), {0.07361963231578376, 0.05997902305673467, 0.06470273247050028}, 1e-6);
  CHECK(f.pearson_chi2 == doctest::Approx(6.513316571778624).epsilon(1e-6));
  CHECK(f.deviance == doctest::Approx(6.779755801215045).epsilon(1e-6));
  CHECK(f.dispersion == doctest::Approx(6.513316571778624 / 9.0).epsilon(1e-6));
}

TEST_CASE("logistic fit matches reference") {
  Fixture d;
  const auto f = fit_glm(d.X, d.names, d.y, d.n, Family::Binomial, Link::Logit);
  check_close(f.coef, {-0.0296970089916595, -0.049939814071088884, -3.355574257077704}, 1e-7);
  check_close(ses(f, false), {0.09347636319684986, 0.0626860949381135, 0.06657012837296093}, 1e-6);
  check_close(ses(f, true), {0.07620985666168421, 0.06200381312210458, 0.06695406087890608}, 1e-6);
}

TEST_CASE("Poisson with log-exposure offset matches reference") {
  Fixture d;
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(12);
  const Eigen::VectorXd off = d.n.array().log();
  const auto f = fit_glm(d.X, d.names, d.y, ones, Family::Poisson, Link::Log, off);
  check_close(f.coef, {-0.028697494374687604, -0.04827523726964239, -3.3898994975635057}, 1e-7);
  check_close(ses(f, false), {0.0919065856974123, 0.061635783503088695, 0.0654396202399058}, 1e-6);
  check_close(ses(f, true), {0.07366691922840954, 0.05997385844754016, 0.06472754485161535}, 1e-6);
  CHECK(f.pearson_chi2 == doctest::Approx(6.298012657960562).epsilon(1e-6));
}

TEST_CASE("OLS with HC1 matches reference") {
  Fixture d;
  const auto f = fit_linear(d.X, d.names, d.y);
  check_close(f.coef, {1.7640207075065248, -6.320103537532361, 39.41199309749782}, 1e-9);
  check_close(ses(f, false), {11.57074337952649, 7.154499986666142, 8.132946020754533}, 1e-9);
  check_close(ses(f, true), {11.698066792920232, 7.602800294695926, 8.804794306660144}, 1e-9);
}

TEST_CASE("quasi fits scale model SEs by sqrt(phi)") {
  Fixture d;
  const auto f = fit_glm(d.X, d.names, d.y, d.n, Family::Binomial, Link::Log);
  const auto q = quasi_dispersion(f);
  CHECK(q.phi == doctest::Approx(0.723701841308736).epsilon(1e-6));
  const auto qf = as_quasi(f);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(q.se[static_cast<Eigen::Index>(i)] == doctest::Approx(f.se(i, false) * std::sqrt(q.phi)));
    CHECK(qf.se(i, false) == doctest::Approx(f.se(i, false) * std::sqrt(q.phi)));
  }
}

TEST_CASE("IRLS score equations vanish at convergence") {
  Fixture d;
  for (auto link : {Link::Log, Link::Logit}) {
    const auto f = fit_glm(d.X, d.names, d.y, d.n, Family::Binomial, link);
    const Eigen::VectorXd score = d.X.transpose() * f.scores;
    CHECK(score.cwiseAbs().maxCoeff() < 1e-6 * (d.X.transpose() * f.scores.cwiseAbs()).cwiseAbs().maxCoeff() + 1e-6);
    CHECK((f.mu.array() > 0.0).all());
    CHECK((f.mu.array() < 1.0).all());
  }
}

TEST_CASE("intercept-only fits reproduce the pooled CTR") {
  Fixture d;
  const Eigen::MatrixXd X = Eigen::MatrixXd::Ones(12, 1);
  const double ctr = d.y.sum() / d.n.sum();
  const auto lb = fit_glm(X, {"Constant"}, d.y, d.n, Family::Binomial, Link::Log);
  const auto lg = fit_glm(X, {"Constant"}, d.y, d.n, Family::Binomial, Link::Logit);
  CHECK(std::abs(lb.coef[0] - std::log(ctr)) < 1e-10);
  CHECK(std::abs(lg.coef[0] - std::log(ctr / (1.0 - ctr))) < 1e-10);
}

TEST_CASE("a zero-click sample still fits (log-binomial with all mean far from one)") {
  Fixture d;
  d.y[3] = 0.0;
  const auto f = fit_glm(d.X, d.names, d.y, d.n, Family::Binomial, Link::Log);
  CHECK(f.converged);
}

TEST_CASE("GLM input validation") {
  Fixture d;
  Eigen::VectorXd bad = d.y;
  bad[0] = d.n[0] + 1.0;
  CHECK_THROWS_AS(fit_glm(d.X, d.names, bad, d.n, Family::Binomial, Link::Log), Error);
  Eigen::MatrixXd col(12, 3);
  col << d.X.col(0), d.X.col(0), d.X.col(2);
  try {
    fit_glm(col, d.names, d.y, d.n, Family::Binomial, Link::Log);
    FAIL("expected a failure on a singular design");
  } catch (const Error& e) {
    CHECK((e.kind() == ErrorKind::Numerical || e.kind() == ErrorKind::Design));
  }
}

TEST_CASE("Wald tests and relative risk") {
  CHECK(relative_risk(0.0651) == doctest::Approx(0.06726).epsilon(1e-4));
  CHECK(format_fixed(100.0 * relative_risk(0.0651), 1) == "6.7");
  const auto w = wald_test(0.0651, 0.0299);
  CHECK(w.z == doctest::Approx(0.0651 / 0.0299));
  CHECK(w.p == doctest::Approx(0.029462).epsilon(1e-3));
  CHECK(wald_test(0.0, 0.0).p == 1.0);
  CHECK_THROWS_AS(wald_test(0.5, 0.0), Error);
  CHECK(two_sided_p(1.959963984540054) == doctest::Approx(0.05).epsilon(1e-9));
}

TEST_CASE("Welch t-test and chi-square match scipy") {
  const std::vector<double> a{1.2, 3.4, 2.2, 5.1, 0.7, 2.9, 3.3}, b{2.8, 4.1, 3.9, 6.0, 2.2, 5.5};
  const auto t = welch_t_test(a, b);
  CHECK(t.statistic == doctest::Approx(-1.699024338040059).epsilon(1e-10));
  CHECK(t.p == doctest::Approx(0.11815199669579506).epsilon(1e-8));
  const auto c = chi_square_test({{30, 12, 8}, {25, 20, 5}});
  CHECK(c.statistic == doctest::Approx(3.146853146853147).epsilon(1e-12));
  CHECK(c.df == 2.0);
  CHECK(c.p == doctest::Approx(0.20733352024120258).epsilon(1e-8));
  const auto c2 = chi_square_test({{30, 12}, {25, 20}});
  CHECK(c2.p == doctest::Approx(0.12497032179550704).epsilon(1e-8));
  const auto z = chi_square_test({{30, 0, 12}, {25, 0, 20}});
  CHECK(z.statistic == doctest::Approx(c2.statistic));
  CHECK(z.warnings.size() == 1);
}

TEST_CASE("global CTR is the impression-weighted mean and invariant to splitting") {
  Rng rng(5);
  for (int rep = 0; rep < 50; ++rep) {
    const std::size_t m = 3 + rng.below(40);
    std::vector<double> y(m), n(m);
    for (std::size_t i = 0; i < m; ++i) {
      n[i] = 1.0 + static_cast<double>(rng.below(5000));
      y[i] = static_cast<double>(rng.binomial(static_cast<std::uint64_t>(n[i]), 0.03));
    }
    const auto r = global_ctr(y, n);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      num += n[i] * (y[i] / n[i]);
      den += n[i];
    }
    CHECK(std::abs(r.estimate - num / den) < 1e-12);
    // Splitting one advertiser keeps the point estimate.
    auto y2 = y, n2 = n;
    const double n_half = std::floor(n[0] / 2.0), y_half = std::floor(y[0] / 2.0);
    y2[0] -= y_half;
    n2[0] -= n_half;
    y2.push_back(y_half);
    n2.push_back(n_half);
    if (n_half > 0) CHECK(std::abs(global_ctr(y2, n2).estimate - r.estimate) < 1e-12);
  }
}

TEST_CASE("delta-method variance matches the ratio-of-means formula by hand") {
  const std::vector<double> y{3, 5, 0, 9}, n{100, 120, 80, 300};
  const auto r = global_ctr(y, n);
  const double my = 17.0 / 4, mn = 600.0 / 4, R = 17.0 / 600;
  double syy = 0, snn = 0, syn = 0;
  for (int i = 0; i < 4; ++i) {
    syy += (y[i] - my) * (y[i] - my);
    snn += (n[i] - mn) * (n[i] - mn);
    syn += (y[i] - my) * (n[i] - mn);
  }
  syy /= 3;
  snn /= 3;
  syn /= 3;
  CHECK(r.variance == doctest::Approx((syy - 2 * R * syn + R * R * snn) / (4 * mn * mn)).epsilon(1e-12));
}

TEST_CASE("regression table layout carries stars, SEs and footers") {
  Fixture d;
  const auto f = fit_glm(d.X, d.names, d.y, d.n, Family::Binomial, Link::Log);
  RegressionTable t{"Demo", {{"engagement/impressions", &f, true, {{"Dispersion", "0.724"}}}}, "note", {}};
  const auto text = regression_text(t);
  CHECK(text.find("treatment") != std::string::npos);
  CHECK(text.find("Observations") != std::string::npos);
  CHECK(text.find("12") != std::string::npos);
  CHECK(text.find("Dispersion") != std::string::npos);
  CHECK(text.find("(0.0736)") != std::string::npos);
  CHECK(text.rfind("Constant") > text.find("treatment"));
  CHECK(stars(0.005) == "***");
  CHECK(stars(0.03) == "**");
  CHECK(stars(0.07) == "*");
  CHECK(stars(0.2).empty());
  const auto csv = regression_csv(t);
  CHECK(csv.rfind("term,dependent,estimate", 0) == 0);
}
