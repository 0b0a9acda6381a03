// Copyright 2026 The RLPF Desk Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "rlpf/ab_experiment.hpp"
#include "rlpf/io.hpp"

namespace rlpf::stats {

// ---------------------------------------------------------------------------
// Design

enum class Spec { MainLogBinom, Logistic, PoissonOffset, VariantsLinear, SeparateLinear };

std::string_view spec_name(Spec s);

struct DesignMatrix {
  std::vector<std::string> names;
  Eigen::MatrixXd X;
  std::vector<std::uint32_t> advertiser_ids;
  std::vector<std::string> warnings;

  /// Column index of `name`; throws InvalidInput if absent.
  std::size_t column(std::string_view name) const;
  bool has(std::string_view name) const;
};

/// Design plus every response the specifications use, row-aligned.
struct ModelData {
  DesignMatrix design;
  Eigen::VectorXd engagement;
  Eigen::VectorXd impressions;
  Eigen::VectorXd ad_cnt;
  Eigen::VectorXd variant_cnt;
  Eigen::VectorXd treatment;
  /// Rows dropped because the advertiser had no impressions.
  std::size_t excluded_zero_impressions = 0;
};

/// Columns in order: treatment, the gated pre-experiment CTR term (log for
/// the GLM specs, raw for the linear ones), is_new_advertiser, the numeric
/// covariates, budget/expertise/vertical dummies against the first level,
/// Constant. GLM specs drop advertisers with zero impressions. All-zero
/// columns are dropped with a warning; remaining collinearity throws a
/// Design error naming the columns.
ModelData build_main_design(std::span<const CovariateRecord> covariates,
                            std::span<const AdvertiserOutcome> outcomes, Spec spec);

// ---------------------------------------------------------------------------
// Fits

/// Common view of a fitted regression for tests and tables.
struct Fit {
  std::vector<std::string> names;
  Eigen::VectorXd coef;
  Eigen::MatrixXd cov_model;
  Eigen::MatrixXd cov_hc1;
  std::size_t n = 0;
  std::size_t k = 0;

  std::size_t index(std::string_view name) const;
  double se(std::size_t i, bool robust = true) const;
};

enum class Family { Binomial, Poisson };
enum class Link { Log, Logit };

struct GlmOptions {
  int max_iter = 100;
  double tol_coef = 1e-8;
  double tol_deviance = 1e-10;
  int max_halvings = 40;
};

struct GlmFit : Fit {
  Family family = Family::Binomial;
  Link link = Link::Log;
  bool has_offset = false;
  /// Pearson chi-square / (n - k).
  double dispersion = 0.0;
  double pearson_chi2 = 0.0;
  double deviance = 0.0;
  int iterations = 0;
  bool converged = false;
  /// A log-binomial mean came within 1e-8 of one.
  bool boundary = false;
  /// Linear predictor without offset, and fitted mean (per-trial probability
  /// for binomial, expected count for Poisson).
  Eigen::VectorXd eta;
  Eigen::VectorXd mu;
  /// IRLS weights and score contributions w * (z - eta) at the solution.
  Eigen::VectorXd weights;
  Eigen::VectorXd scores;
};

/// IRLS. Binomial: y successes out of n trials. Poisson: y counts; `offset`
/// enters the linear predictor with coefficient one.
GlmFit fit_glm(const Eigen::MatrixXd& X, const std::vector<std::string>& names,
               const Eigen::VectorXd& y, const Eigen::VectorXd& n, Family family, Link link,
               const std::optional<Eigen::VectorXd>& offset = std::nullopt,
               const GlmOptions& options = {});

struct LinFit : Fit {
  Eigen::VectorXd residuals;
  double sigma2 = 0.0;
  double r2 = 0.0;
};

LinFit fit_linear(const Eigen::MatrixXd& X, const std::vector<std::string>& names,
                  const Eigen::VectorXd& y);

/// n/(n-k) * B M B with B = (X' W X)^-1 and M = sum s_i^2 x_i x_i'.
/// Throws Numerical if X' W X is singular.
Eigen::MatrixXd hc1_covariance(const Eigen::MatrixXd& X, const Eigen::VectorXd& weights,
                               const Eigen::VectorXd& scores);

struct QuasiResult {
  double phi = 0.0;
  Eigen::VectorXd se;
};

/// phi = Pearson chi-square / (n - k); standard errors are model SEs * sqrt(phi).
QuasiResult quasi_dispersion(const GlmFit& fit);
/// The same fit with its model covariance scaled by phi.
GlmFit as_quasi(const GlmFit& fit);

// ---------------------------------------------------------------------------
// Inference

struct WaldResult {
  double estimate = 0.0;
  double se = 0.0;
  double z = 0.0;
  double p = 1.0;
};

WaldResult wald_test(const Fit& fit, std::string_view coefficient, bool robust = true);
/// Two-sided normal p-value for an estimate and standard error.
WaldResult wald_test(double estimate, double se);
double two_sided_p(double z);

/// exp(b) - 1.
double relative_risk(double coefficient);

struct RatioEstimate {
  double estimate = 0.0;
  double variance = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  std::size_t m = 0;
  double clicks = 0.0;
  double impressions = 0.0;
};

/// Sum Y / sum n with the ratio-of-means delta-method variance
/// (s_Y^2 - 2 R s_Yn + R^2 s_n^2) / (m mean_n^2).
RatioEstimate global_ctr(std::span<const double> clicks, std::span<const double> impressions);

struct CtrComparison {
  RatioEstimate control;
  RatioEstimate treatment;
  double difference = 0.0;
  double relative_lift = 0.0;
  double z = 0.0;
  double p = 1.0;
};

CtrComparison compare_global_ctr(std::span<const AdvertiserOutcome> outcomes);

struct TestResult {
  double statistic = 0.0;
  double df = 0.0;
  double p = 1.0;
  std::vector<std::string> warnings;
};

TestResult welch_t_test(std::span<const double> a, std::span<const double> b);
/// Pearson chi-square without continuity correction. Rows or columns with a
/// zero margin are dropped with a warning.
TestResult chi_square_test(const std::vector<std::vector<double>>& table);

struct BaselineDecomposition {
  double baseline = 0.0;
  double multiplier = 0.0;
  double fitted = 0.0;
};

/// Splits exp(x'b) into the baseline CTR term (CTR_pre^b2 for existing
/// advertisers, exp(b3) for new ones) and the multiplier from everything else.
BaselineDecomposition baseline_ctr_interpretation(const GlmFit& fit, const Eigen::VectorXd& row);

// ---------------------------------------------------------------------------
// Balance

struct BalanceRow {
  std::string label;
  std::string control;
  std::string treatment;
  std::optional<double> p;
  /// Indented level rows under a categorical variable carry no test.
  bool level = false;
};

struct BalanceTable {
  std::vector<BalanceRow> rows;
  /// (covariate, p) for every tested covariate, in table order.
  std::vector<std::pair<std::string, double>> tests;
};

BalanceTable balance_table(std::span<const CovariateRecord> covariates, std::span<const Arm> arms);
std::string balance_text(const BalanceTable& t, const FileHeader& header);
std::string balance_csv(const BalanceTable& t, const FileHeader& header);

// ---------------------------------------------------------------------------
// Tables

struct TableColumn {
  std::string dependent;
  const Fit* fit = nullptr;
  bool robust = true;
  /// Extra footer rows, e.g. a dispersion parameter.
  std::vector<std::pair<std::string, std::string>> footer;
};

struct RegressionTable {
  std::string title;
  std::vector<TableColumn> columns;
  std::string note;
  /// Restrict to these rows (all coefficients when empty).
  std::vector<std::string> rows;
};

std::string stars(double p);
std::string regression_text(const RegressionTable& t);
std::string regression_csv(const RegressionTable& t);

}  // namespace rlpf::stats
