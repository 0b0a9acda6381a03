// Copyright 2026 The RLPF Desk Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <map>

#include "rlpf/error.hpp"
#include "rlpf/stats.hpp"

namespace rlpf::stats {

std::string_view spec_name(Spec s) {
  switch (s) {
    case Spec::MainLogBinom: return "main_log_binom";
    case Spec::Logistic: return "logistic";
    case Spec::PoissonOffset: return "poisson_offset";
    case Spec::VariantsLinear: return "variants_linear";
    case Spec::SeparateLinear: return "separate_linear";
  }
  return "unknown";
}

std::size_t DesignMatrix::column(std::string_view name) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return i;
  fail(ErrorKind::InvalidInput, "design has no column '" + std::string(name) + "'");
}

bool DesignMatrix::has(std::string_view name) const {
  return std::find(names.begin(), names.end(), name) != names.end();
}

namespace {

bool is_glm(Spec s) {
  return s == Spec::MainLogBinom || s == Spec::Logistic || s == Spec::PoissonOffset;
}

void drop_zero_columns(DesignMatrix& d) {
  std::vector<Eigen::Index> keep;
  for (Eigen::Index j = 0; j < d.X.cols(); ++j) {
    if (d.X.rows() > 0 && d.X.col(j).cwiseAbs().maxCoeff() > 0.0)
      keep.push_back(j);
    else
      d.warnings.push_back("column '" + d.names[static_cast<std::size_t>(j)] +
                           "' is identically zero and was dropped");
  }
  if (keep.size() == static_cast<std::size_t>(d.X.cols())) return;
  Eigen::MatrixXd X(d.X.rows(), static_cast<Eigen::Index>(keep.size()));
  std::vector<std::string> names;
  for (std::size_t i = 0; i < keep.size(); ++i) {
    X.col(static_cast<Eigen::Index>(i)) = d.X.col(keep[i]);
    names.push_back(d.names[static_cast<std::size_t>(keep[i])]);
  }
  d.X = std::move(X);
  d.names = std::move(names);
}

void check_rank(const DesignMatrix& d) {
  const auto k = d.X.cols();
  if (d.X.rows() <= k)
    fail(ErrorKind::InsufficientData, "design has " + std::to_string(d.X.rows()) + " rows for " +
                                          std::to_string(k) + " columns");
  // Scale columns so the rank decision does not depend on units.
  Eigen::MatrixXd Xs = d.X;
  for (Eigen::Index j = 0; j < k; ++j) Xs.col(j) /= Xs.col(j).norm();
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Xs);
  qr.setThreshold(1e-10);
  if (qr.rank() == k) return;
  // Columns in the leading block are independent; each one beyond it is
  // reported with the columns it is spanned by.
  const auto& perm = qr.colsPermutation().indices();
  std::vector<Eigen::Index> basis;
  for (Eigen::Index i = 0; i < qr.rank(); ++i) basis.push_back(perm[i]);
  std::sort(basis.begin(), basis.end());
  std::string msg = "design matrix is rank deficient:";
  for (Eigen::Index i = qr.rank(); i < k; ++i) {
    const auto j = perm[i];
    Eigen::MatrixXd B(Xs.rows(), static_cast<Eigen::Index>(basis.size()));
    for (std::size_t b = 0; b < basis.size(); ++b) B.col(static_cast<Eigen::Index>(b)) = Xs.col(basis[b]);
    const Eigen::VectorXd c = B.colPivHouseholderQr().solve(Xs.col(j));
    msg += " '" + d.names[static_cast<std::size_t>(j)] + "' ~";
    for (std::size_t b = 0; b < basis.size(); ++b)
      if (std::abs(c[static_cast<Eigen::Index>(b)]) > 1e-8)
        msg += " '" + d.names[static_cast<std::size_t>(basis[b])] + "'";
    msg += ";";
  }
  fail(ErrorKind::Design, msg);
}

}  // namespace

ModelData build_main_design(std::span<const CovariateRecord> covariates,
                            std::span<const AdvertiserOutcome> outcomes, Spec spec) {
  std::map<std::uint32_t, const CovariateRecord*> by_id;
  for (const auto& c : covariates) by_id[c.advertiser_id] = &c;
  if (by_id.size() != covariates.size())
    fail(ErrorKind::InvalidInput, "covariates table has duplicate advertiser ids");

  std::vector<std::string> names = {"treatment",
                                    is_glm(spec) ? "log_pre_exp_ctr_existing" : "pre_exp_ctr_existing",
                                    "is_new_advertiser",
                                    "pre_exp_ad_cnt",
                                    "pre_exp_impressions",
                                    "pre_exp_engagement",
                                    "account_age_yr",
                                    "nov_feb_ad_cnt",
                                    "nov_feb_variant_cnt",
                                    "is_business_account",
                                    "has_created_llm_ad",
                                    "budget_cat: " + std::string(kBudgetNames[1]),
                                    "budget_cat: " + std::string(kBudgetNames[2]),
                                    "expertise_cat: " + std::string(kExpertiseNames[1])};
  for (std::size_t v = 1; v < kNumVerticals; ++v) names.push_back("vertical: " + std::string(kVerticalNames[v]));
  names.push_back("Constant");

  std::vector<const AdvertiserOutcome*> rows;
  ModelData md;
  for (const auto& o : outcomes) {
    if (!by_id.count(o.advertiser_id))
      fail(ErrorKind::InvalidInput, "advertiser " + std::to_string(o.advertiser_id) + " has outcomes but no covariates");
    if (is_glm(spec) && o.impressions == 0) {
      ++md.excluded_zero_impressions;
      continue;
    }
    rows.push_back(&o);
  }
  if (rows.empty()) fail(ErrorKind::InsufficientData, "no advertisers with impressions to analyze");

  const auto n = static_cast<Eigen::Index>(rows.size());
  auto& d = md.design;
  d.names = names;
  d.X = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(names.size()));
  md.engagement.resize(n);
  md.impressions.resize(n);
  md.ad_cnt.resize(n);
  md.variant_cnt.resize(n);
  md.treatment.resize(n);
  std::size_t zero_ctr = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& o = *rows[static_cast<std::size_t>(i)];
    const auto& c = *by_id.at(o.advertiser_id);
    d.advertiser_ids.push_back(o.advertiser_id);
    auto x = d.X.row(i);
    x[0] = o.arm == Arm::Treatment ? 1.0 : 0.0;
    if (!c.is_new_advertiser) {
      const double ctr = c.pre_exp_ctr.value_or(0.0);
      if (is_glm(spec)) {
        // A zero lifetime CTR has no logarithm; floor it at half a click.
        double v = ctr;
        if (v <= 0.0) {
          v = 0.5 / std::max(1.0, c.pre_exp_impressions * 1e6);
          ++zero_ctr;
        }
        x[1] = std::log(v);
      } else {
        x[1] = ctr;
      }
    }
    x[2] = c.is_new_advertiser;
    x[3] = c.pre_exp_ad_cnt;
    x[4] = c.pre_exp_impressions;
    x[5] = c.pre_exp_engagement;
    x[6] = c.account_age_yr;
    x[7] = c.nov_feb_ad_cnt;
    x[8] = c.nov_feb_variant_cnt;
    x[9] = c.is_business_account;
    x[10] = c.has_created_llm_ad;
    if (c.budget_cat == 1) x[11] = 1.0;
    if (c.budget_cat == 2) x[12] = 1.0;
    if (c.expertise_cat == 1) x[13] = 1.0;
    if (c.vertical > 0) x[13 + c.vertical] = 1.0;
    x[static_cast<Eigen::Index>(names.size()) - 1] = 1.0;
    md.engagement[i] = static_cast<double>(o.engagement);
    md.impressions[i] = static_cast<double>(o.impressions);
    md.ad_cnt[i] = static_cast<double>(o.ad_cnt);
    md.variant_cnt[i] = static_cast<double>(o.variant_cnt);
    md.treatment[i] = x[0];
  }
  if (zero_ctr > 0)
    d.warnings.push_back(std::to_string(zero_ctr) +
                         " existing advertisers had zero pre-experiment clicks; their CTR was floored at 0.5 clicks");
  if (md.excluded_zero_impressions > 0)
    d.warnings.push_back(std::to_string(md.excluded_zero_impressions) +
                         " advertisers with zero impressions were excluded");
  drop_zero_columns(d);
  check_rank(d);
  return md;
}

}  // namespace rlpf::stats
