// Copyright 2026 The RLPF Desk Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <limits>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/students_t.hpp>

#include "rlpf/error.hpp"
#include "rlpf/stats.hpp"

namespace rlpf::stats {

double two_sided_p(double z) {
  if (std::isnan(z)) return std::numeric_limits<double>::quiet_NaN();
  return std::erfc(std::abs(z) / std::sqrt(2.0));
}

WaldResult wald_test(double estimate, double se) {
  WaldResult w;
  w.estimate = estimate;
  w.se = se;
  if (estimate == 0.0) {
    w.z = 0.0;
    w.p = 1.0;
    return w;
  }
  if (!(se > 0.0)) fail(ErrorKind::Numerical, "wald_test: standard error must be positive");
  w.z = estimate / se;
  w.p = two_sided_p(w.z);
  return w;
}

WaldResult wald_test(const Fit& fit, std::string_view coefficient, bool robust) {
  const auto i = fit.index(coefficient);
  return wald_test(fit.coef[static_cast<Eigen::Index>(i)], fit.se(i, robust));
}

double relative_risk(double coefficient) { return std::expm1(coefficient); }

RatioEstimate global_ctr(std::span<const double> clicks, std::span<const double> impressions) {
  if (clicks.size() != impressions.size()) fail(ErrorKind::InvalidInput, "global_ctr: length mismatch");
  const std::size_t m = clicks.size();
  if (m < 2) fail(ErrorKind::InsufficientData, "global_ctr: need at least two advertisers");
  double sy = 0.0, sn = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    sy += clicks[i];
    sn += impressions[i];
  }
  if (!(sn > 0.0)) fail(ErrorKind::InvalidInput, "global_ctr: zero total impressions");
  const double md = static_cast<double>(m);
  const double my = sy / md, mn = sn / md;
  double vy = 0.0, vn = 0.0, cyn = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double dy = clicks[i] - my, dn = impressions[i] - mn;
    vy += dy * dy;
    vn += dn * dn;
    cyn += dy * dn;
  }
  vy /= md - 1.0;
  vn /= md - 1.0;
  cyn /= md - 1.0;
  RatioEstimate r;
  r.m = m;
  r.clicks = sy;
  r.impressions = sn;
  r.estimate = sy / sn;
  const double R = r.estimate;
  r.variance = std::max(0.0, (vy - 2.0 * R * cyn + R * R * vn) / (md * mn * mn));
  const double half = 1.959963984540054 * std::sqrt(r.variance);
  r.ci_low = R - half;
  r.ci_high = R + half;
  return r;
}

CtrComparison compare_global_ctr(std::span<const AdvertiserOutcome> outcomes) {
  std::vector<double> yc, nc, yt, nt;
  for (const auto& o : outcomes) {
    auto& y = o.arm == Arm::Treatment ? yt : yc;
    auto& n = o.arm == Arm::Treatment ? nt : nc;
    y.push_back(static_cast<double>(o.engagement));
    n.push_back(static_cast<double>(o.impressions));
  }
  CtrComparison c;
  c.control = global_ctr(yc, nc);
  c.treatment = global_ctr(yt, nt);
  c.difference = c.treatment.estimate - c.control.estimate;
  c.relative_lift = c.difference / c.control.estimate;
  const double se = std::sqrt(c.control.variance + c.treatment.variance);
  c.z = se > 0.0 ? c.difference / se : 0.0;
  c.p = two_sided_p(c.z);
  return c;
}

TestResult welch_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2) fail(ErrorKind::InsufficientData, "welch_t_test: need two observations per sample");
  auto mv = [](std::span<const double> x) {
    double m = 0.0;
    for (double v : x) m += v;
    m /= static_cast<double>(x.size());
    double s = 0.0;
    for (double v : x) s += (v - m) * (v - m);
    return std::pair{m, s / static_cast<double>(x.size() - 1)};
  };
  const auto [ma, va] = mv(a);
  const auto [mb, vb] = mv(b);
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  const double qa = va / na, qb = vb / nb;
  TestResult r;
  if (qa + qb == 0.0) {
    r.df = na + nb - 2.0;
    if (ma == mb) {
      r.statistic = 0.0;
      r.p = 1.0;
    } else {
      r.statistic = ma > mb ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
      r.p = 0.0;
    }
    return r;
  }
  r.statistic = (ma - mb) / std::sqrt(qa + qb);
  r.df = (qa + qb) * (qa + qb) / (qa * qa / (na - 1.0) + qb * qb / (nb - 1.0));
  const boost::math::students_t dist(r.df);
  r.p = std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(r.statistic))));
  return r;
}

TestResult chi_square_test(const std::vector<std::vector<double>>& table) {
  TestResult r;
  if (table.empty()) fail(ErrorKind::InvalidInput, "chi_square_test: empty table");
  const std::size_t cols = table.front().size();
  for (const auto& row : table) {
    if (row.size() != cols) fail(ErrorKind::InvalidInput, "chi_square_test: ragged table");
    for (double v : row)
      if (!(v >= 0.0)) fail(ErrorKind::InvalidInput, "chi_square_test: negative cell count");
  }
  std::vector<double> rs(table.size(), 0.0), cs(cols, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < table.size(); ++i)
    for (std::size_t j = 0; j < cols; ++j) {
      rs[i] += table[i][j];
      cs[j] += table[i][j];
      total += table[i][j];
    }
  std::vector<std::size_t> ri, ci;
  for (std::size_t i = 0; i < rs.size(); ++i) {
    if (rs[i] > 0.0)
      ri.push_back(i);
    else
      r.warnings.push_back("row " + std::to_string(i) + " has a zero margin and was dropped");
  }
  for (std::size_t j = 0; j < cs.size(); ++j) {
    if (cs[j] > 0.0)
      ci.push_back(j);
    else
      r.warnings.push_back("column " + std::to_string(j) + " has a zero margin and was dropped");
  }
  if (ri.size() < 2 || ci.size() < 2) {
    r.statistic = 0.0;
    r.df = 0.0;
    r.p = 1.0;
    return r;
  }
  for (std::size_t i : ri)
    for (std::size_t j : ci) {
      const double e = rs[i] * cs[j] / total;
      const double d = table[i][j] - e;
      r.statistic += d * d / e;
    }
  r.df = static_cast<double>((ri.size() - 1) * (ci.size() - 1));
  const boost::math::chi_squared dist(r.df);
  r.p = boost::math::cdf(boost::math::complement(dist, r.statistic));
  return r;
}

BaselineDecomposition baseline_ctr_interpretation(const GlmFit& fit, const Eigen::VectorXd& row) {
  if (row.size() != fit.coef.size()) fail(ErrorKind::InvalidInput, "baseline_ctr_interpretation: row has wrong length");
  const auto find = [&](std::string_view name) -> std::optional<Eigen::Index> {
    for (std::size_t i = 0; i < fit.names.size(); ++i)
      if (fit.names[i] == name) return static_cast<Eigen::Index>(i);
    return std::nullopt;
  };
  const double eta = row.dot(fit.coef);
  double log_base = 0.0;
  if (const auto i = find("log_pre_exp_ctr_existing")) log_base += fit.coef[*i] * row[*i];
  if (const auto i = find("is_new_advertiser")) log_base += fit.coef[*i] * row[*i];
  BaselineDecomposition d;
  d.baseline = std::exp(log_base);
  d.multiplier = std::exp(eta - log_base);
  d.fitted = std::exp(eta);
  return d;
}

}  // namespace rlpf::stats
