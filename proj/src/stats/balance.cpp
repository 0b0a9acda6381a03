// Copyright 2026 The RLPF Desk Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>

#include "rlpf/error.hpp"
#include "rlpf/stats.hpp"

namespace rlpf::stats {
namespace {

std::string mean_sd(const std::vector<double>& x) {
  double m = 0.0;
  for (double v : x) m += v;
  m /= std::max<std::size_t>(1, x.size());
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  s = x.size() > 1 ? std::sqrt(s / static_cast<double>(x.size() - 1)) : 0.0;
  return format_fixed(m, 3) + " (" + format_fixed(s, 3) + ")";
}

std::string count_pct(std::size_t count, std::size_t total) {
  const double pct = total ? 100.0 * static_cast<double>(count) / static_cast<double>(total) : 0.0;
  return std::to_string(count) + " (" + format_fixed(pct, 2) + ")";
}

}  // namespace

BalanceTable balance_table(std::span<const CovariateRecord> cov, std::span<const Arm> arms) {
  if (cov.size() != arms.size()) fail(ErrorKind::InvalidInput, "balance_table: covariates and arms differ in length");
  std::array<std::vector<const CovariateRecord*>, 2> by_arm;
  for (std::size_t i = 0; i < cov.size(); ++i) by_arm[static_cast<std::size_t>(arms[i])].push_back(&cov[i]);
  if (by_arm[0].size() < 2 || by_arm[1].size() < 2)
    fail(ErrorKind::InsufficientData, "balance_table: each arm needs at least two advertisers");

  BalanceTable t;
  t.rows.push_back({"N", std::to_string(by_arm[0].size()), std::to_string(by_arm[1].size()), std::nullopt, false});

  using Getter = std::function<std::optional<double>(const CovariateRecord&)>;
  auto numeric = [&](const std::string& name, const std::string& label, const Getter& get) {
    std::array<std::vector<double>, 2> x;
    for (int a = 0; a < 2; ++a)
      for (const auto* c : by_arm[a])
        if (auto v = get(*c)) x[a].push_back(*v);
    const auto r = welch_t_test(x[0], x[1]);
    t.rows.push_back({label, mean_sd(x[0]), mean_sd(x[1]), r.p, false});
    t.tests.emplace_back(name, r.p);
  };
  // Binary covariates shown as counts but tested with a t-test.
  auto binary_t = [&](const std::string& name, const Getter& get) {
    std::array<std::vector<double>, 2> x;
    for (int a = 0; a < 2; ++a)
      for (const auto* c : by_arm[a]) x[a].push_back(*get(*c));
    const auto r = welch_t_test(x[0], x[1]);
    auto ones = [](const std::vector<double>& v) { return static_cast<std::size_t>(std::count(v.begin(), v.end(), 1.0)); };
    t.rows.push_back({name + " = 1 (%)", count_pct(ones(x[0]), x[0].size()), count_pct(ones(x[1]), x[1].size()), r.p, false});
    t.tests.emplace_back(name, r.p);
  };
  auto categorical = [&](const std::string& name, const std::string& label, std::size_t levels,
                         const std::function<int(const CovariateRecord&)>& get,
                         const std::function<std::string(std::size_t)>& level_name, bool list_levels,
                         std::size_t shown_level) {
    std::vector<std::vector<double>> table(2, std::vector<double>(levels, 0.0));
    for (int a = 0; a < 2; ++a)
      for (const auto* c : by_arm[a]) table[static_cast<std::size_t>(a)][static_cast<std::size_t>(get(*c))] += 1.0;
    const auto r = chi_square_test(table);
    t.tests.emplace_back(name, r.p);
    auto cell = [&](int a, std::size_t l) {
      return count_pct(static_cast<std::size_t>(table[static_cast<std::size_t>(a)][l]), by_arm[a].size());
    };
    if (!list_levels) {
      t.rows.push_back({label, cell(0, shown_level), cell(1, shown_level), r.p, false});
      return;
    }
    t.rows.push_back({label, "", "", r.p, false});
    for (std::size_t l = 0; l < levels; ++l) t.rows.push_back({level_name(l), cell(0, l), cell(1, l), std::nullopt, true});
  };

  numeric("pre_exp_ctr", "pre_exp_ctr (mean (SD))", [](const CovariateRecord& c) { return c.pre_exp_ctr; });
  numeric("pre_exp_engagement", "pre_exp_engagement (mean (SD))",
          [](const CovariateRecord& c) { return std::optional(c.pre_exp_engagement); });
  numeric("pre_exp_impressions", "pre_exp_impressions (mean (SD))",
          [](const CovariateRecord& c) { return std::optional(c.pre_exp_impressions); });
  numeric("pre_exp_ad_cnt", "pre_exp_ad_cnt (mean (SD))",
          [](const CovariateRecord& c) { return std::optional(c.pre_exp_ad_cnt); });
  numeric("account_age_yr", "account_age_yr (mean (SD))",
          [](const CovariateRecord& c) { return std::optional(c.account_age_yr); });
  numeric("nov_feb_ad_cnt", "nov_feb_ad_cnt (mean (SD))",
          [](const CovariateRecord& c) { return std::optional(c.nov_feb_ad_cnt); });
  numeric("nov_feb_variant_cnt", "nov_feb_variant_cnt (mean (SD))",
          [](const CovariateRecord& c) { return std::optional(c.nov_feb_variant_cnt); });
  categorical("is_business_account", "is_business_account = 1 (%)", 2,
              [](const CovariateRecord& c) { return c.is_business_account; },
              [](std::size_t) { return std::string(); }, false, 1);
  binary_t("has_created_llm_ad", [](const CovariateRecord& c) { return std::optional<double>(c.has_created_llm_ad); });
  binary_t("is_new_advertiser", [](const CovariateRecord& c) { return std::optional<double>(c.is_new_advertiser); });
  categorical("budget_cat", "budget_cat (%)", 3, [](const CovariateRecord& c) { return c.budget_cat; },
              [](std::size_t l) { return std::string(kBudgetNames[l]); }, true, 0);
  categorical("expertise_cat", "expertise_cat = 2.High (%)", 2,
              [](const CovariateRecord& c) { return c.expertise_cat; }, [](std::size_t) { return std::string(); },
              false, 1);
  categorical("vertical", "vertical (%)", kNumVerticals, [](const CovariateRecord& c) { return c.vertical; },
              [](std::size_t l) { return std::string(kVerticalNames[l]); }, true, 0);
  return t;
}

std::string balance_text(const BalanceTable& t, const FileHeader& header) {
  std::size_t w0 = std::string("Variable").size(), w1 = std::string("Control").size(),
              w2 = std::string("Treatment").size();
  for (const auto& r : t.rows) {
    w0 = std::max(w0, r.label.size() + (r.level ? 4 : 0));
    w1 = std::max(w1, r.control.size());
    w2 = std::max(w2, r.treatment.size());
  }
  char buf[512];
  std::string out = header_comment(header);
  std::snprintf(buf, sizeof buf, "%-*s  %*s  %*s  %7s\n", static_cast<int>(w0), "Variable", static_cast<int>(w1),
                "Control", static_cast<int>(w2), "Treatment", "p-value");
  out += buf;
  out += std::string(w0 + w1 + w2 + 13, '=') + "\n";
  for (const auto& r : t.rows) {
    const std::string label = (r.level ? "    " : "") + r.label;
    const std::string p = r.p ? format_fixed(*r.p, 3) : "";
    std::snprintf(buf, sizeof buf, "%-*s  %*s  %*s  %7s\n", static_cast<int>(w0), label.c_str(),
                  static_cast<int>(w1), r.control.c_str(), static_cast<int>(w2), r.treatment.c_str(), p.c_str());
    out += buf;
  }
  return out;
}

std::string balance_csv(const BalanceTable& t, const FileHeader& header) {
  std::string out = header_comment(header) + "variable,level,control,treatment,p_value\n";
  std::string parent;
  for (const auto& r : t.rows) {
    if (!r.level) parent = r.label;
    out += csv_escape(r.level ? parent : r.label) + "," + csv_escape(r.level ? r.label : "") + "," +
           csv_escape(r.control) + "," + csv_escape(r.treatment) + "," + (r.p ? format_double(*r.p) : "") + "\n";
  }
  return out;
}

}  // namespace rlpf::stats
