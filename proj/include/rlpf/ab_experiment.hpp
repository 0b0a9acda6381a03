// Copyright 2026 The RLPF Desk Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rlpf/config.hpp"
#include "rlpf/io.hpp"
#include "rlpf/market_sim.hpp"
#include "rlpf/policy_model.hpp"

namespace rlpf {

enum class Arm { Control = 0, Treatment = 1 };

struct SelectionParams {
  /// Acceptance probability of a candidate is sigmoid(intercept + slope * q).
  double intercept = -1.0;
  double slope = 3.0;
  /// sd of the advertiser's noisy read of candidate quality.
  double quality_noise = 0.3;
  /// Model generations offered per ad.
  std::int64_t candidates = 4;
  /// Variants delivered per ad, original included.
  std::int64_t max_selected = 5;
  /// Sampling temperature of the generator.
  double temperature = 1.0;
};

struct ExperimentConfig {
  std::int64_t weeks = 10;
  double p = 0.5;
  SelectionParams selection;
  /// Median impressions per ad by budget level, and log-scale spread.
  std::array<double, 3> impressions_median = {800.0, 2000.0, 4000.0};
  double impressions_sigma = 0.8;
  /// Weeks of simulated history before the test; the last nov_feb_weeks of
  /// them follow the launch of the first text generator.
  std::int64_t pre_weeks = 20;
  std::int64_t nov_feb_weeks = 8;
  /// Chance that an ad in the Nov-Feb window was made with the first generator.
  double llm_share = 0.08;
  DeliveryPolicy delivery;

  static ExperimentConfig from(const Config& cfg);
};

struct AdvertiserOutcome {
  std::uint32_t advertiser_id = 0;
  Arm arm = Arm::Control;
  std::uint64_t engagement = 0;
  std::uint64_t impressions = 0;
  std::uint64_t ad_cnt = 0;
  std::uint64_t variant_cnt = 0;
};

struct CovariateRecord {
  std::uint32_t advertiser_id = 0;
  /// Absent for new advertisers.
  std::optional<double> pre_exp_ctr;
  double pre_exp_engagement = 0.0;   // millions
  double pre_exp_impressions = 0.0;  // millions
  double pre_exp_ad_cnt = 0.0;       // thousands
  double account_age_yr = 0.0;
  double nov_feb_ad_cnt = 0.0;
  double nov_feb_variant_cnt = 0.0;
  int is_business_account = 0;
  int has_created_llm_ad = 0;
  int is_new_advertiser = 0;
  int budget_cat = 0;
  int expertise_cat = 0;
  int vertical = 0;
};

struct PastAd {
  std::int64_t week = 0;
  std::uint64_t variants = 1;
  std::uint64_t impressions = 0;
  std::uint64_t clicks = 0;
  bool llm = false;
};

struct PreHistory {
  std::vector<PastAd> ads;
};

/// One ad as it ran: the delivered variants and their outcomes.
struct AdRun {
  std::uint32_t advertiser_id = 0;
  std::int64_t week = 0;
  TokenSequence original;
  std::vector<TokenSequence> variants;
  std::vector<VariantDelivery> delivery;
  std::vector<double> true_ctr;
};

/// Quality of a candidate as the advertiser perceives it, before noise.
/// The default is the true log-odds gain over the original text.
using QualityFn = std::function<double(const TokenSequence& original, const TokenSequence& candidate)>;

std::vector<Arm> assign_arms(std::span<const Advertiser> advertisers, double p, std::uint64_t seed);

PreHistory simulate_pre_history(const MarketState& market, const Advertiser& advertiser,
                                const ExperimentConfig& config, std::uint64_t seed);

/// Per-field definitions follow the covariate list of the field test:
/// engagement and impressions in millions, ad counts in thousands, and
/// is_new_advertiser iff fewer than 1000 lifetime impressions.
CovariateRecord collect_covariates(const PreHistory& history, const Advertiser& advertiser,
                                   const ExperimentConfig& config);

/// Creates `n_ads` ads in week `week`: each draws an original text, offers
/// model candidates, keeps those the advertiser accepts (original always
/// kept, at most max_selected in total) and delivers them.
std::vector<AdRun> advertiser_session(const MarketState& market, const Advertiser& advertiser,
                                      const PolicyModel& model, const ExperimentConfig& config,
                                      std::int64_t week, std::uint64_t n_ads, std::uint64_t seed,
                                      const QualityFn& quality = {});

struct ExperimentResult {
  std::vector<AdvertiserOutcome> outcomes;
  std::vector<CovariateRecord> covariates;
  std::vector<AdRun> ads;
};

ExperimentResult run_experiment(const MarketState& market, const PolicyModel& control,
                                const PolicyModel& treatment, const ExperimentConfig& config,
                                std::uint64_t seed, const QualityFn& quality = {});

std::string outcomes_csv(std::span<const AdvertiserOutcome> rows, const FileHeader& header);
std::vector<AdvertiserOutcome> outcomes_from_csv(std::string_view text);
std::string covariates_csv(std::span<const CovariateRecord> rows, const FileHeader& header);
std::vector<CovariateRecord> covariates_from_csv(std::string_view text);

std::string_view arm_name(Arm a);

}  // namespace rlpf
