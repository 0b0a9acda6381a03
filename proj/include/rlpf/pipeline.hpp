// Copyright 2026 The RLPF Desk Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rlpf/ab_experiment.hpp"
#include "rlpf/config.hpp"
#include "rlpf/dataset_builder.hpp"
#include "rlpf/market_sim.hpp"
#include "rlpf/policy_model.hpp"
#include "rlpf/reward_model.hpp"
#include "rlpf/rlpf_trainer.hpp"
#include "rlpf/stats.hpp"

namespace rlpf {

// In-memory stages. Each takes the root seed and derives its own stream.

struct SimulateOut {
  MarketState market;
  MultitextLog log;
};
SimulateOut stage_simulate(const Config& cfg, std::uint64_t seed);

struct DataOut {
  Split<PreferencePair> pairs;
  Split<PointwiseRow> pointwise;
};
DataOut stage_build_data(const Config& cfg, const MultitextLog& log, std::uint64_t seed);

std::vector<SftExample> sft_examples(const DataOut& data);
/// Unique prompts of the training rows, in first-seen order.
std::vector<TokenSequence> rl_prompts(const DataOut& data);

struct SftOut {
  PolicyModel policy;
  SftResult result;
};
SftOut stage_train_sft(const Config& cfg, const MarketState& market, const DataOut& data, std::uint64_t seed);

struct RmOut {
  RewardModel train_rm;
  RewardModel eval_rm;
  RewardModel pointwise_rm;
  RmTrainMetrics train_metrics;
  RmTrainMetrics eval_metrics;
  /// Pairwise accuracy on the holdout split.
  double train_rm_holdout = 0.0;
  double eval_rm_holdout = 0.0;
  double pointwise_rm_holdout = 0.0;
};
RmOut stage_train_rm(const Config& cfg, const MarketState& market, const DataOut& data);

struct RlpfOut {
  RlpfResult result;
  std::size_t selected = 0;
  PolicyModel policy;
};
RlpfOut stage_train_rlpf(const Config& cfg, const PolicyModel& sft, const RmOut& rms, const DataOut& data,
                         std::uint64_t seed);

ExperimentResult stage_abtest(const Config& cfg, const MarketState& market, const PolicyModel& control,
                              const PolicyModel& treatment, std::uint64_t seed);

struct AnalysisOut {
  stats::ModelData glm_data;
  stats::ModelData linear_data;
  stats::GlmFit log_binom;
  stats::GlmFit logistic;
  stats::GlmFit poisson;
  stats::LinFit variants;
  stats::LinFit ads;
  stats::LinFit engagement;
  stats::LinFit impressions;
  stats::CtrComparison global;
  stats::BalanceTable balance;
  std::vector<std::string> warnings;
};
AnalysisOut stage_analyze(std::span<const AdvertiserOutcome> outcomes, std::span<const CovariateRecord> covariates);

/// The named tables of the analysis, as (file stem, text, csv).
struct RenderedTable {
  std::string stem;
  std::string text;
  std::string csv;
};
std::vector<RenderedTable> render_tables(const AnalysisOut& a);

// ---------------------------------------------------------------------------
// On-disk session

inline constexpr std::string_view kStages[] = {"simulate", "build-data", "train-sft", "train-rm",
                                               "train-rlpf", "abtest", "analyze", "report"};

/// A working directory holding every artifact of one (config, seed) run and
/// a manifest of completed stages.
class Session {
 public:
  Session(std::filesystem::path workdir, Config config, std::uint64_t seed);
  /// Loads `config_path`, or $RLPF_CONFIG when the path is empty.
  static Session open(const std::filesystem::path& config_path, std::uint64_t seed,
                      const std::filesystem::path& workdir);

  /// Runs one stage or "pipeline". Returns false when everything was already
  /// up to date and nothing was written.
  bool run(std::string_view stage);

  const Config& config() const { return config_; }
  std::uint64_t seed() const { return seed_; }
  const std::filesystem::path& workdir() const { return workdir_; }
  std::filesystem::path path(std::string_view artifact) const;

 private:
  bool run_one(std::string_view stage);
  bool up_to_date(std::string_view stage) const;
  /// Header of an input artifact, checked against this session.
  void require(std::string_view artifact, std::string_view producer) const;
  FileHeader header(std::string_view schema) const;
  void write(std::string_view artifact, std::string_view content);
  void mark_done(std::string_view stage, const std::vector<std::string>& artifacts);
  void load_manifest();
  void save_manifest() const;

  std::filesystem::path workdir_;
  Config config_;
  std::uint64_t seed_;
  std::string hash_;
  std::map<std::string, std::vector<std::string>, std::less<>> done_;
};

}  // namespace rlpf
