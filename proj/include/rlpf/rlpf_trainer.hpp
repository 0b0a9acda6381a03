// Copyright 2026 The RLPF Desk Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rlpf/config.hpp"
#include "rlpf/io.hpp"
#include "rlpf/policy_model.hpp"
#include "rlpf/reward_model.hpp"
#include "rlpf/rng.hpp"

namespace rlpf {

struct PpoConfig {
  enum class Baseline { BatchMean, None };

  double beta = 0.05;
  double alpha = 0.0;
  double clip = 0.2;
  double lr = 0.5;
  std::int64_t batch = 64;
  std::int64_t steps = 60;
  std::int64_t ckpt_interval = 5;
  /// Optimization passes over each rollout batch.
  std::int64_t epochs = 4;
  Baseline baseline = Baseline::BatchMean;
  bool normalize_advantages = true;
  /// Global gradient-norm cap; 0 disables it.
  double max_grad_norm = 1.0;
  double temperature = 1.0;
  /// Centered moving-average window (in checkpoints) for checkpoint selection.
  std::int64_t smoothing = 3;
  /// Size of the fixed prompt draw behind the eval-RM curve.
  std::int64_t eval_samples = 256;

  static PpoConfig from(const Config& cfg);
};

/// r - beta * kl - alpha * length.
double shaped_reward(double score, double kl, std::size_t length, double alpha, double beta);
double shaped_reward(const RewardModel& rm, const PolicyModel& policy, const PolicyModel& ref,
                     const TokenSequence& prompt, const TokenSequence& y, double alpha, double beta);

/// One sample's contribution to the clipped surrogate,
/// min(ratio * A, clip(ratio, 1 - eps, 1 + eps) * A).
double surrogate_term(double ratio, double advantage, double clip);
/// d surrogate / d ratio; zero where clipping makes the term flat.
double surrogate_slope(double ratio, double advantage, double clip);

struct StepMetrics {
  double train_rm = 0.0;
  double eval_rm = 0.0;
  double length = 0.0;
  double kl = 0.0;
  /// Mean shaped reward of the rollout.
  double objective = 0.0;
  double clip_fraction = 0.0;
};

/// Samples one response per prompt, shapes rewards, subtracts the baseline,
/// and takes `epochs` clipped-ratio gradient ascent steps. The eval RM, if
/// given, is only scored for monitoring.
StepMetrics ppo_update(PolicyModel& policy, const PolicyModel& ref, const RewardModel& rm,
                       std::span<const TokenSequence> prompts, const PpoConfig& config, Rng& rng,
                       std::int64_t step = 0, const RewardModel* eval_rm = nullptr);

struct TrajectoryEntry {
  std::int64_t step = 0;
  StepMetrics metrics;
};

struct Checkpoint {
  std::int64_t step = 0;
  PolicyModel policy;
};

struct RlpfResult {
  std::vector<Checkpoint> checkpoints;
  std::vector<TrajectoryEntry> trajectory;
};

/// Steps 0..steps: step s rolls out the current policy (recorded as
/// trajectory entry s), snapshots it on the checkpoint interval and at the
/// last step, and updates it unless s == steps.
/// Mean RM score of one sample per prompt, sample i drawn with derive_seed(seed, i).
double mean_score(const PolicyModel& policy, const RewardModel& rm, std::span<const TokenSequence> prompts,
                  double temperature, std::uint64_t seed);

/// Trajectory eval_rm is measured before each step's update on a fixed draw of
/// eval_samples prompts from `eval_prompts` (the training prompts when empty).
RlpfResult train_rlpf(const PolicyModel& init, const RewardModel& rm, const RewardModel& eval_rm,
                      std::span<const TokenSequence> prompts, const PpoConfig& config,
                      std::uint64_t seed, std::span<const TokenSequence> eval_prompts = {});

/// Index of the checkpoint maximizing the smoothed eval-RM mean; earliest on
/// ties.
std::size_t select_checkpoint(std::span<const TrajectoryEntry> trajectory,
                              std::span<const Checkpoint> checkpoints, std::int64_t window = 3);
/// Centered moving average, truncated at the ends.
std::vector<double> smooth(std::span<const double> values, std::int64_t window);

std::string trajectory_csv(const RlpfResult& result, const FileHeader& header);

}  // namespace rlpf
