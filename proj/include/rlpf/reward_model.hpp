// Copyright 2026 The RLPF Desk Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rlpf/config.hpp"
#include "rlpf/dataset_builder.hpp"
#include "rlpf/io.hpp"
#include "rlpf/market_sim.hpp"

namespace rlpf {

/// Handcrafted features of (prompt, text). Both views see only token ids,
/// never the roles the ground truth uses.
///
///   counts:   intercept, per-token counts, length / 10, prompt overlap
///   presence: intercept, per-token presence, short and long indicators,
///             prompt overlap
///
/// Special tokens get no feature. Overlap is the share of body tokens that
/// also occur in the prompt.
class FeatureExtractor {
 public:
  enum class View { Counts, Presence };

  FeatureExtractor() = default;
  FeatureExtractor(std::size_t vocab_size, TokenId bos, TokenId eos, View view,
                   std::size_t short_max = 9, std::size_t long_min = 21);
  static FeatureExtractor for_vocab(const Vocabulary& vocab, View view,
                                    std::size_t short_max = 9, std::size_t long_min = 21);

  View view() const { return view_; }
  std::size_t dimension() const { return dim_; }
  std::size_t vocab_size() const { return vocab_size_; }
  std::size_t short_max() const { return short_max_; }
  std::size_t long_min() const { return long_min_; }
  TokenId bos() const { return bos_; }
  TokenId eos() const { return eos_; }
  /// Feature slot of a token, or dimension() for special tokens.
  std::size_t token_slot(TokenId t) const;

  void extract(const TokenSequence& prompt, const TokenSequence& text, std::span<double> out) const;
  std::vector<double> extract(const TokenSequence& prompt, const TokenSequence& text) const;
  std::vector<std::string> names(const Vocabulary& vocab) const;
  std::uint64_t hash() const;

 private:
  std::size_t vocab_size_ = 0;
  TokenId bos_ = 0;
  TokenId eos_ = 1;
  View view_ = View::Counts;
  std::size_t short_max_ = 9;
  std::size_t long_min_ = 21;
  std::size_t dim_ = 0;
};

FeatureExtractor::View parse_view(std::string_view name);
std::string_view view_name(FeatureExtractor::View v);

struct RewardModel {
  enum class Kind { Pairwise, Pointwise };

  FeatureExtractor extractor;
  std::vector<double> theta;
  Kind kind = Kind::Pairwise;

  explicit RewardModel(FeatureExtractor fx = {}, Kind k = Kind::Pairwise)
      : extractor(fx), theta(fx.dimension(), 0.0), kind(k) {}

  double score(const TokenSequence& prompt, const TokenSequence& text) const;
};

/// P(y1 beats y2) = sigmoid(r1 - r2).
double bt_probability(double r1, double r2);

struct LossGrad {
  double loss = 0.0;
  std::vector<double> grad;
};

/// Mean of -log sigmoid(r(x, y_w) - r(x, y_l)) and its exact gradient.
LossGrad bt_loss_and_grad(const RewardModel& rm, std::span<const PreferencePair> batch);

/// Fraction of pairs the model orders correctly; exact ties score one half.
double evaluate_pairwise_accuracy(const RewardModel& rm, std::span<const PreferencePair> pairs);

struct RmHyper {
  std::int64_t epochs = 400;
  double lr = 1.0;
  double momentum = 0.9;
  double l2 = 1e-4;

  static RmHyper from(const Config& cfg);
};

struct RmTrainMetrics {
  std::vector<double> epoch_loss;
  /// Pairwise accuracy on the evaluation pairs after each epoch (empty when
  /// no evaluation pairs were given).
  std::vector<double> epoch_accuracy;
  double final_accuracy = 0.0;
};

struct RmTrainResult {
  RewardModel model;
  RmTrainMetrics metrics;
};

/// Full-batch gradient descent with momentum from theta = 0. The training
/// objective adds l2/2 * |theta|^2 to the Bradley-Terry loss.
RmTrainResult train_pairwise_rm(std::span<const PreferencePair> train,
                                std::span<const PreferencePair> eval, const FeatureExtractor& fx,
                                const RmHyper& hyper);

/// Minimum-norm least squares of theta . features on logit(ctr), with ctr
/// clamped to [1e-6, 1 - 1e-6].
RmTrainResult train_pointwise_rm(std::span<const PointwiseRow> rows,
                                 std::span<const PreferencePair> eval, const FeatureExtractor& fx);

std::string rm_to_json(const RewardModel& rm, const FileHeader& header);
/// Throws StaleArtifact if expected_extractor_hash is nonzero and differs.
RewardModel rm_from_json(std::string_view text, std::uint64_t expected_extractor_hash = 0);

/// "epoch,loss,accuracy" rows.
std::string rm_metrics_csv(const RmTrainMetrics& m, const FileHeader& header);

}  // namespace rlpf
