// Copyright 2026 The RLPF Desk Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rlpf/config.hpp"
#include "rlpf/io.hpp"
#include "rlpf/market_sim.hpp"
#include "rlpf/rng.hpp"

namespace rlpf {

/// Order-n softmax sequence model pi(y | x).
///
/// The next-token logits are a table entry for the previous n tokens (padded
/// with BOS), a linear read-out of the prompt's mean bag of tokens, and a
/// copy term keyed on the prompt token a_j under a monotone pointer j that
/// follows the body through the prompt:
///
///   logit(v | ctx, x, j) = T[ctx][v] + sum_u bag_x[u] * P[u][v] + A[a_j][v]
///
/// Parameters are stored densely as [T | P | A]. Once the body reaches max_len
/// tokens EOS is forced; that step has probability one and no gradient. BOS
/// is never emitted.
class PolicyModel {
 public:
  PolicyModel() = default;
  PolicyModel(std::size_t vocab_size, TokenId bos, TokenId eos, int order = 2,
              std::size_t max_len = 40, std::uint64_t vocab_hash = 0);
  static PolicyModel for_vocab(const Vocabulary& vocab, int order = 2, std::size_t max_len = 40);

  std::size_t vocab_size() const { return vocab_size_; }
  TokenId bos() const { return bos_; }
  TokenId eos() const { return eos_; }
  int order() const { return order_; }
  std::size_t max_len() const { return max_len_; }
  std::uint64_t vocab_hash() const { return vocab_hash_; }

  std::size_t num_params() const { return params_.size(); }
  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }
  /// Offset of T[ctx][v], P[u][v] and A[a][v] in params().
  std::size_t table_offset(std::span<const TokenId> context, TokenId v) const;
  std::size_t prompt_offset(TokenId u, TokenId v) const;
  std::size_t align_offset(TokenId a, TokenId v) const;

  /// Next-token distribution after `prefix` of the body.
  std::vector<double> next_distribution(const TokenSequence& prompt,
                                        std::span<const TokenId> prefix) const;

  double log_prob(const TokenSequence& prompt, const TokenSequence& y) const;
  /// Returns log pi(y|x) and adds scale * d/dtheta log pi(y|x) into grad,
  /// which must have num_params() entries.
  double log_prob_grad(const TokenSequence& prompt, const TokenSequence& y,
                       std::span<double> grad, double scale = 1.0) const;

  /// Returns sequence_kl(*this, ref, prompt, y) and adds scale * its gradient
  /// in this model's parameters, with y held fixed.
  double kl_grad(const PolicyModel& ref, const TokenSequence& prompt, const TokenSequence& y,
                 std::span<double> grad, double scale = 1.0) const;

  /// temperature 0 is greedy with lowest-id tie-break.
  TokenSequence sample(const TokenSequence& prompt, double temperature, Rng& rng) const;
  TokenSequence sample(const TokenSequence& prompt, double temperature, std::uint64_t seed) const;

  bool same_shape(const PolicyModel& other) const;

 private:
  std::vector<double> prompt_bag(const TokenSequence& prompt) const;
  std::size_t context_row(std::span<const TokenId> body, std::size_t pos) const;
  /// The prompt token under the copy pointer j (EOS past the end), and the
  /// pointer update after emitting a token: a match moves it one step, a
  /// match with the following prompt token skips one.
  TokenId aligned(const TokenSequence& prompt, std::size_t j) const;
  void advance(const TokenSequence& prompt, std::size_t& j, TokenId emitted) const;
  void logits(const std::vector<double>& bag, std::size_t row, TokenId align, std::vector<double>& out) const;
  void check_ids(const TokenSequence& s, const char* what) const;

  std::size_t vocab_size_ = 0;
  TokenId bos_ = 0;
  TokenId eos_ = 0;
  int order_ = 2;
  std::size_t max_len_ = 40;
  std::uint64_t vocab_hash_ = 0;
  std::size_t rows_ = 0;
  std::vector<double> params_;
};

/// Sum over realized prefixes of KL(policy(.|x, y<t) || ref(.|x, y<t)),
/// including the step that emits EOS. +infinity if ref assigns zero mass
/// where policy has support.
double sequence_kl(const PolicyModel& policy, const PolicyModel& ref, const TokenSequence& prompt,
                   const TokenSequence& y);

struct SftExample {
  TokenSequence input;
  TokenSequence target;
};

struct SftHyper {
  std::int64_t epochs = 30;
  double lr = 2.0;
  double momentum = 0.9;
  /// Minibatch size; 0 means full batch.
  std::int64_t batch = 0;

  static SftHyper from(const Config& cfg);
};

struct SftResult {
  double initial_loss = 0.0;
  /// Mean negative log-likelihood over the corpus after each epoch.
  std::vector<double> epoch_loss;
};

/// Maximizes mean log pi(target | input) by gradient ascent with momentum.
SftResult sft_train(PolicyModel& policy, const std::vector<SftExample>& examples,
                    const SftHyper& hyper, std::uint64_t seed);

double mean_nll(const PolicyModel& policy, const std::vector<SftExample>& examples);

/// Binary checkpoint: "RLPFBIN1 " + JSON header line, a JSON shape line, then
/// the parameters as little-endian IEEE doubles.
std::string policy_to_bytes(const PolicyModel& policy, const FileHeader& header);
/// Throws StaleArtifact if expected_vocab_hash is nonzero and differs.
PolicyModel policy_from_bytes(std::string_view bytes, std::uint64_t expected_vocab_hash = 0);

}  // namespace rlpf
