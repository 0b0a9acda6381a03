// Copyright 2026 The RLPF Desk Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rlpf/config.hpp"
#include "rlpf/io.hpp"
#include "rlpf/rng.hpp"

namespace rlpf {

using TokenId = std::uint32_t;

/// Token ids grouped by the part they play in ad text.
struct TokenRoles {
  std::vector<TokenId> persuasive;
  std::vector<TokenId> cta;
  std::vector<TokenId> products;
  std::vector<TokenId> descriptors;
  std::vector<TokenId> connectors;
  std::vector<TokenId> openers;
  std::vector<TokenId> enders;
  TokenId question = 0;
};

class Vocabulary {
 public:
  /// The shipped ad vocabulary (41 symbols).
  static Vocabulary standard();
  /// Validates size >= 8 and that "<bos>" and "<eos>" each occur exactly
  /// once. Roles are assigned to symbols that appear in the standard tables.
  static Vocabulary from_tokens(std::vector<std::string> tokens);

  std::size_t size() const { return tokens_.size(); }
  TokenId bos() const { return bos_; }
  TokenId eos() const { return eos_; }
  const std::string& symbol(TokenId id) const;
  TokenId id(std::string_view symbol) const;
  const std::vector<std::string>& tokens() const { return tokens_; }
  const TokenRoles& roles() const { return roles_; }
  std::uint64_t hash() const;

 private:
  std::vector<std::string> tokens_;
  TokenId bos_ = 0;
  TokenId eos_ = 0;
  TokenRoles roles_;
};

/// Ad text as body token ids. The EOS terminator is implicit: it is never
/// stored, and every model that scores a sequence appends it.
struct TokenSequence {
  std::vector<TokenId> ids;

  std::size_t length() const { return ids.size(); }
  bool operator==(const TokenSequence&) const = default;
};

std::string render(const Vocabulary& vocab, const TokenSequence& seq);
TokenSequence parse_text(const Vocabulary& vocab, std::string_view text);

inline constexpr std::size_t kNumVerticals = 15;
extern const std::array<std::string_view, kNumVerticals> kVerticalNames;
/// Pooled advertiser counts per vertical across both arms of the field test.
extern const std::array<double, kNumVerticals> kVerticalCounts;
extern const std::array<std::string_view, 3> kBudgetNames;
extern const std::array<std::string_view, 2> kExpertiseNames;

struct Advertiser {
  std::uint32_t id = 0;
  int vertical = 0;
  int budget_cat = 0;
  int expertise_cat = 0;
  double account_age_yr = 0.0;
  bool is_business_account = false;
  /// Expected ads created per week.
  double activity_rate = 1.0;
  /// Latent log-odds shift of every ad this advertiser runs. Hidden from the
  /// analysis, which sees it only through pre-experiment CTR.
  double ctr_offset = 0.0;
  /// Never delivered an ad before the experiment.
  bool dormant = false;
};

/// Layout of the ground-truth feature vector.
struct TrueFeatureLayout {
  std::vector<TokenId> persuasive;
  std::vector<TokenId> cta;
  std::vector<TokenId> products;
  TokenId question = 0;
  std::size_t short_max = 9;  // length <= short_max is "short"
  std::size_t long_min = 21;  // length >= long_min is "long"

  std::size_t question_index() const { return persuasive.size(); }
  std::size_t cta_index() const { return persuasive.size() + 1; }
  std::size_t short_index() const { return persuasive.size() + 2; }
  std::size_t long_index() const { return persuasive.size() + 3; }
  std::size_t on_topic_index() const { return persuasive.size() + 4; }
  std::size_t off_topic_index() const { return persuasive.size() + 5; }
  std::size_t vertical_index(int v) const { return persuasive.size() + 6 + v; }
  std::size_t question_vertical_index(int v) const {
    return persuasive.size() + 6 + kNumVerticals + v;
  }
  std::size_t dimension() const { return persuasive.size() + 6 + 2 * kNumVerticals; }
};

/// Latent CTR: sigmoid(bias + weights . features + advertiser offset + ad
/// effect). `noise_scale` is the sd of the per-ad effect shared by all
/// variants of one ad (image, targeting and the like).
struct TrueCtrModel {
  double bias = 0.0;
  std::vector<double> weights;
  double noise_scale = 0.0;
  TrueFeatureLayout layout;
};

std::vector<double> true_features(const TrueCtrModel& model, const TokenSequence& prompt,
                                  const TokenSequence& variant, const Advertiser& advertiser);
double true_logit(const TrueCtrModel& model, const TokenSequence& prompt,
                  const TokenSequence& variant, const Advertiser& advertiser,
                  double ad_effect = 0.0);
double true_ctr(const TrueCtrModel& model, const TokenSequence& prompt,
                const TokenSequence& variant, const Advertiser& advertiser,
                double ad_effect = 0.0);

struct MarketConfig {
  std::int64_t n_advertisers = 2000;
  double base_ctr = 0.03;
  double persuasive_weight = 0.14;
  double question_weight = 0.06;
  double cta_weight = 0.15;
  double short_weight = -0.12;
  double long_weight = -0.30;
  double on_topic_weight = 0.15;
  double off_topic_weight = -0.35;
  double vertical_sd = 0.25;
  double question_vertical_sd = 0.15;
  double advertiser_sd = 0.45;
  double ad_noise_sd = 0.25;
  double activity_mean = 0.5;
  double activity_shape = 2.0;
  double dormant_share = 0.08;
  std::int64_t short_max = 9;
  std::int64_t long_min = 21;

  static MarketConfig from(const Config& cfg);
};

struct MarketState {
  MarketConfig config;
  Vocabulary vocab;
  TrueCtrModel true_model;
  std::vector<Advertiser> advertisers;
};

MarketState generate_market(const MarketConfig& config, std::uint64_t seed);
MarketState generate_market(const MarketConfig& config, const Vocabulary& vocab,
                            std::uint64_t seed);

std::string market_to_json(const MarketState& market, const FileHeader& header);
MarketState market_from_json(std::string_view text);

/// Human copywriting stand-in: original ad text and hand-made rewrites.
TokenSequence write_prompt(const Vocabulary& vocab, Rng& rng);
TokenSequence write_variant(const Vocabulary& vocab, const TokenSequence& prompt, Rng& rng);

struct DeliveryPolicy {
  enum class Kind { Uniform, Softmax };
  Kind kind = Kind::Softmax;
  /// Softmax temperature on the CTR scale.
  double temperature = 0.01;
  /// Impressions are released in this many rounds; each round re-weights
  /// variants by the CTR observed so far.
  std::int64_t rounds = 8;

  static DeliveryPolicy from(const Config& cfg, std::string_view prefix);
};

struct VariantDelivery {
  std::uint64_t impressions = 0;
  std::uint64_t clicks = 0;
};

std::vector<VariantDelivery> simulate_delivery(std::span<const double> true_ctrs,
                                               std::uint64_t total_impressions,
                                               const DeliveryPolicy& policy,
                                               std::uint64_t seed);

struct MultitextRecord {
  std::uint32_t advertiser_id = 0;
  std::uint32_t ad_id = 0;
  std::uint32_t variant_index = 0;
  TokenSequence prompt;
  TokenSequence variant;
  std::uint64_t impressions = 0;
  std::uint64_t clicks = 0;
};

struct MultitextLog {
  std::vector<MultitextRecord> records;
};

struct EraConfig {
  double ads_per_advertiser = 1.5;
  std::int64_t min_variants = 2;
  std::int64_t max_variants = 5;
  double impressions_median = 9000.0;
  double impressions_sigma = 0.6;
  DeliveryPolicy delivery;

  static EraConfig from(const Config& cfg);
};

/// Pre-AI era of manually written multitext ads; the reward-model corpus.
MultitextLog run_multitext_era(const MarketState& market, const EraConfig& era,
                               std::uint64_t seed);

/// Throws InvalidInput if clicks exceed impressions or an ad's variants
/// disagree on prompt or advertiser.
void validate(const MultitextLog& log);

std::string multitext_to_jsonl(const MultitextLog& log, const FileHeader& header);
MultitextLog multitext_from_jsonl(std::string_view text);

}  // namespace rlpf
