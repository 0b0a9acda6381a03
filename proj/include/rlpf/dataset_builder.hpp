// Copyright 2026 The RLPF Desk Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "rlpf/config.hpp"
#include "rlpf/io.hpp"
#include "rlpf/market_sim.hpp"

namespace rlpf {

/// Token-count bounds stand in for the character bounds on real ad text.
struct FilterConfig {
  std::uint64_t min_impressions = 2000;
  std::size_t min_length = 8;
  std::size_t max_length = 80;

  static FilterConfig from(const Config& cfg);
  bool passes(const MultitextRecord& r) const;
};

struct PreferencePair {
  std::uint32_t advertiser_id = 0;
  std::uint32_t ad_id = 0;
  TokenSequence prompt;
  TokenSequence winner;
  TokenSequence loser;
  double ctr_w = 0.0;
  double ctr_l = 0.0;
  std::uint64_t impressions_w = 0;
  std::uint64_t impressions_l = 0;
};

struct PointwiseRow {
  std::uint32_t advertiser_id = 0;
  std::uint32_t ad_id = 0;
  TokenSequence prompt;
  TokenSequence variant;
  double ctr = 0.0;
  std::uint64_t impressions = 0;
};

/// Every unordered pair of surviving variants with distinct CTRs, winner
/// first. Output is ordered by ad, then by variant index of the pair.
std::vector<PreferencePair> build_pairwise(const MultitextLog& log, const FilterConfig& filters);
std::vector<PointwiseRow> build_pointwise(const MultitextLog& log, const FilterConfig& filters);

template <class T>
struct Split {
  std::vector<T> train;
  std::vector<T> eval_rm;
  std::vector<T> holdout;
};

/// Assigns whole advertisers to parts. Part sizes (in advertisers) follow
/// largest-remainder rounding of the fractions.
std::array<std::vector<std::uint32_t>, 3> split_advertisers(std::vector<std::uint32_t> advertiser_ids,
                                                            const std::array<double, 3>& fractions,
                                                            std::uint64_t seed);

template <class T>
Split<T> split_dataset(const std::vector<T>& rows, const std::array<double, 3>& fractions,
                       std::uint64_t seed);

std::string pairs_to_jsonl(const std::vector<PreferencePair>& pairs, const FileHeader& header);
std::vector<PreferencePair> pairs_from_jsonl(std::string_view text);
std::string pointwise_to_jsonl(const std::vector<PointwiseRow>& rows, const FileHeader& header);
std::vector<PointwiseRow> pointwise_from_jsonl(std::string_view text);

}  // namespace rlpf
