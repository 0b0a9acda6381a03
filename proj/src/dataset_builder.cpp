// Copyright 2026 The RLPF Desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "rlpf/dataset_builder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "rlpf/error.hpp"
#include "rlpf/rng.hpp"

namespace rlpf {
namespace {

using json = nlohmann::ordered_json;

double ctr_of(const MultitextRecord& r) {
  return r.impressions == 0 ? 0.0 : static_cast<double>(r.clicks) / static_cast<double>(r.impressions);
}

// Record indices ordered by (ad_id, variant_index).
std::vector<std::size_t> ordered(const MultitextLog& log) {
  std::vector<std::size_t> idx(log.records.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    const auto& ra = log.records[a];
    const auto& rb = log.records[b];
    if (ra.ad_id != rb.ad_id) return ra.ad_id < rb.ad_id;
    return ra.variant_index < rb.variant_index;
  });
  return idx;
}

std::uint32_t advertiser_of(const PreferencePair& p) { return p.advertiser_id; }
std::uint32_t advertiser_of(const PointwiseRow& r) { return r.advertiser_id; }

TokenSequence seq_from(const nlohmann::json& j) {
  TokenSequence s;
  s.ids = j.get<std::vector<TokenId>>();
  return s;
}

template <class T, class Fn>
std::vector<T> read_jsonl(std::string_view text, const char* what, Fn&& row) {
  std::vector<T> out;
  const auto lines = split_lines(text);
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto j = nlohmann::json::parse(lines[i], nullptr, false);
    if (j.is_discarded())
      fail(ErrorKind::Io, std::string(what) + " line " + std::to_string(i + 1) + ": malformed");
    try {
      out.push_back(row(j));
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::Io, std::string(what) + " line " + std::to_string(i + 1) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace

FilterConfig FilterConfig::from(const Config& cfg) {
  FilterConfig f;
  const auto min_imp = cfg.get_int("filters.min_impressions", static_cast<std::int64_t>(f.min_impressions));
  const auto min_len = cfg.get_int("filters.min_length", static_cast<std::int64_t>(f.min_length));
  const auto max_len = cfg.get_int("filters.max_length", static_cast<std::int64_t>(f.max_length));
  if (min_imp < 1) fail(ErrorKind::Config, "filters.min_impressions must be >= 1");
  if (min_len < 0 || max_len <= min_len)
    fail(ErrorKind::Config, "filters.min_length must be below filters.max_length");
  f.min_impressions = static_cast<std::uint64_t>(min_imp);
  f.min_length = static_cast<std::size_t>(min_len);
  f.max_length = static_cast<std::size_t>(max_len);
  return f;
}

bool FilterConfig::passes(const MultitextRecord& r) const {
  return r.impressions >= min_impressions && r.variant.length() >= min_length &&
         r.variant.length() <= max_length;
}

std::vector<PreferencePair> build_pairwise(const MultitextLog& log, const FilterConfig& filters) {
  std::vector<PreferencePair> out;
  const auto idx = ordered(log);
  std::size_t begin = 0;
  while (begin < idx.size()) {
    std::size_t end = begin;
    const auto ad = log.records[idx[begin]].ad_id;
    while (end < idx.size() && log.records[idx[end]].ad_id == ad) ++end;
    std::vector<const MultitextRecord*> kept;
    for (std::size_t i = begin; i < end; ++i)
      if (filters.passes(log.records[idx[i]])) kept.push_back(&log.records[idx[i]]);
    for (std::size_t a = 0; a < kept.size(); ++a) {
      for (std::size_t b = a + 1; b < kept.size(); ++b) {
        const double ca = ctr_of(*kept[a]);
        const double cb = ctr_of(*kept[b]);
        if (ca == cb) continue;
        const auto* w = ca > cb ? kept[a] : kept[b];
        const auto* l = ca > cb ? kept[b] : kept[a];
        PreferencePair p;
        p.advertiser_id = w->advertiser_id;
        p.ad_id = ad;
        p.prompt = w->prompt;
        p.winner = w->variant;
        p.loser = l->variant;
        p.ctr_w = std::max(ca, cb);
        p.ctr_l = std::min(ca, cb);
        p.impressions_w = w->impressions;
        p.impressions_l = l->impressions;
        out.push_back(std::move(p));
      }
    }
    begin = end;
  }
  return out;
}

std::vector<PointwiseRow> build_pointwise(const MultitextLog& log, const FilterConfig& filters) {
  std::vector<PointwiseRow> out;
  for (std::size_t i : ordered(log)) {
    const auto& r = log.records[i];
    if (!filters.passes(r)) continue;
    PointwiseRow row;
    row.advertiser_id = r.advertiser_id;
    row.ad_id = r.ad_id;
    row.prompt = r.prompt;
    row.variant = r.variant;
    row.ctr = ctr_of(r);
    row.impressions = r.impressions;
    out.push_back(std::move(row));
  }
  return out;
}

std::array<std::vector<std::uint32_t>, 3> split_advertisers(std::vector<std::uint32_t> ids,
                                                            const std::array<double, 3>& fractions,
                                                            std::uint64_t seed) {
  double sum = 0.0;
  for (double f : fractions) {
    if (!std::isfinite(f) || f < 0.0) fail(ErrorKind::Config, "split fractions must be finite and >= 0");
    sum += f;
  }
  if (std::abs(sum - 1.0) > 1e-9) fail(ErrorKind::Config, "split fractions must sum to 1");

  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  Rng rng(seed);
  for (std::size_t i = ids.size(); i > 1; --i)
    std::swap(ids[i - 1], ids[static_cast<std::size_t>(rng.below(i))]);

  const auto n = ids.size();
  std::array<std::size_t, 3> counts{};
  std::array<double, 3> rem{};
  std::size_t used = 0;
  for (int k = 0; k < 3; ++k) {
    const double exact = static_cast<double>(n) * fractions[k];
    counts[k] = static_cast<std::size_t>(std::floor(exact + 1e-9));
    rem[k] = exact - static_cast<double>(counts[k]);
    used += counts[k];
  }
  while (used < n) {
    int best = 0;
    for (int k = 1; k < 3; ++k)
      if (rem[k] > rem[best]) best = k;
    ++counts[best];
    rem[best] = -1.0;
    ++used;
  }

  std::array<std::vector<std::uint32_t>, 3> parts;
  std::size_t pos = 0;
  for (int k = 0; k < 3; ++k) {
    parts[k].assign(ids.begin() + static_cast<std::ptrdiff_t>(pos),
                    ids.begin() + static_cast<std::ptrdiff_t>(pos + counts[k]));
    std::sort(parts[k].begin(), parts[k].end());
    pos += counts[k];
  }
  return parts;
}

template <class T>
Split<T> split_dataset(const std::vector<T>& rows, const std::array<double, 3>& fractions,
                       std::uint64_t seed) {
  std::vector<std::uint32_t> ids;
  ids.reserve(rows.size());
  for (const auto& r : rows) ids.push_back(advertiser_of(r));
  const auto parts = split_advertisers(std::move(ids), fractions, seed);
  Split<T> out;
  for (const auto& r : rows) {
    const auto a = advertiser_of(r);
    if (std::binary_search(parts[0].begin(), parts[0].end(), a))
      out.train.push_back(r);
    else if (std::binary_search(parts[1].begin(), parts[1].end(), a))
      out.eval_rm.push_back(r);
    else
      out.holdout.push_back(r);
  }
  return out;
}

template Split<PreferencePair> split_dataset(const std::vector<PreferencePair>&,
                                             const std::array<double, 3>&, std::uint64_t);
template Split<PointwiseRow> split_dataset(const std::vector<PointwiseRow>&,
                                           const std::array<double, 3>&, std::uint64_t);

std::string pairs_to_jsonl(const std::vector<PreferencePair>& pairs, const FileHeader& header) {
  std::string out = header_json(header);
  for (const auto& p : pairs) {
    json j;
    j["advertiser_id"] = p.advertiser_id;
    j["ad_id"] = p.ad_id;
    j["prompt"] = p.prompt.ids;
    j["winner"] = p.winner.ids;
    j["loser"] = p.loser.ids;
    j["ctr_w"] = p.ctr_w;
    j["ctr_l"] = p.ctr_l;
    j["impressions_w"] = p.impressions_w;
    j["impressions_l"] = p.impressions_l;
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::vector<PreferencePair> pairs_from_jsonl(std::string_view text) {
  return read_jsonl<PreferencePair>(text, "pairs", [](const nlohmann::json& j) {
    PreferencePair p;
    p.advertiser_id = j.at("advertiser_id");
    p.ad_id = j.at("ad_id");
    p.prompt = seq_from(j.at("prompt"));
    p.winner = seq_from(j.at("winner"));
    p.loser = seq_from(j.at("loser"));
    p.ctr_w = j.at("ctr_w");
    p.ctr_l = j.at("ctr_l");
    p.impressions_w = j.at("impressions_w");
    p.impressions_l = j.at("impressions_l");
    return p;
  });
}

std::string pointwise_to_jsonl(const std::vector<PointwiseRow>& rows, const FileHeader& header) {
  std::string out = header_json(header);
  for (const auto& r : rows) {
    json j;
    j["advertiser_id"] = r.advertiser_id;
    j["ad_id"] = r.ad_id;
    j["prompt"] = r.prompt.ids;
    j["variant"] = r.variant.ids;
    j["ctr"] = r.ctr;
    j["impressions"] = r.impressions;
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::vector<PointwiseRow> pointwise_from_jsonl(std::string_view text) {
  return read_jsonl<PointwiseRow>(text, "pointwise", [](const nlohmann::json& j) {
    PointwiseRow r;
    r.advertiser_id = j.at("advertiser_id");
    r.ad_id = j.at("ad_id");
    r.prompt = seq_from(j.at("prompt"));
    r.variant = seq_from(j.at("variant"));
    r.ctr = j.at("ctr");
    r.impressions = j.at("impressions");
    return r;
  });
}

}  // namespace rlpf
