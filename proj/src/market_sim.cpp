// Copyright 2026 The RLPF Desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "rlpf/market_sim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "rlpf/error.hpp"

namespace rlpf {
namespace {

using json = nlohmann::ordered_json;

constexpr std::array<std::string_view, 6> kPersuasive = {"free",  "save",  "exclusive",
                                                         "limited", "today", "guaranteed"};
constexpr std::array<std::string_view, 4> kCta = {"shop_now", "learn_more", "sign_up", "order_now"};
constexpr std::array<std::string_view, 8> kProducts = {"shoes",   "coffee",    "software", "tours",
                                                       "courses", "insurance", "pizza",    "phones"};
constexpr std::array<std::string_view, 8> kDescriptors = {"quality", "fresh",   "local",  "premium",
                                                          "simple",  "classic", "modern", "fast"};
constexpr std::array<std::string_view, 3> kOpeners = {"get", "discover", "try"};
constexpr std::array<std::string_view, 7> kConnectors = {"with", "for", "and", "your",
                                                         "you",  "our", "the"};
constexpr std::array<std::string_view, 2> kEnders = {".", "!"};
constexpr std::string_view kQuestion = "?";

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

template <std::size_t N>
bool in_table(const std::array<std::string_view, N>& table, std::string_view s) {
  return std::find(table.begin(), table.end(), s) != table.end();
}

bool contains(const std::vector<TokenId>& ids, TokenId t) {
  return std::find(ids.begin(), ids.end(), t) != ids.end();
}

TokenId pick(const std::vector<TokenId>& ids, Rng& rng) {
  return ids[static_cast<std::size_t>(rng.below(ids.size()))];
}

json seq_json(const TokenSequence& s) { return json(s.ids); }

TokenSequence seq_from(const nlohmann::json& j) {
  TokenSequence s;
  s.ids = j.get<std::vector<TokenId>>();
  return s;
}

}  // namespace

const std::array<std::string_view, kNumVerticals> kVerticalNames = {
    "Advertising and Marketing",
    "Automotive",
    "Business to Business",
    "Consumer Packaged Goods",
    "Ecommerce",
    "Entertainment and Media",
    "Healthcare, Pharmaceuticals, and Biotech",
    "Other",
    "Professional Services",
    "Publishing",
    "Restaurants",
    "Retail",
    "Technology",
    "Travel",
    "Unlisted",
};

const std::array<double, kNumVerticals> kVerticalCounts = {
    1205, 1022, 790, 2325, 3344, 4648, 1494, 2000, 5607, 1186, 863, 6394, 855, 1151, 1965,
};

const std::array<std::string_view, 3> kBudgetNames = {"1.Low", "2.Mid", "3.High"};
const std::array<std::string_view, 2> kExpertiseNames = {"1.Low", "2.High"};

// ---------------------------------------------------------------------------
// Vocabulary

Vocabulary Vocabulary::standard() {
  std::vector<std::string> tokens = {"<bos>", "<eos>"};
  auto add = [&tokens](const auto& table) {
    for (auto s : table) tokens.emplace_back(s);
  };
  add(kPersuasive);
  tokens.emplace_back(kQuestion);
  add(kCta);
  add(kProducts);
  add(kDescriptors);
  add(kOpeners);
  add(kConnectors);
  add(kEnders);
  return from_tokens(std::move(tokens));
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens) {
  if (tokens.size() < 8)
    fail(ErrorKind::Config, "vocabulary needs at least 8 tokens, got " + std::to_string(tokens.size()));
  Vocabulary v;
  int bos_count = 0;
  int eos_count = 0;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const auto id = static_cast<TokenId>(i);
    const std::string& s = tokens[i];
    if (s == "<bos>") {
      v.bos_ = id;
      ++bos_count;
    } else if (s == "<eos>") {
      v.eos_ = id;
      ++eos_count;
    } else if (in_table(kPersuasive, s)) {
      v.roles_.persuasive.push_back(id);
    } else if (in_table(kCta, s)) {
      v.roles_.cta.push_back(id);
    } else if (in_table(kProducts, s)) {
      v.roles_.products.push_back(id);
    } else if (in_table(kDescriptors, s)) {
      v.roles_.descriptors.push_back(id);
    } else if (in_table(kOpeners, s)) {
      v.roles_.openers.push_back(id);
    } else if (in_table(kConnectors, s)) {
      v.roles_.connectors.push_back(id);
    } else if (in_table(kEnders, s)) {
      v.roles_.enders.push_back(id);
    } else if (s == kQuestion) {
      v.roles_.question = id;
    }
  }
  if (bos_count != 1 || eos_count != 1)
    fail(ErrorKind::Config, "vocabulary must contain <bos> and <eos> exactly once");
  std::vector<std::string> sorted = tokens;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
    fail(ErrorKind::Config, "vocabulary contains duplicate symbols");
  v.tokens_ = std::move(tokens);
  return v;
}

const std::string& Vocabulary::symbol(TokenId id) const {
  if (id >= tokens_.size())
    fail(ErrorKind::InvalidInput, "token id " + std::to_string(id) + " out of range");
  return tokens_[id];
}

TokenId Vocabulary::id(std::string_view symbol) const {
  for (std::size_t i = 0; i < tokens_.size(); ++i)
    if (tokens_[i] == symbol) return static_cast<TokenId>(i);
  fail(ErrorKind::InvalidInput, "unknown token '" + std::string(symbol) + "'");
}

std::uint64_t Vocabulary::hash() const {
  std::uint64_t h = fnv1a("rlpf.vocab");
  for (const auto& t : tokens_) {
    h = fnv1a(t, h);
    h = fnv1a(std::string_view("\0", 1), h);
  }
  return h;
}

std::string render(const Vocabulary& vocab, const TokenSequence& seq) {
  std::string out;
  for (std::size_t i = 0; i < seq.ids.size(); ++i) {
    if (i) out += ' ';
    out += vocab.symbol(seq.ids[i]);
  }
  return out;
}

TokenSequence parse_text(const Vocabulary& vocab, std::string_view text) {
  TokenSequence seq;
  while (!text.empty()) {
    const auto start = text.find_first_not_of(' ');
    if (start == std::string_view::npos) break;
    text.remove_prefix(start);
    const auto end = text.find(' ');
    seq.ids.push_back(vocab.id(text.substr(0, end)));
    if (end == std::string_view::npos) break;
    text.remove_prefix(end);
  }
  return seq;
}

// ---------------------------------------------------------------------------
// Ground truth

std::vector<double> true_features(const TrueCtrModel& model, const TokenSequence& prompt,
                                  const TokenSequence& variant, const Advertiser& advertiser) {
  const auto& L = model.layout;
  std::vector<double> f(L.dimension(), 0.0);
  for (std::size_t k = 0; k < L.persuasive.size(); ++k)
    if (contains(variant.ids, L.persuasive[k])) f[k] = 1.0;
  const bool question = contains(variant.ids, L.question);
  if (question) f[L.question_index()] = 1.0;
  for (TokenId t : L.cta)
    if (contains(variant.ids, t)) f[L.cta_index()] = 1.0;
  if (variant.length() <= L.short_max) f[L.short_index()] = 1.0;
  if (variant.length() >= L.long_min) f[L.long_index()] = 1.0;
  for (TokenId t : variant.ids) {
    if (!contains(L.products, t)) continue;
    if (contains(prompt.ids, t))
      f[L.on_topic_index()] = 1.0;
    else
      f[L.off_topic_index()] = 1.0;
  }
  const int v = std::clamp(advertiser.vertical, 0, static_cast<int>(kNumVerticals) - 1);
  f[L.vertical_index(v)] = 1.0;
  if (question) f[L.question_vertical_index(v)] = 1.0;
  return f;
}

double true_logit(const TrueCtrModel& model, const TokenSequence& prompt,
                  const TokenSequence& variant, const Advertiser& advertiser, double ad_effect) {
  const auto f = true_features(model, prompt, variant, advertiser);
  double z = model.bias + advertiser.ctr_offset + ad_effect;
  for (std::size_t i = 0; i < f.size(); ++i) z += model.weights[i] * f[i];
  return z;
}

double true_ctr(const TrueCtrModel& model, const TokenSequence& prompt,
                const TokenSequence& variant, const Advertiser& advertiser, double ad_effect) {
  return sigmoid(true_logit(model, prompt, variant, advertiser, ad_effect));
}

// ---------------------------------------------------------------------------
// Market generation

MarketConfig MarketConfig::from(const Config& cfg) {
  MarketConfig c;
  c.n_advertisers = cfg.get_int("market.advertisers", c.n_advertisers);
  c.base_ctr = cfg.get_double("market.base_ctr", c.base_ctr);
  c.persuasive_weight = cfg.get_double("market.persuasive_weight", c.persuasive_weight);
  c.question_weight = cfg.get_double("market.question_weight", c.question_weight);
  c.cta_weight = cfg.get_double("market.cta_weight", c.cta_weight);
  c.short_weight = cfg.get_double("market.short_weight", c.short_weight);
  c.long_weight = cfg.get_double("market.long_weight", c.long_weight);
  c.on_topic_weight = cfg.get_double("market.on_topic_weight", c.on_topic_weight);
  c.off_topic_weight = cfg.get_double("market.off_topic_weight", c.off_topic_weight);
  c.vertical_sd = cfg.get_double("market.vertical_sd", c.vertical_sd);
  c.question_vertical_sd = cfg.get_double("market.question_vertical_sd", c.question_vertical_sd);
  c.advertiser_sd = cfg.get_double("market.advertiser_sd", c.advertiser_sd);
  c.ad_noise_sd = cfg.get_double("market.ad_noise_sd", c.ad_noise_sd);
  c.activity_mean = cfg.get_double("market.activity_mean", c.activity_mean);
  c.activity_shape = cfg.get_double("market.activity_shape", c.activity_shape);
  c.dormant_share = cfg.get_double("market.dormant_share", c.dormant_share);
  c.short_max = cfg.get_int("market.short_max", c.short_max);
  c.long_min = cfg.get_int("market.long_min", c.long_min);
  return c;
}

namespace {

void check_config(const MarketConfig& c) {
  const double values[] = {c.base_ctr,     c.persuasive_weight, c.question_weight,
                           c.cta_weight,   c.short_weight,      c.long_weight,
                           c.on_topic_weight, c.off_topic_weight, c.vertical_sd,
                           c.question_vertical_sd, c.advertiser_sd, c.ad_noise_sd,
                           c.activity_mean, c.activity_shape, c.dormant_share};
  for (double v : values)
    if (!std::isfinite(v)) fail(ErrorKind::Config, "market config contains a non-finite value");
  if (c.n_advertisers < 0) fail(ErrorKind::Config, "market.advertisers must be >= 0");
  if (!(c.base_ctr > 0.0 && c.base_ctr < 1.0))
    fail(ErrorKind::Config, "market.base_ctr must lie in (0, 1)");
  if (c.vertical_sd < 0 || c.question_vertical_sd < 0 || c.advertiser_sd < 0 || c.ad_noise_sd < 0)
    fail(ErrorKind::Config, "market standard deviations must be >= 0");
  if (!(c.activity_mean > 0.0) || !(c.activity_shape > 0.0))
    fail(ErrorKind::Config, "market activity parameters must be > 0");
  if (c.dormant_share < 0.0 || c.dormant_share > 1.0)
    fail(ErrorKind::Config, "market.dormant_share must lie in [0, 1]");
  if (c.short_max < 0 || c.long_min <= c.short_max)
    fail(ErrorKind::Config, "market.short_max must be below market.long_min");
}

// Persuasive tokens are not equally effective.
constexpr std::array<double, 6> kPersuasiveProfile = {1.4, 1.2, 1.0, 0.9, 0.8, 0.7};

}  // namespace

MarketState generate_market(const MarketConfig& config, std::uint64_t seed) {
  return generate_market(config, Vocabulary::standard(), seed);
}

MarketState generate_market(const MarketConfig& config, const Vocabulary& vocab,
                            std::uint64_t seed) {
  check_config(config);
  MarketState m;
  m.config = config;
  m.vocab = vocab;

  auto& layout = m.true_model.layout;
  const auto& roles = vocab.roles();
  layout.persuasive = roles.persuasive;
  layout.cta = roles.cta;
  layout.products = roles.products;
  layout.question = roles.question;
  layout.short_max = static_cast<std::size_t>(config.short_max);
  layout.long_min = static_cast<std::size_t>(config.long_min);

  auto& model = m.true_model;
  model.bias = std::log(config.base_ctr / (1.0 - config.base_ctr));
  model.noise_scale = config.ad_noise_sd;
  model.weights.assign(layout.dimension(), 0.0);
  for (std::size_t k = 0; k < layout.persuasive.size(); ++k)
    model.weights[k] =
        config.persuasive_weight * kPersuasiveProfile[k % kPersuasiveProfile.size()];
  model.weights[layout.question_index()] = config.question_weight;
  model.weights[layout.cta_index()] = config.cta_weight;
  model.weights[layout.short_index()] = config.short_weight;
  model.weights[layout.long_index()] = config.long_weight;
  model.weights[layout.on_topic_index()] = config.on_topic_weight;
  model.weights[layout.off_topic_index()] = config.off_topic_weight;
  Rng wrng(derive_seed(seed, "market.weights"));
  for (std::size_t v = 0; v < kNumVerticals; ++v)
    model.weights[layout.vertical_index(static_cast<int>(v))] = config.vertical_sd * wrng.normal();
  for (std::size_t v = 0; v < kNumVerticals; ++v)
    model.weights[layout.question_vertical_index(static_cast<int>(v))] =
        config.question_vertical_sd * wrng.normal();

  // Marginals follow the field-test advertiser table; the joint is independent.
  constexpr std::array<double, 3> budget_counts = {16344, 3678, 14827};
  constexpr double expertise_high_share = 5591.0 / 34849.0;
  constexpr double business_share = 26581.0 / 34849.0;
  constexpr double age_shape = 0.87;
  constexpr double age_scale = 3.257 / age_shape;

  m.advertisers.reserve(static_cast<std::size_t>(config.n_advertisers));
  for (std::int64_t i = 0; i < config.n_advertisers; ++i) {
    Rng rng(derive_seed(derive_seed(seed, "market.advertiser"), static_cast<std::uint64_t>(i)));
    Advertiser a;
    a.id = static_cast<std::uint32_t>(i);
    a.vertical = static_cast<int>(rng.categorical(kVerticalCounts));
    a.budget_cat = static_cast<int>(rng.categorical(budget_counts));
    a.expertise_cat = rng.bernoulli(expertise_high_share) ? 1 : 0;
    a.account_age_yr = rng.gamma(age_shape) * age_scale;
    a.is_business_account = rng.bernoulli(business_share);
    a.activity_rate = rng.gamma(config.activity_shape) * config.activity_mean / config.activity_shape;
    if (!(a.activity_rate > 1e-6)) a.activity_rate = 1e-6;
    a.ctr_offset = config.advertiser_sd * rng.normal();
    a.dormant = rng.bernoulli(config.dormant_share);
    m.advertisers.push_back(a);
  }
  return m;
}

std::string market_to_json(const MarketState& m, const FileHeader& header) {
  json j;
  j["vocabulary"] = m.vocab.tokens();
  const auto& c = m.config;
  j["config"] = {{"advertisers", c.n_advertisers},
                 {"base_ctr", c.base_ctr},
                 {"persuasive_weight", c.persuasive_weight},
                 {"question_weight", c.question_weight},
                 {"cta_weight", c.cta_weight},
                 {"short_weight", c.short_weight},
                 {"long_weight", c.long_weight},
                 {"on_topic_weight", c.on_topic_weight},
                 {"off_topic_weight", c.off_topic_weight},
                 {"vertical_sd", c.vertical_sd},
                 {"question_vertical_sd", c.question_vertical_sd},
                 {"advertiser_sd", c.advertiser_sd},
                 {"ad_noise_sd", c.ad_noise_sd},
                 {"activity_mean", c.activity_mean},
                 {"activity_shape", c.activity_shape},
                 {"dormant_share", c.dormant_share},
                 {"short_max", c.short_max},
                 {"long_min", c.long_min}};
  j["true_model"] = {{"bias", m.true_model.bias},
                     {"noise_scale", m.true_model.noise_scale},
                     {"weights", m.true_model.weights}};
  json ads = json::array();
  for (const auto& a : m.advertisers) {
    ads.push_back({{"id", a.id},
                   {"vertical", a.vertical},
                   {"budget_cat", a.budget_cat},
                   {"expertise_cat", a.expertise_cat},
                   {"account_age_yr", a.account_age_yr},
                   {"is_business_account", a.is_business_account},
                   {"activity_rate", a.activity_rate},
                   {"ctr_offset", a.ctr_offset},
                   {"dormant", a.dormant}});
  }
  j["advertisers"] = std::move(ads);
  return header_json(header) + j.dump() + "\n";
}

MarketState market_from_json(std::string_view text) {
  const auto lines = split_lines(text);
  if (lines.size() < 2) fail(ErrorKind::Io, "market file: expected header and body lines");
  const auto j = nlohmann::json::parse(lines[1], nullptr, false);
  if (j.is_discarded()) fail(ErrorKind::Io, "market file: malformed JSON body");
  try {
    MarketConfig c;
    const auto& jc = j.at("config");
    c.n_advertisers = jc.at("advertisers").get<std::int64_t>();
    c.base_ctr = jc.at("base_ctr");
    c.persuasive_weight = jc.at("persuasive_weight");
    c.question_weight = jc.at("question_weight");
    c.cta_weight = jc.at("cta_weight");
    c.short_weight = jc.at("short_weight");
    c.long_weight = jc.at("long_weight");
    c.on_topic_weight = jc.at("on_topic_weight");
    c.off_topic_weight = jc.at("off_topic_weight");
    c.vertical_sd = jc.at("vertical_sd");
    c.question_vertical_sd = jc.at("question_vertical_sd");
    c.advertiser_sd = jc.at("advertiser_sd");
    c.ad_noise_sd = jc.at("ad_noise_sd");
    c.activity_mean = jc.at("activity_mean");
    c.activity_shape = jc.at("activity_shape");
    c.dormant_share = jc.at("dormant_share");
    c.short_max = jc.at("short_max").get<std::int64_t>();
    c.long_min = jc.at("long_min").get<std::int64_t>();

    MarketState m;
    m.config = c;
    m.vocab = Vocabulary::from_tokens(j.at("vocabulary").get<std::vector<std::string>>());
    auto& layout = m.true_model.layout;
    layout.persuasive = m.vocab.roles().persuasive;
    layout.cta = m.vocab.roles().cta;
    layout.products = m.vocab.roles().products;
    layout.question = m.vocab.roles().question;
    layout.short_max = static_cast<std::size_t>(c.short_max);
    layout.long_min = static_cast<std::size_t>(c.long_min);
    m.true_model.bias = j.at("true_model").at("bias");
    m.true_model.noise_scale = j.at("true_model").at("noise_scale");
    m.true_model.weights = j.at("true_model").at("weights").get<std::vector<double>>();
    if (m.true_model.weights.size() != layout.dimension())
      fail(ErrorKind::Io, "market file: weight vector has wrong dimension");
    for (const auto& ja : j.at("advertisers")) {
      Advertiser a;
      a.id = ja.at("id");
      a.vertical = ja.at("vertical");
      a.budget_cat = ja.at("budget_cat");
      a.expertise_cat = ja.at("expertise_cat");
      a.account_age_yr = ja.at("account_age_yr");
      a.is_business_account = ja.at("is_business_account");
      a.activity_rate = ja.at("activity_rate");
      a.ctr_offset = ja.at("ctr_offset");
      a.dormant = ja.at("dormant");
      m.advertisers.push_back(a);
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Io, std::string("market file: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Human-written text

TokenSequence write_prompt(const Vocabulary& vocab, Rng& rng) {
  const auto& r = vocab.roles();
  TokenSequence s;
  const TokenId product = pick(r.products, rng);
  const std::size_t target = 8 + static_cast<std::size_t>(rng.below(13));
  s.ids.push_back(pick(r.openers, rng));
  if (rng.bernoulli(0.5)) s.ids.push_back(pick(r.descriptors, rng));
  s.ids.push_back(product);
  while (s.ids.size() + 1 < target) {
    const double u = rng.uniform();
    if (u < 0.35) {
      s.ids.push_back(pick(r.connectors, rng));
      s.ids.push_back(pick(r.descriptors, rng));
    } else if (u < 0.55) {
      s.ids.push_back(pick(r.connectors, rng));
      s.ids.push_back(pick(r.connectors, rng));
    } else if (u < 0.68) {
      s.ids.push_back(pick(r.connectors, rng));
      s.ids.push_back(product);
    } else if (u < 0.80) {
      s.ids.push_back(pick(r.persuasive, rng));
    } else {
      s.ids.push_back(pick(r.descriptors, rng));
    }
  }
  if (rng.bernoulli(0.08))
    s.ids.push_back(r.question);
  else
    s.ids.push_back(pick(r.enders, rng));
  if (rng.bernoulli(0.15)) s.ids.push_back(pick(r.cta, rng));
  return s;
}

namespace {

bool is_cta(const TokenRoles& r, TokenId t) { return contains(r.cta, t); }

void apply_edit(const TokenRoles& r, std::vector<TokenId>& ids, Rng& rng) {
  static constexpr std::array<double, 8> kEditWeights = {0.22, 0.10, 0.15, 0.10,
                                                         0.15, 0.12, 0.12, 0.04};
  const std::size_t edit = rng.categorical(kEditWeights);
  const auto pos = [&](std::size_t n) { return static_cast<std::size_t>(rng.below(n)); };
  switch (edit) {
    case 0:  // add a persuasive word
      ids.insert(ids.begin() + static_cast<std::ptrdiff_t>(pos(ids.size() + 1)), pick(r.persuasive, rng));
      break;
    case 1: {  // drop a persuasive word
      std::vector<std::size_t> at;
      for (std::size_t i = 0; i < ids.size(); ++i)
        if (contains(r.persuasive, ids[i])) at.push_back(i);
      if (at.empty()) {
        ids.insert(ids.begin() + static_cast<std::ptrdiff_t>(pos(ids.size() + 1)), pick(r.descriptors, rng));
      } else {
        ids.erase(ids.begin() + static_cast<std::ptrdiff_t>(at[pos(at.size())]));
      }
      break;
    }
    case 2:  // toggle a call to action
      if (!ids.empty() && is_cta(r, ids.back()))
        ids.pop_back();
      else
        ids.push_back(pick(r.cta, rng));
      break;
    case 3: {  // toggle a question
      auto q = std::find(ids.begin(), ids.end(), r.question);
      if (q != ids.end()) {
        *q = pick(r.enders, rng);
      } else {
        auto e = std::find_if(ids.begin(), ids.end(), [&](TokenId t) { return contains(r.enders, t); });
        if (e != ids.end())
          *e = r.question;
        else
          ids.push_back(r.question);
      }
      break;
    }
    case 4: {  // extend with one or two clauses
      const int clauses = rng.bernoulli(0.5) ? 1 : 2;
      for (int c = 0; c < clauses; ++c) {
        const std::size_t at = ids.empty() ? 0 : 1 + pos(ids.size());
        const TokenId a = pick(r.connectors, rng);
        const TokenId b = pick(r.descriptors, rng);
        ids.insert(ids.begin() + static_cast<std::ptrdiff_t>(at), {a, b});
      }
      break;
    }
    case 5: {  // shorten by two non-product words
      for (int k = 0; k < 2 && ids.size() > 6; ++k) {
        std::vector<std::size_t> at;
        for (std::size_t i = 1; i < ids.size(); ++i)
          if (!contains(r.products, ids[i]) && !contains(r.enders, ids[i]) && ids[i] != r.question)
            at.push_back(i);
        if (at.empty()) break;
        ids.erase(ids.begin() + static_cast<std::ptrdiff_t>(at[pos(at.size())]));
      }
      break;
    }
    case 6: {  // swap a descriptor
      for (auto& t : ids)
        if (contains(r.descriptors, t) && rng.bernoulli(0.5)) {
          t = pick(r.descriptors, rng);
          break;
        }
      break;
    }
    default: {  // drift to a different product
      for (auto& t : ids)
        if (contains(r.products, t)) {
          t = pick(r.products, rng);
          break;
        }
      break;
    }
  }
}

}  // namespace

TokenSequence write_variant(const Vocabulary& vocab, const TokenSequence& prompt, Rng& rng) {
  const auto& r = vocab.roles();
  TokenSequence v = prompt;
  const int edits = 1 + static_cast<int>(rng.below(3));
  for (int attempt = 0; attempt < 8; ++attempt) {
    for (int e = 0; e < edits; ++e) apply_edit(r, v.ids, rng);
    if (v != prompt) break;
  }
  return v;
}

// ---------------------------------------------------------------------------
// Delivery

DeliveryPolicy DeliveryPolicy::from(const Config& cfg, std::string_view prefix) {
  DeliveryPolicy p;
  const std::string pre(prefix);
  const auto kind = cfg.get_string(pre + ".delivery", "softmax");
  if (kind == "uniform")
    p.kind = Kind::Uniform;
  else if (kind == "softmax")
    p.kind = Kind::Softmax;
  else
    fail(ErrorKind::Config, pre + ".delivery must be 'uniform' or 'softmax'");
  p.temperature = cfg.get_double(pre + ".delivery_temperature", p.temperature);
  p.rounds = cfg.get_int(pre + ".delivery_rounds", p.rounds);
  if (!(p.temperature > 0.0)) fail(ErrorKind::Config, pre + ".delivery_temperature must be > 0");
  if (p.rounds < 1) fail(ErrorKind::Config, pre + ".delivery_rounds must be >= 1");
  return p;
}

namespace {

// Largest-remainder apportionment; ties go to the lower index.
std::vector<std::uint64_t> apportion(std::span<const double> weights, std::uint64_t total) {
  const std::size_t k = weights.size();
  std::vector<std::uint64_t> out(k, 0);
  double sum = 0.0;
  for (double w : weights) sum += w;
  std::vector<double> rem(k);
  std::uint64_t used = 0;
  for (std::size_t i = 0; i < k; ++i) {
    const double exact = static_cast<double>(total) * weights[i] / sum;
    out[i] = static_cast<std::uint64_t>(std::floor(exact));
    rem[i] = exact - static_cast<double>(out[i]);
    used += out[i];
  }
  // Guard against floor() overshooting by one ulp on huge totals.
  while (used > total) {
    for (std::size_t i = 0; i < k && used > total; ++i)
      if (out[i] > 0) { --out[i]; --used; }
  }
  std::vector<std::size_t> order(k);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return rem[a] > rem[b]; });
  for (std::size_t i = 0; used < total; i = (i + 1) % k, ++used) ++out[order[i]];
  return out;
}

}  // namespace

std::vector<VariantDelivery> simulate_delivery(std::span<const double> true_ctrs,
                                               std::uint64_t total_impressions,
                                               const DeliveryPolicy& policy, std::uint64_t seed) {
  if (true_ctrs.empty()) fail(ErrorKind::InvalidInput, "simulate_delivery: no variants");
  const std::size_t k = true_ctrs.size();
  std::vector<VariantDelivery> out(k);
  Rng rng(seed);
  const auto rounds = static_cast<std::uint64_t>(std::max<std::int64_t>(1, policy.rounds));
  std::vector<double> weights(k, 1.0);
  for (std::uint64_t round = 0; round < rounds; ++round) {
    const std::uint64_t chunk = total_impressions / rounds + (round < total_impressions % rounds ? 1 : 0);
    if (chunk == 0) continue;
    if (policy.kind == DeliveryPolicy::Kind::Softmax && round > 0) {
      double best = -1e300;
      for (std::size_t v = 0; v < k; ++v) {
        const double observed = (static_cast<double>(out[v].clicks) + 0.5) /
                                (static_cast<double>(out[v].impressions) + 1.0);
        weights[v] = observed / policy.temperature;
        best = std::max(best, weights[v]);
      }
      for (auto& w : weights) w = std::exp(w - best);
    }
    const auto alloc = apportion(weights, chunk);
    for (std::size_t v = 0; v < k; ++v) {
      out[v].impressions += alloc[v];
      out[v].clicks += rng.binomial(alloc[v], true_ctrs[v]);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Multitext era

EraConfig EraConfig::from(const Config& cfg) {
  EraConfig e;
  e.ads_per_advertiser = cfg.get_double("era.ads_per_advertiser", e.ads_per_advertiser);
  e.min_variants = cfg.get_int("era.min_variants", e.min_variants);
  e.max_variants = cfg.get_int("era.max_variants", e.max_variants);
  e.impressions_median = cfg.get_double("era.impressions_median", e.impressions_median);
  e.impressions_sigma = cfg.get_double("era.impressions_sigma", e.impressions_sigma);
  e.delivery = DeliveryPolicy::from(cfg, "era");
  if (e.ads_per_advertiser < 0) fail(ErrorKind::Config, "era.ads_per_advertiser must be >= 0");
  if (e.min_variants < 1 || e.max_variants < e.min_variants)
    fail(ErrorKind::Config, "era variant bounds must satisfy 1 <= min <= max");
  if (!(e.impressions_median > 0) || e.impressions_sigma < 0)
    fail(ErrorKind::Config, "era impression distribution is invalid");
  return e;
}

MultitextLog run_multitext_era(const MarketState& market, const EraConfig& era, std::uint64_t seed) {
  MultitextLog log;
  std::uint32_t next_ad = 0;
  const double log_median = std::log(era.impressions_median);
  const auto span_variants = static_cast<std::uint64_t>(era.max_variants - era.min_variants + 1);
  for (const auto& adv : market.advertisers) {
    Rng rng(derive_seed(seed, adv.id));
    const auto n_ads = rng.poisson(era.ads_per_advertiser);
    for (std::uint64_t a = 0; a < n_ads; ++a) {
      const std::uint32_t ad_id = next_ad++;
      const TokenSequence prompt = write_prompt(market.vocab, rng);
      const auto k = static_cast<std::size_t>(era.min_variants) + static_cast<std::size_t>(rng.below(span_variants));
      std::vector<TokenSequence> variants;
      std::vector<double> ctrs;
      const double ad_effect = market.true_model.noise_scale * rng.normal();
      for (std::size_t v = 0; v < k; ++v) {
        variants.push_back(write_variant(market.vocab, prompt, rng));
        ctrs.push_back(true_ctr(market.true_model, prompt, variants.back(), adv, ad_effect));
      }
      const auto total = static_cast<std::uint64_t>(std::llround(rng.lognormal(log_median, era.impressions_sigma)));
      const auto delivered = simulate_delivery(ctrs, total, era.delivery, rng.next());
      for (std::size_t v = 0; v < k; ++v) {
        MultitextRecord rec;
        rec.advertiser_id = adv.id;
        rec.ad_id = ad_id;
        rec.variant_index = static_cast<std::uint32_t>(v);
        rec.prompt = prompt;
        rec.variant = std::move(variants[v]);
        rec.impressions = delivered[v].impressions;
        rec.clicks = delivered[v].clicks;
        log.records.push_back(std::move(rec));
      }
    }
  }
  return log;
}

void validate(const MultitextLog& log) {
  for (std::size_t i = 0; i < log.records.size(); ++i) {
    const auto& r = log.records[i];
    if (r.clicks > r.impressions)
      fail(ErrorKind::InvalidInput, "multitext record " + std::to_string(i) + ": clicks exceed impressions");
    if (i > 0 && log.records[i - 1].ad_id == r.ad_id) {
      const auto& p = log.records[i - 1];
      if (p.prompt != r.prompt || p.advertiser_id != r.advertiser_id)
        fail(ErrorKind::InvalidInput, "multitext ad " + std::to_string(r.ad_id) +
                                          ": variants disagree on prompt or advertiser");
    }
  }
}

std::string multitext_to_jsonl(const MultitextLog& log, const FileHeader& header) {
  std::string out = header_json(header);
  for (const auto& r : log.records) {
    json j;
    j["advertiser_id"] = r.advertiser_id;
    j["ad_id"] = r.ad_id;
    j["variant_index"] = r.variant_index;
    j["prompt"] = seq_json(r.prompt);
    j["variant"] = seq_json(r.variant);
    j["impressions"] = r.impressions;
    j["clicks"] = r.clicks;
    out += j.dump();
    out += '\n';
  }
  return out;
}

MultitextLog multitext_from_jsonl(std::string_view text) {
  const auto lines = split_lines(text);
  MultitextLog log;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto j = nlohmann::json::parse(lines[i], nullptr, false);
    if (j.is_discarded()) fail(ErrorKind::Io, "multitext log line " + std::to_string(i + 1) + ": malformed");
    try {
      MultitextRecord r;
      r.advertiser_id = j.at("advertiser_id");
      r.ad_id = j.at("ad_id");
      r.variant_index = j.at("variant_index");
      r.prompt = seq_from(j.at("prompt"));
      r.variant = seq_from(j.at("variant"));
      r.impressions = j.at("impressions");
      r.clicks = j.at("clicks");
      log.records.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::Io, "multitext log line " + std::to_string(i + 1) + ": " + e.what());
    }
  }
  validate(log);
  return log;
}

}  // namespace rlpf
