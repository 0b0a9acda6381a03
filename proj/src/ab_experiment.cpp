// Copyright 2026 The RLPF Desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "rlpf/ab_experiment.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>

#include "rlpf/error.hpp"

namespace rlpf {
namespace {

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

std::uint64_t ad_impressions(const ExperimentConfig& cfg, const Advertiser& adv, Rng& rng) {
  const auto b = static_cast<std::size_t>(std::clamp(adv.budget_cat, 0, 2));
  return static_cast<std::uint64_t>(
      std::llround(rng.lognormal(std::log(cfg.impressions_median[b]), cfg.impressions_sigma)));
}

void check_vocab(const MarketState& market, const PolicyModel& m, const char* which) {
  if (m.vocab_size() != market.vocab.size() || m.eos() != market.vocab.eos() ||
      (m.vocab_hash() != 0 && m.vocab_hash() != market.vocab.hash()))
    fail(ErrorKind::Config, std::string(which) + " model does not share the market vocabulary");
}

int level_index(std::string_view value, std::span<const std::string_view> names, const char* what) {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == value) return static_cast<int>(i);
  fail(ErrorKind::Io, std::string("unknown ") + what + " level '" + std::string(value) + "'");
}

template <class T>
T parse_number(const std::string& s, const char* what) {
  T v{};
  if constexpr (std::is_floating_point_v<T>) {
    try {
      std::size_t used = 0;
      v = static_cast<T>(std::stod(s, &used));
      if (used != s.size()) throw std::invalid_argument(s);
    } catch (const std::exception&) {
      fail(ErrorKind::Io, std::string("bad ") + what + " value '" + s + "'");
    }
  } else {
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size())
      fail(ErrorKind::Io, std::string("bad ") + what + " value '" + s + "'");
  }
  return v;
}

std::vector<std::vector<std::string>> csv_body(std::string_view text, std::span<const std::string_view> columns,
                                               const char* what) {
  std::vector<std::vector<std::string>> rows;
  bool header_seen = false;
  for (auto line : split_lines(text)) {
    if (line.empty() || line.front() == '#') continue;
    auto fields = csv_split(line);
    if (!header_seen) {
      if (fields.size() != columns.size() || !std::equal(columns.begin(), columns.end(), fields.begin()))
        fail(ErrorKind::Io, std::string(what) + ": unexpected column header");
      header_seen = true;
      continue;
    }
    if (fields.size() != columns.size())
      fail(ErrorKind::Io, std::string(what) + ": row has " + std::to_string(fields.size()) + " fields");
    rows.push_back(std::move(fields));
  }
  if (!header_seen) fail(ErrorKind::Io, std::string(what) + ": missing column header");
  return rows;
}

constexpr std::array<std::string_view, 7> kOutcomeColumns = {
    "advertiser_id", "arm", "treatment", "engagement", "impressions", "ad_cnt", "variant_cnt"};

constexpr std::array<std::string_view, 14> kCovariateColumns = {
    "advertiser_id",       "pre_exp_ctr",         "pre_exp_engagement", "pre_exp_impressions",
    "pre_exp_ad_cnt",      "account_age_yr",      "nov_feb_ad_cnt",     "nov_feb_variant_cnt",
    "is_business_account", "has_created_llm_ad",  "is_new_advertiser",  "budget_cat",
    "expertise_cat",       "vertical"};

template <std::size_t N>
std::string join_header(const std::array<std::string_view, N>& cols) {
  std::string out;
  for (std::size_t i = 0; i < N; ++i) {
    if (i) out += ',';
    out += cols[i];
  }
  return out + "\n";
}

}  // namespace

std::string_view arm_name(Arm a) { return a == Arm::Treatment ? "treatment" : "control"; }

ExperimentConfig ExperimentConfig::from(const Config& cfg) {
  ExperimentConfig c;
  c.weeks = cfg.get_int("ab.weeks", c.weeks);
  c.p = cfg.get_double("ab.p", c.p);
  auto& s = c.selection;
  s.intercept = cfg.get_double("ab.selection_intercept", s.intercept);
  s.slope = cfg.get_double("ab.selection_slope", s.slope);
  s.quality_noise = cfg.get_double("ab.quality_noise", s.quality_noise);
  s.candidates = cfg.get_int("ab.candidates", s.candidates);
  s.max_selected = cfg.get_int("ab.max_selected", s.max_selected);
  s.temperature = cfg.get_double("ab.temperature", s.temperature);
  c.impressions_median[0] = cfg.get_double("ab.impressions_low", c.impressions_median[0]);
  c.impressions_median[1] = cfg.get_double("ab.impressions_mid", c.impressions_median[1]);
  c.impressions_median[2] = cfg.get_double("ab.impressions_high", c.impressions_median[2]);
  c.impressions_sigma = cfg.get_double("ab.impressions_sigma", c.impressions_sigma);
  c.pre_weeks = cfg.get_int("ab.pre_weeks", c.pre_weeks);
  c.nov_feb_weeks = cfg.get_int("ab.nov_feb_weeks", c.nov_feb_weeks);
  c.llm_share = cfg.get_double("ab.llm_share", c.llm_share);
  c.delivery = DeliveryPolicy::from(cfg, "ab");

  if (c.weeks < 0 || c.pre_weeks < 0 || c.nov_feb_weeks < 0 || c.nov_feb_weeks > c.pre_weeks)
    fail(ErrorKind::Config, "ab week counts must be >= 0 with nov_feb_weeks <= pre_weeks");
  if (!(c.p > 0.0 && c.p < 1.0)) fail(ErrorKind::Config, "ab.p must lie in (0, 1)");
  if (s.max_selected < 1 || s.candidates < 0) fail(ErrorKind::Config, "ab.max_selected must be >= 1");
  if (!(s.temperature >= 0.0) || !(s.quality_noise >= 0.0) || !std::isfinite(s.slope))
    fail(ErrorKind::Config, "ab selection parameters out of range");
  for (double m : c.impressions_median)
    if (!(m > 0.0)) fail(ErrorKind::Config, "ab impression medians must be > 0");
  if (!(c.impressions_sigma >= 0.0) || !(c.llm_share >= 0.0 && c.llm_share <= 1.0))
    fail(ErrorKind::Config, "ab impression spread or llm share out of range");
  return c;
}

std::vector<Arm> assign_arms(std::span<const Advertiser> advertisers, double p, std::uint64_t seed) {
  if (!(p >= 0.0 && p <= 1.0)) fail(ErrorKind::Config, "assignment probability must lie in [0, 1]");
  std::vector<Arm> arms;
  arms.reserve(advertisers.size());
  for (const auto& a : advertisers) {
    Rng rng(derive_seed(seed, a.id));
    arms.push_back(rng.uniform() < p ? Arm::Treatment : Arm::Control);
  }
  return arms;
}

PreHistory simulate_pre_history(const MarketState& market, const Advertiser& adv,
                                const ExperimentConfig& cfg, std::uint64_t seed) {
  PreHistory h;
  if (adv.dormant) return h;
  Rng rng(seed);
  const std::int64_t launch = cfg.pre_weeks - cfg.nov_feb_weeks;
  for (std::int64_t week = 0; week < cfg.pre_weeks; ++week) {
    const auto n = rng.poisson(adv.activity_rate);
    for (std::uint64_t a = 0; a < n; ++a) {
      PastAd ad;
      ad.week = week;
      ad.llm = week >= launch && rng.bernoulli(cfg.llm_share);
      const TokenSequence prompt = write_prompt(market.vocab, rng);
      const double effect = market.true_model.noise_scale * rng.normal();
      std::vector<double> ctrs = {true_ctr(market.true_model, prompt, prompt, adv, effect)};
      const auto extra = rng.below(3) + (ad.llm ? 2 : 0);
      for (std::uint64_t v = 0; v < extra; ++v) {
        const auto variant = write_variant(market.vocab, prompt, rng);
        ctrs.push_back(true_ctr(market.true_model, prompt, variant, adv, effect));
      }
      ad.variants = ctrs.size();
      ad.impressions = ad_impressions(cfg, adv, rng);
      for (const auto& d : simulate_delivery(ctrs, ad.impressions, cfg.delivery, rng.next()))
        ad.clicks += d.clicks;
      h.ads.push_back(ad);
    }
  }
  return h;
}

CovariateRecord collect_covariates(const PreHistory& history, const Advertiser& adv,
                                   const ExperimentConfig& cfg) {
  CovariateRecord c;
  c.advertiser_id = adv.id;
  std::uint64_t clicks = 0;
  std::uint64_t imps = 0;
  const std::int64_t launch = cfg.pre_weeks - cfg.nov_feb_weeks;
  for (const auto& ad : history.ads) {
    clicks += ad.clicks;
    imps += ad.impressions;
    if (ad.week >= launch) {
      c.nov_feb_ad_cnt += 1.0;
      c.nov_feb_variant_cnt += static_cast<double>(ad.variants);
      if (ad.llm) c.has_created_llm_ad = 1;
    }
  }
  c.pre_exp_engagement = static_cast<double>(clicks) / 1e6;
  c.pre_exp_impressions = static_cast<double>(imps) / 1e6;
  c.pre_exp_ad_cnt = static_cast<double>(history.ads.size()) / 1e3;
  c.is_new_advertiser = imps < 1000 ? 1 : 0;
  if (!c.is_new_advertiser) c.pre_exp_ctr = static_cast<double>(clicks) / static_cast<double>(imps);
  c.account_age_yr = adv.account_age_yr;
  c.is_business_account = adv.is_business_account ? 1 : 0;
  c.budget_cat = adv.budget_cat;
  c.expertise_cat = adv.expertise_cat;
  c.vertical = adv.vertical;
  return c;
}

std::vector<AdRun> advertiser_session(const MarketState& market, const Advertiser& adv,
                                      const PolicyModel& model, const ExperimentConfig& cfg,
                                      std::int64_t week, std::uint64_t n_ads, std::uint64_t seed,
                                      const QualityFn& quality) {
  const auto& sel = cfg.selection;
  std::vector<AdRun> out;
  out.reserve(n_ads);
  for (std::uint64_t a = 0; a < n_ads; ++a) {
    // Separate streams per purpose keep the original text, ad effect and
    // volume identical whichever model the advertiser is given.
    const std::uint64_t ad_seed = derive_seed(seed, a);
    AdRun run;
    run.advertiser_id = adv.id;
    run.week = week;
    Rng text_rng(derive_seed(ad_seed, 1));
    run.original = write_prompt(market.vocab, text_rng);
    const double effect = market.true_model.noise_scale * Rng(derive_seed(ad_seed, 2)).normal();
    Rng volume_rng(derive_seed(ad_seed, 3));
    const auto total = ad_impressions(cfg, adv, volume_rng);

    Rng gen_rng(derive_seed(ad_seed, 4));
    run.variants.push_back(run.original);
    const double base = true_logit(market.true_model, run.original, run.original, adv, effect);
    for (std::int64_t j = 0; j < sel.candidates; ++j) {
      const auto cand = model.sample(run.original, sel.temperature, gen_rng);
      Rng accept_rng(derive_seed(derive_seed(ad_seed, 5), static_cast<std::uint64_t>(j)));
      const double q = quality ? quality(run.original, cand)
                               : true_logit(market.true_model, run.original, cand, adv, effect) - base;
      const double noisy = q + sel.quality_noise * accept_rng.normal();
      const bool accepted = accept_rng.bernoulli(sigmoid(sel.intercept + sel.slope * noisy));
      if (!accepted || cand.ids.empty()) continue;
      if (static_cast<std::int64_t>(run.variants.size()) >= sel.max_selected) continue;
      if (std::find(run.variants.begin(), run.variants.end(), cand) != run.variants.end()) continue;
      run.variants.push_back(cand);
    }
    for (const auto& v : run.variants)
      run.true_ctr.push_back(true_ctr(market.true_model, run.original, v, adv, effect));
    run.delivery = simulate_delivery(run.true_ctr, total, cfg.delivery, derive_seed(ad_seed, 6));
    out.push_back(std::move(run));
  }
  return out;
}

ExperimentResult run_experiment(const MarketState& market, const PolicyModel& control,
                                const PolicyModel& treatment, const ExperimentConfig& cfg,
                                std::uint64_t seed, const QualityFn& quality) {
  check_vocab(market, control, "control");
  check_vocab(market, treatment, "treatment");
  ExperimentResult r;
  const auto arms = assign_arms(market.advertisers, cfg.p, derive_seed(seed, "ab.assign"));
  const std::uint64_t pre_root = derive_seed(seed, "ab.pre");
  const std::uint64_t session_root = derive_seed(seed, "ab.session");
  for (std::size_t i = 0; i < market.advertisers.size(); ++i) {
    const auto& adv = market.advertisers[i];
    const auto history = simulate_pre_history(market, adv, cfg, derive_seed(pre_root, adv.id));
    r.covariates.push_back(collect_covariates(history, adv, cfg));

    AdvertiserOutcome o;
    o.advertiser_id = adv.id;
    o.arm = arms[i];
    const PolicyModel& model = arms[i] == Arm::Treatment ? treatment : control;
    const std::uint64_t adv_seed = derive_seed(session_root, adv.id);
    Rng weeks_rng(derive_seed(adv_seed, "weeks"));
    for (std::int64_t w = 0; w < cfg.weeks; ++w) {
      const auto n_ads = weeks_rng.poisson(adv.activity_rate);
      auto ads = advertiser_session(market, adv, model, cfg, w, n_ads,
                                    derive_seed(adv_seed, static_cast<std::uint64_t>(w) + 1), quality);
      for (auto& ad : ads) {
        o.ad_cnt += 1;
        o.variant_cnt += ad.variants.size();
        for (const auto& d : ad.delivery) {
          o.engagement += d.clicks;
          o.impressions += d.impressions;
        }
        r.ads.push_back(std::move(ad));
      }
    }
    r.outcomes.push_back(o);
  }
  return r;
}

std::string outcomes_csv(std::span<const AdvertiserOutcome> rows, const FileHeader& header) {
  std::string out = header_comment(header) + join_header(kOutcomeColumns);
  for (const auto& o : rows) {
    out += std::to_string(o.advertiser_id) + "," + std::string(arm_name(o.arm)) + "," +
           (o.arm == Arm::Treatment ? "1" : "0") + "," + std::to_string(o.engagement) + "," +
           std::to_string(o.impressions) + "," + std::to_string(o.ad_cnt) + "," +
           std::to_string(o.variant_cnt) + "\n";
  }
  return out;
}

std::vector<AdvertiserOutcome> outcomes_from_csv(std::string_view text) {
  std::vector<AdvertiserOutcome> out;
  for (const auto& f : csv_body(text, kOutcomeColumns, "outcomes table")) {
    AdvertiserOutcome o;
    o.advertiser_id = parse_number<std::uint32_t>(f[0], "advertiser_id");
    if (f[1] == "treatment")
      o.arm = Arm::Treatment;
    else if (f[1] == "control")
      o.arm = Arm::Control;
    else
      fail(ErrorKind::Io, "outcomes table: unknown arm '" + f[1] + "'");
    o.engagement = parse_number<std::uint64_t>(f[3], "engagement");
    o.impressions = parse_number<std::uint64_t>(f[4], "impressions");
    o.ad_cnt = parse_number<std::uint64_t>(f[5], "ad_cnt");
    o.variant_cnt = parse_number<std::uint64_t>(f[6], "variant_cnt");
    if (o.engagement > o.impressions)
      fail(ErrorKind::InvalidInput, "outcomes table: engagement exceeds impressions for advertiser " + f[0]);
    out.push_back(o);
  }
  return out;
}

std::string covariates_csv(std::span<const CovariateRecord> rows, const FileHeader& header) {
  std::string out = header_comment(header) + join_header(kCovariateColumns);
  for (const auto& c : rows) {
    out += std::to_string(c.advertiser_id) + ",";
    out += (c.pre_exp_ctr ? format_double(*c.pre_exp_ctr) : std::string()) + ",";
    out += format_double(c.pre_exp_engagement) + "," + format_double(c.pre_exp_impressions) + "," +
           format_double(c.pre_exp_ad_cnt) + "," + format_double(c.account_age_yr) + "," +
           format_double(c.nov_feb_ad_cnt) + "," + format_double(c.nov_feb_variant_cnt) + "," +
           std::to_string(c.is_business_account) + "," + std::to_string(c.has_created_llm_ad) + "," +
           std::to_string(c.is_new_advertiser) + "," + std::string(kBudgetNames[static_cast<std::size_t>(c.budget_cat)]) +
           "," + std::string(kExpertiseNames[static_cast<std::size_t>(c.expertise_cat)]) + "," +
           csv_escape(kVerticalNames[static_cast<std::size_t>(c.vertical)]) + "\n";
  }
  return out;
}

std::vector<CovariateRecord> covariates_from_csv(std::string_view text) {
  std::vector<CovariateRecord> out;
  for (const auto& f : csv_body(text, kCovariateColumns, "covariates table")) {
    CovariateRecord c;
    c.advertiser_id = parse_number<std::uint32_t>(f[0], "advertiser_id");
    if (!f[1].empty()) c.pre_exp_ctr = parse_number<double>(f[1], "pre_exp_ctr");
    c.pre_exp_engagement = parse_number<double>(f[2], "pre_exp_engagement");
    c.pre_exp_impressions = parse_number<double>(f[3], "pre_exp_impressions");
    c.pre_exp_ad_cnt = parse_number<double>(f[4], "pre_exp_ad_cnt");
    c.account_age_yr = parse_number<double>(f[5], "account_age_yr");
    c.nov_feb_ad_cnt = parse_number<double>(f[6], "nov_feb_ad_cnt");
    c.nov_feb_variant_cnt = parse_number<double>(f[7], "nov_feb_variant_cnt");
    c.is_business_account = parse_number<int>(f[8], "is_business_account");
    c.has_created_llm_ad = parse_number<int>(f[9], "has_created_llm_ad");
    c.is_new_advertiser = parse_number<int>(f[10], "is_new_advertiser");
    c.budget_cat = level_index(f[11], kBudgetNames, "budget_cat");
    c.expertise_cat = level_index(f[12], kExpertiseNames, "expertise_cat");
    c.vertical = level_index(f[13], kVerticalNames, "vertical");
    if (c.is_new_advertiser == 0 && !c.pre_exp_ctr)
      fail(ErrorKind::InvalidInput, "covariates table: existing advertiser " + f[0] + " has no pre_exp_ctr");
    out.push_back(c);
  }
  return out;
}

}  // namespace rlpf
