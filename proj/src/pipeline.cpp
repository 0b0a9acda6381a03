// Copyright 2026 The RLPF Desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "rlpf/pipeline.hpp"

#include <algorithm>
#include <cstdlib>
#include <set>
#include <unordered_map>

#include <json.hpp>

#include "rlpf/error.hpp"
#include "rlpf/rng.hpp"

#ifndef RLPF_VERSION
#define RLPF_VERSION "0.0.0"
#endif

namespace rlpf {
namespace {

using nlohmann::ordered_json;

std::array<double, 3> split_fractions(const Config& cfg) {
  return {cfg.get_double("data.split_train", 0.6), cfg.get_double("data.split_eval", 0.2),
          cfg.get_double("data.split_holdout", 0.2)};
}

template <class T>
void assign(const std::vector<T>& rows, const std::array<std::vector<std::uint32_t>, 3>& parts, Split<T>& out) {
  for (const auto& r : rows) {
    if (std::binary_search(parts[0].begin(), parts[0].end(), r.advertiser_id))
      out.train.push_back(r);
    else if (std::binary_search(parts[1].begin(), parts[1].end(), r.advertiser_id))
      out.eval_rm.push_back(r);
    else
      out.holdout.push_back(r);
  }
}

FeatureExtractor extractor(const Config& cfg, const Vocabulary& vocab, std::string_view key, std::string_view fallback) {
  return FeatureExtractor::for_vocab(vocab, parse_view(cfg.get_string(key, fallback)),
                                     static_cast<std::size_t>(cfg.get_int("rm.short_max", 9)),
                                     static_cast<std::size_t>(cfg.get_int("rm.long_min", 21)));
}

// Drops the covariate records without a matching outcome and returns the arms
// in covariate order.
std::vector<Arm> arms_for(std::span<const AdvertiserOutcome> outcomes, std::span<const CovariateRecord> covariates) {
  std::unordered_map<std::uint32_t, Arm> by_id;
  for (const auto& o : outcomes) by_id[o.advertiser_id] = o.arm;
  std::vector<Arm> arms;
  arms.reserve(covariates.size());
  for (const auto& c : covariates) {
    const auto it = by_id.find(c.advertiser_id);
    if (it == by_id.end())
      fail(ErrorKind::InvalidInput, "advertiser " + std::to_string(c.advertiser_id) + " has covariates but no outcome");
    arms.push_back(it->second);
  }
  return arms;
}

void note_fit(const stats::GlmFit& f, std::string_view what, std::vector<std::string>& warnings) {
  if (!f.converged) warnings.push_back(std::string(what) + ": IRLS did not converge");
  if (f.boundary) warnings.push_back(std::string(what) + ": fitted mean near the boundary");
}

std::vector<std::string> non_fixed_effect_rows(const stats::Fit& f) {
  std::vector<std::string> rows;
  for (const auto& n : f.names)
    if (n.rfind("vertical: ", 0) != 0 && n.rfind("budget_cat: ", 0) != 0 && n.rfind("expertise_cat: ", 0) != 0 &&
        n != "Constant")
      rows.push_back(n);
  rows.emplace_back("Constant");
  return rows;
}

std::string strip_header(std::string text) {
  if (!text.empty() && (text.front() == '#' || text.front() == '{')) {
    const auto nl = text.find('\n');
    text.erase(0, nl == std::string::npos ? text.size() : nl + 1);
  }
  return text;
}

}  // namespace

SimulateOut stage_simulate(const Config& cfg, std::uint64_t seed) {
  SimulateOut out;
  out.market = generate_market(MarketConfig::from(cfg), derive_seed(seed, "stage.market"));
  out.log = run_multitext_era(out.market, EraConfig::from(cfg), derive_seed(seed, "stage.era"));
  return out;
}

DataOut stage_build_data(const Config& cfg, const MultitextLog& log, std::uint64_t seed) {
  const auto filters = FilterConfig::from(cfg);
  const auto pairs = build_pairwise(log, filters);
  const auto rows = build_pointwise(log, filters);
  // One advertiser partition for both views so no advertiser leaks across splits.
  std::vector<std::uint32_t> ids;
  for (const auto& r : rows) ids.push_back(r.advertiser_id);
  for (const auto& p : pairs) ids.push_back(p.advertiser_id);
  const auto parts = split_advertisers(std::move(ids), split_fractions(cfg), derive_seed(seed, "stage.split"));
  DataOut out;
  assign(pairs, parts, out.pairs);
  assign(rows, parts, out.pointwise);
  if (out.pairs.train.empty()) fail(ErrorKind::InsufficientData, "no training preference pairs survived the filters");
  return out;
}

std::vector<SftExample> sft_examples(const DataOut& data) {
  std::vector<SftExample> out;
  out.reserve(data.pointwise.train.size());
  for (const auto& r : data.pointwise.train) out.push_back({r.prompt, r.variant});
  return out;
}

std::vector<TokenSequence> rl_prompts(const DataOut& data) {
  std::vector<TokenSequence> out;
  std::set<std::uint32_t> seen;
  for (const auto& r : data.pointwise.train)
    if (seen.insert(r.ad_id).second) out.push_back(r.prompt);
  return out;
}

SftOut stage_train_sft(const Config& cfg, const MarketState& market, const DataOut& data, std::uint64_t seed) {
  SftOut out;
  out.policy = PolicyModel::for_vocab(market.vocab, static_cast<int>(cfg.get_int("policy.order", 2)),
                                      static_cast<std::size_t>(cfg.get_int("policy.max_len", 40)));
  out.result = sft_train(out.policy, sft_examples(data), SftHyper::from(cfg), derive_seed(seed, "stage.sft"));
  return out;
}

RmOut stage_train_rm(const Config& cfg, const MarketState& market, const DataOut& data) {
  const auto hyper = RmHyper::from(cfg);
  const auto fx = extractor(cfg, market.vocab, "rm.view", "counts");
  const auto fx_eval = extractor(cfg, market.vocab, "rm.eval_view", "presence");
  if (data.pairs.eval_rm.empty()) fail(ErrorKind::InsufficientData, "no preference pairs in the eval-RM split");
  if (data.pairs.holdout.empty()) fail(ErrorKind::InsufficientData, "no preference pairs in the holdout split");
  auto train = train_pairwise_rm(data.pairs.train, data.pairs.holdout, fx, hyper);
  auto eval = train_pairwise_rm(data.pairs.eval_rm, data.pairs.holdout, fx_eval, hyper);
  auto point = train_pointwise_rm(data.pointwise.train, data.pairs.holdout, fx);
  RmOut out{train.model, eval.model, point.model, train.metrics, eval.metrics};
  out.train_rm_holdout = evaluate_pairwise_accuracy(out.train_rm, data.pairs.holdout);
  out.eval_rm_holdout = evaluate_pairwise_accuracy(out.eval_rm, data.pairs.holdout);
  out.pointwise_rm_holdout = evaluate_pairwise_accuracy(out.pointwise_rm, data.pairs.holdout);
  return out;
}

RlpfOut stage_train_rlpf(const Config& cfg, const PolicyModel& sft, const RmOut& rms, const DataOut& data,
                         std::uint64_t seed) {
  const auto ppo = PpoConfig::from(cfg);
  const auto prompts = rl_prompts(data);
  std::vector<TokenSequence> eval_prompts;
  std::set<std::uint32_t> seen;
  for (const auto& r : data.pointwise.eval_rm)
    if (seen.insert(r.ad_id).second) eval_prompts.push_back(r.prompt);
  RlpfOut out;
  out.result =
      train_rlpf(sft, rms.train_rm, rms.eval_rm, prompts, ppo, derive_seed(seed, "stage.rlpf"), eval_prompts);
  out.selected = select_checkpoint(out.result.trajectory, out.result.checkpoints, ppo.smoothing);
  out.policy = out.result.checkpoints[out.selected].policy;
  return out;
}

ExperimentResult stage_abtest(const Config& cfg, const MarketState& market, const PolicyModel& control,
                              const PolicyModel& treatment, std::uint64_t seed) {
  return run_experiment(market, control, treatment, ExperimentConfig::from(cfg), derive_seed(seed, "stage.ab"));
}

AnalysisOut stage_analyze(std::span<const AdvertiserOutcome> outcomes, std::span<const CovariateRecord> covariates) {
  using namespace stats;
  AnalysisOut a;
  a.glm_data = build_main_design(covariates, outcomes, Spec::MainLogBinom);
  const auto& g = a.glm_data;
  a.log_binom = fit_glm(g.design.X, g.design.names, g.engagement, g.impressions, Family::Binomial, Link::Log);
  a.logistic = fit_glm(g.design.X, g.design.names, g.engagement, g.impressions, Family::Binomial, Link::Logit);
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(g.impressions.size());
  const Eigen::VectorXd offset = g.impressions.array().log();
  a.poisson = fit_glm(g.design.X, g.design.names, g.engagement, ones, Family::Poisson, Link::Log, offset);
  note_fit(a.log_binom, "log-binomial", a.warnings);
  note_fit(a.logistic, "logistic", a.warnings);
  note_fit(a.poisson, "poisson", a.warnings);

  a.linear_data = build_main_design(covariates, outcomes, Spec::VariantsLinear);
  const auto& l = a.linear_data;
  a.variants = fit_linear(l.design.X, l.design.names, l.variant_cnt);
  a.ads = fit_linear(l.design.X, l.design.names, l.ad_cnt);
  a.engagement = fit_linear(l.design.X, l.design.names, l.engagement);
  a.impressions = fit_linear(l.design.X, l.design.names, l.impressions);

  a.global = compare_global_ctr(outcomes);
  a.balance = balance_table(covariates, arms_for(outcomes, covariates));
  for (const auto& w : g.design.warnings) a.warnings.push_back("design: " + w);
  for (const auto& w : l.design.warnings) a.warnings.push_back("linear design: " + w);
  if (g.excluded_zero_impressions)
    a.warnings.push_back(std::to_string(g.excluded_zero_impressions) +
                         " advertisers without impressions excluded from the CTR models");
  return a;
}

std::vector<RenderedTable> render_tables(const AnalysisOut& a) {
  using namespace stats;
  const auto qb_log = as_quasi(a.log_binom);
  const auto qb_logit = as_quasi(a.logistic);
  const auto qp = as_quasi(a.poisson);
  auto phi = [](double v) { return std::vector<std::pair<std::string, std::string>>{{"Dispersion", format_fixed(v, 3)}}; };
  const std::string hc1 = "HC1 robust standard errors in parentheses.";
  const std::string model = "Model standard errors scaled by the Pearson dispersion.";

  std::vector<std::pair<std::string, RegressionTable>> tables;
  tables.push_back({"log_binomial",
                    {"Log-binomial regression of advertiser CTR",
                     {{"engagement/impressions", &a.log_binom, true, {}}},
                     hc1,
                     non_fixed_effect_rows(a.log_binom)}});
  tables.push_back({"linear_variants",
                    {"Linear regression of ad creation",
                     {{"variant_cnt", &a.variants, true, {}}, {"ad_cnt", &a.ads, true, {}}},
                     hc1,
                     non_fixed_effect_rows(a.variants)}});
  tables.push_back({"log_binomial_full",
                    {"Log-binomial regression with fixed effects",
                     {{"engagement/impressions", &a.log_binom, true, {}}},
                     hc1,
                     {}}});
  tables.push_back({"logistic",
                    {"Logistic regression", {{"engagement/impressions", &a.logistic, true, {}}}, hc1, {}}});
  tables.push_back({"quasi_binomial",
                    {"Quasi-binomial regression",
                     {{"log link", &qb_log, false, phi(qb_log.dispersion)},
                      {"logit link", &qb_logit, false, phi(qb_logit.dispersion)}},
                     model,
                     {}}});
  tables.push_back({"poisson_offset",
                    {"Poisson regression with log impressions offset", {{"engagement", &a.poisson, true, {}}}, hc1, {}}});
  tables.push_back({"quasi_poisson",
                    {"Quasi-Poisson regression", {{"engagement", &qp, false, phi(qp.dispersion)}}, model, {}}});
  tables.push_back({"separate_linear",
                    {"Separate linear regressions on engagement and impressions",
                     {{"engagement", &a.engagement, true, {}}, {"impressions", &a.impressions, true, {}}},
                     hc1,
                     {}}});

  std::vector<RenderedTable> out;
  for (const auto& [stem, t] : tables) out.push_back({stem, regression_text(t), regression_csv(t)});
  return out;
}

// ---------------------------------------------------------------------------

Session::Session(std::filesystem::path workdir, Config config, std::uint64_t seed)
    : workdir_(std::move(workdir)), config_(std::move(config)), seed_(seed), hash_(config_.hash_hex()) {
  // Parse every stage's settings now so a bad value fails before any work.
  MarketConfig::from(config_);
  EraConfig::from(config_);
  FilterConfig::from(config_);
  SftHyper::from(config_);
  RmHyper::from(config_);
  PpoConfig::from(config_);
  ExperimentConfig::from(config_);
  std::error_code ec;
  std::filesystem::create_directories(workdir_, ec);
  if (ec) fail(ErrorKind::Io, "cannot create work directory " + workdir_.string() + ": " + ec.message());
  load_manifest();
}

Session Session::open(const std::filesystem::path& config_path, std::uint64_t seed,
                      const std::filesystem::path& workdir) {
  std::filesystem::path path = config_path;
  if (path.empty()) {
    const char* env = std::getenv("RLPF_CONFIG");
    if (!env || !*env) fail(ErrorKind::Config, "no config given and RLPF_CONFIG is not set");
    path = env;
  }
  if (!std::filesystem::exists(path)) fail(ErrorKind::Config, "config file not found: " + path.string());
  return Session(workdir, Config::load(path), seed);
}

std::filesystem::path Session::path(std::string_view artifact) const { return workdir_ / std::string(artifact); }

FileHeader Session::header(std::string_view schema) const { return {std::string(schema), 1, hash_, seed_}; }

void Session::write(std::string_view artifact, std::string_view content) { write_file(path(artifact), content); }

void Session::require(std::string_view artifact, std::string_view producer) const {
  const auto p = path(artifact);
  if (!std::filesystem::exists(p))
    fail(ErrorKind::MissingArtifact,
         std::string(artifact) + " not found in " + workdir_.string() + "; run stage '" + std::string(producer) + "' first");
  const auto h = read_header(p);
  if (h.config_hash != hash_ || h.seed != seed_)
    fail(ErrorKind::StaleArtifact, std::string(artifact) + " was produced with config " + h.config_hash + " seed " +
                                       std::to_string(h.seed) + " but this run uses config " + hash_ + " seed " +
                                       std::to_string(seed_) + "; re-run stage '" + std::string(producer) + "'");
}

void Session::load_manifest() {
  done_.clear();
  const auto p = path("manifest.json");
  if (!std::filesystem::exists(p)) return;
  const auto j = nlohmann::json::parse(read_file(p), nullptr, false);
  if (j.is_discarded() || !j.is_object()) return;
  if (j.value("config_hash", std::string{}) != hash_ || j.value("seed", std::uint64_t{0}) != seed_) return;
  if (!j.contains("stages") || !j["stages"].is_object()) return;
  for (const auto& [stage, entry] : j["stages"].items())
    done_[stage] = entry.value("artifacts", std::vector<std::string>{});
}

void Session::save_manifest() const {
  ordered_json j;
  j["schema"] = "rlpf.manifest";
  j["version"] = 1;
  j["tool_version"] = RLPF_VERSION;
  j["config_hash"] = hash_;
  j["seed"] = seed_;
  ordered_json stages = ordered_json::object();
  for (auto s : kStages) {
    const auto it = done_.find(s);
    if (it == done_.end()) continue;
    stages[std::string(s)] = {{"complete", true}, {"artifacts", it->second}};
  }
  j["stages"] = stages;
  write_file(path("manifest.json"), j.dump(2) + "\n");
}

void Session::mark_done(std::string_view stage, const std::vector<std::string>& artifacts) {
  done_[std::string(stage)] = artifacts;
  save_manifest();
}

bool Session::up_to_date(std::string_view stage) const {
  const auto it = done_.find(stage);
  if (it == done_.end()) return false;
  for (const auto& a : it->second) {
    const auto p = path(a);
    if (!std::filesystem::exists(p)) return false;
    try {
      const auto h = read_header(p);
      if (h.config_hash != hash_ || h.seed != seed_) return false;
    } catch (const Error&) {
      return false;
    }
  }
  return true;
}

bool Session::run(std::string_view stage) {
  if (stage == "pipeline") {
    bool wrote = false;
    for (auto s : kStages) wrote = run_one(s) || wrote;
    return wrote;
  }
  if (std::find(std::begin(kStages), std::end(kStages), stage) == std::end(kStages))
    fail(ErrorKind::Config, "unknown stage '" + std::string(stage) + "'");
  return run_one(stage);
}

bool Session::run_one(std::string_view stage) {
  if (up_to_date(stage)) return false;
  const auto& cfg = config_;
  std::vector<std::string> written;
  auto emit = [&](const std::string& name, std::string_view content) {
    write(name, content);
    written.push_back(name);
  };
  auto load_market = [&] {
    require("market.json", "simulate");
    return market_from_json(read_file(path("market.json")));
  };
  auto load_data = [&] {
    DataOut d;
    for (const auto* part : {"train", "eval_rm", "holdout"}) {
      require(std::string("pairs_") + part + ".jsonl", "build-data");
      require(std::string("pointwise_") + part + ".jsonl", "build-data");
    }
    d.pairs.train = pairs_from_jsonl(read_file(path("pairs_train.jsonl")));
    d.pairs.eval_rm = pairs_from_jsonl(read_file(path("pairs_eval_rm.jsonl")));
    d.pairs.holdout = pairs_from_jsonl(read_file(path("pairs_holdout.jsonl")));
    d.pointwise.train = pointwise_from_jsonl(read_file(path("pointwise_train.jsonl")));
    d.pointwise.eval_rm = pointwise_from_jsonl(read_file(path("pointwise_eval_rm.jsonl")));
    d.pointwise.holdout = pointwise_from_jsonl(read_file(path("pointwise_holdout.jsonl")));
    return d;
  };
  auto load_policy = [&](const char* name, const char* producer, const MarketState& m) {
    require(name, producer);
    return policy_from_bytes(read_file(path(name)), m.vocab.hash());
  };

  if (stage == "simulate") {
    const auto s = stage_simulate(cfg, seed_);
    emit("market.json", market_to_json(s.market, header("rlpf.market")));
    emit("multitext.jsonl", multitext_to_jsonl(s.log, header("rlpf.multitext")));
  } else if (stage == "build-data") {
    require("multitext.jsonl", "simulate");
    const auto log = multitext_from_jsonl(read_file(path("multitext.jsonl")));
    const auto d = stage_build_data(cfg, log, seed_);
    emit("pairs_train.jsonl", pairs_to_jsonl(d.pairs.train, header("rlpf.pairs")));
    emit("pairs_eval_rm.jsonl", pairs_to_jsonl(d.pairs.eval_rm, header("rlpf.pairs")));
    emit("pairs_holdout.jsonl", pairs_to_jsonl(d.pairs.holdout, header("rlpf.pairs")));
    emit("pointwise_train.jsonl", pointwise_to_jsonl(d.pointwise.train, header("rlpf.pointwise")));
    emit("pointwise_eval_rm.jsonl", pointwise_to_jsonl(d.pointwise.eval_rm, header("rlpf.pointwise")));
    emit("pointwise_holdout.jsonl", pointwise_to_jsonl(d.pointwise.holdout, header("rlpf.pointwise")));
  } else if (stage == "train-sft") {
    const auto market = load_market();
    const auto d = load_data();
    const auto s = stage_train_sft(cfg, market, d, seed_);
    emit("policy_sft.bin", policy_to_bytes(s.policy, header("rlpf.policy")));
    std::string csv = header_comment(header("rlpf.sft_loss")) + "epoch,nll\n0," + format_double(s.result.initial_loss) + "\n";
    for (std::size_t e = 0; e < s.result.epoch_loss.size(); ++e)
      csv += std::to_string(e + 1) + "," + format_double(s.result.epoch_loss[e]) + "\n";
    emit("sft_loss.csv", csv);
  } else if (stage == "train-rm") {
    const auto market = load_market();
    const auto d = load_data();
    const auto r = stage_train_rm(cfg, market, d);
    emit("rm_train.json", rm_to_json(r.train_rm, header("rlpf.reward_model")));
    emit("rm_eval.json", rm_to_json(r.eval_rm, header("rlpf.reward_model")));
    emit("rm_pointwise.json", rm_to_json(r.pointwise_rm, header("rlpf.reward_model")));
    emit("rm_train_metrics.csv", rm_metrics_csv(r.train_metrics, header("rlpf.rm_metrics")));
    emit("rm_eval_metrics.csv", rm_metrics_csv(r.eval_metrics, header("rlpf.rm_metrics")));
    emit("rm_summary.csv", header_comment(header("rlpf.rm_summary")) + "model,view,holdout_pairs,holdout_accuracy\n" +
                               "train_rm," + std::string(view_name(r.train_rm.extractor.view())) + "," +
                               std::to_string(d.pairs.holdout.size()) + "," + format_fixed(r.train_rm_holdout, 4) +
                               "\neval_rm," + std::string(view_name(r.eval_rm.extractor.view())) + "," +
                               std::to_string(d.pairs.holdout.size()) + "," + format_fixed(r.eval_rm_holdout, 4) +
                               "\npointwise_rm," + std::string(view_name(r.pointwise_rm.extractor.view())) + "," +
                               std::to_string(d.pairs.holdout.size()) + "," + format_fixed(r.pointwise_rm_holdout, 4) +
                               "\n");
  } else if (stage == "train-rlpf") {
    const auto market = load_market();
    const auto d = load_data();
    const auto sft = load_policy("policy_sft.bin", "train-sft", market);
    require("rm_train.json", "train-rm");
    require("rm_eval.json", "train-rm");
    RmOut rms{rm_from_json(read_file(path("rm_train.json"))), rm_from_json(read_file(path("rm_eval.json"))),
              RewardModel{}, {}, {}};
    const auto r = stage_train_rlpf(cfg, sft, rms, d, seed_);
    emit("policy_rlpf.bin", policy_to_bytes(r.policy, header("rlpf.policy")));
    emit("trajectory.csv", trajectory_csv(r.result, header("rlpf.trajectory")));
    const auto& chosen = r.result.checkpoints[r.selected];
    emit("rlpf_selection.csv", header_comment(header("rlpf.selection")) + "selected_step,checkpoints,last_step\n" +
                                   std::to_string(chosen.step) + "," + std::to_string(r.result.checkpoints.size()) +
                                   "," + std::to_string(r.result.checkpoints.back().step) + "\n");
  } else if (stage == "abtest") {
    const auto market = load_market();
    const auto control = load_policy("policy_sft.bin", "train-sft", market);
    const auto treatment = load_policy("policy_rlpf.bin", "train-rlpf", market);
    const auto e = stage_abtest(cfg, market, control, treatment, seed_);
    emit("outcomes.csv", outcomes_csv(e.outcomes, header("rlpf.outcomes")));
    emit("covariates.csv", covariates_csv(e.covariates, header("rlpf.covariates")));
    std::unordered_map<std::uint32_t, Arm> arm;
    for (const auto& o : e.outcomes) arm[o.advertiser_id] = o.arm;
    std::map<std::pair<std::int64_t, int>, std::array<std::uint64_t, 3>> weekly;
    for (const auto& ad : e.ads) {
      auto& w = weekly[{ad.week, static_cast<int>(arm.at(ad.advertiser_id))}];
      w[0] += ad.variants.size();
      for (const auto& v : ad.delivery) {
        w[1] += v.clicks;
        w[2] += v.impressions;
      }
    }
    std::string csv = header_comment(header("rlpf.weekly")) + "week,arm,variants,clicks,impressions,ctr\n";
    for (const auto& [k, w] : weekly)
      csv += std::to_string(k.first) + "," + std::string(arm_name(static_cast<Arm>(k.second))) + "," +
             std::to_string(w[0]) + "," + std::to_string(w[1]) + "," + std::to_string(w[2]) + "," +
             format_fixed(w[2] ? static_cast<double>(w[1]) / static_cast<double>(w[2]) : 0.0, 6) + "\n";
    emit("weekly.csv", csv);
  } else if (stage == "analyze") {
    require("outcomes.csv", "abtest");
    require("covariates.csv", "abtest");
    const auto outcomes = outcomes_from_csv(read_file(path("outcomes.csv")));
    const auto covariates = covariates_from_csv(read_file(path("covariates.csv")));
    const auto a = stage_analyze(outcomes, covariates);
    emit("balance.txt", stats::balance_text(a.balance, header("rlpf.balance")));
    emit("balance.csv", stats::balance_csv(a.balance, header("rlpf.balance")));
    for (const auto& t : render_tables(a)) {
      emit("table_" + t.stem + ".txt", header_comment(header("rlpf.table")) + t.text);
      emit("table_" + t.stem + ".csv", header_comment(header("rlpf.table")) + t.csv);
    }
    const auto& g = a.global;
    std::string ctr = header_comment(header("rlpf.global_ctr")) +
                      "arm,advertisers,clicks,impressions,ctr,ci_low,ci_high\n";
    for (const auto* r : {&g.control, &g.treatment})
      ctr += std::string(r == &g.control ? "control" : "treatment") + "," + std::to_string(r->m) + "," +
             format_double(r->clicks) + "," + format_double(r->impressions) + "," + format_fixed(r->estimate, 6) +
             "," + format_fixed(r->ci_low, 6) + "," + format_fixed(r->ci_high, 6) + "\n";
    ctr += "# difference=" + format_fixed(g.difference, 6) + " relative_lift=" + format_fixed(g.relative_lift, 4) +
           " z=" + format_fixed(g.z, 3) + " p=" + format_fixed(g.p, 4) + "\n";
    emit("global_ctr.csv", ctr);
    const auto w = stats::wald_test(a.log_binom, "treatment");
    const auto v = stats::wald_test(a.variants, "treatment");
    std::string summary = header_comment(header("rlpf.summary")) + "quantity,value\n";
    auto row = [&](const std::string& k, const std::string& val) { summary += k + "," + val + "\n"; };
    row("treatment_coef", format_double(w.estimate));
    row("treatment_se_hc1", format_double(w.se));
    row("treatment_p", format_double(w.p));
    row("relative_ctr_change", format_fixed(100.0 * stats::relative_risk(w.estimate), 2) + "%");
    row("log_binomial_converged", a.log_binom.converged ? "1" : "0");
    row("variant_cnt_effect", format_double(v.estimate));
    row("variant_cnt_p", format_double(v.p));
    row("observations", std::to_string(a.log_binom.n));
    for (const auto& msg : a.warnings) row("warning", csv_escape(msg));
    emit("analysis_summary.csv", summary);
  } else if (stage == "report") {
    std::vector<std::pair<std::string, std::string>> sections = {
        {"Effect summary", "analysis_summary.csv"},
        {"Reward models", "rm_summary.csv"},
        {"RLPF training trajectory", "trajectory.csv"},
        {"Checkpoint selection", "rlpf_selection.csv"},
        {"Covariate balance", "balance.txt"}};
    for (const auto* t : {"log_binomial", "linear_variants", "log_binomial_full", "logistic", "quasi_binomial",
                          "poisson_offset", "quasi_poisson", "separate_linear"})
      sections.emplace_back("", std::string("table_") + t + ".txt");
    sections.emplace_back("Model-free CTR by arm", "global_ctr.csv");
    sections.emplace_back("Weekly delivery by arm", "weekly.csv");
    const std::map<std::string, std::string, std::less<>> producer = {
        {"rm_summary.csv", "train-rm"}, {"trajectory.csv", "train-rlpf"}, {"rlpf_selection.csv", "train-rlpf"},
        {"weekly.csv", "abtest"}};
    std::string out = header_comment(header("rlpf.report"));
    out += "RLPF desk report (tool " RLPF_VERSION ", config " + hash_ + ", seed " + std::to_string(seed_) + ")\n";
    for (const auto& [title, file] : sections) {
      const auto it = producer.find(file);
      require(file, it == producer.end() ? "analyze" : it->second);
      out += "\n";
      if (!title.empty()) out += title + "\n" + std::string(title.size(), '-') + "\n";
      out += strip_header(read_file(path(file)));
    }
    emit("report.txt", out);
  }
  mark_done(stage, written);
  return true;
}

}  // namespace rlpf
