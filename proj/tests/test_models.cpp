// Copyright 2026 The RLPF Desk Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <numeric>

#include <doctest.h>

#include "rlpf/ab_experiment.hpp"
#include "rlpf/error.hpp"
#include "rlpf/policy_model.hpp"
#include "rlpf/reward_model.hpp"
#include "rlpf/rlpf_trainer.hpp"

using namespace rlpf;

namespace {

PolicyModel random_policy(std::uint64_t seed, std::size_t max_len = 12) {
  auto p = PolicyModel::for_vocab(Vocabulary::standard(), 2, max_len);
  Rng r(seed);
  for (auto& x : p.params()) x = r.normal(0.0, 0.5);
  return p;
}

TokenSequence some_text(std::uint64_t seed) {
  Rng r(seed);
  return write_prompt(Vocabulary::standard(), r);
}

}  // namespace

TEST_CASE("policy distributions normalize and force EOS at max_len") {
  const auto p = random_policy(1, 6);
  const auto x = some_text(2);
  const auto d = p.next_distribution(x, {});
  CHECK(std::accumulate(d.begin(), d.end(), 0.0) == doctest::Approx(1.0));
  CHECK(d[p.bos()] == 0.0);
  std::vector<TokenId> full(6, 5);
  const auto f = p.next_distribution(x, full);
  CHECK(f[p.eos()] == 1.0);
  Rng r(3);
  for (int i = 0; i < 50; ++i) CHECK(p.sample(x, 1.0, r).length() <= 6);
}

TEST_CASE("policy log-probabilities sum to one over short sequences") {
  // Tiny vocabulary and max_len 2 make the sequence space enumerable.
  PolicyModel p(5, 0, 1, 2, 2);
  Rng r(4);
  for (auto& v : p.params()) v = r.normal();
  const TokenSequence x{{2, 3}};
  double total = 0.0;
  const std::vector<TokenId> body{2, 3, 4};
  total += std::exp(p.log_prob(x, {}));
  for (auto a : body) {
    total += std::exp(p.log_prob(x, {{a}}));
    for (auto b : body) total += std::exp(p.log_prob(x, {{a, b}}));
  }
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("policy gradient matches central differences including the copy block") {
  auto p = random_policy(5);
  const auto x = some_text(6);
  Rng r(7);
  const auto y = p.sample(x, 1.0, r);
  std::vector<double> g(p.num_params(), 0.0);
  p.log_prob_grad(x, y, g);
  const double h = 1e-5;
  // Probe the largest-gradient coordinates of each block plus random ones.
  std::vector<std::size_t> idx(g.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::partial_sort(idx.begin(), idx.begin() + 30, idx.end(),
                    [&](auto a, auto b) { return std::abs(g[a]) > std::abs(g[b]); });
  idx.resize(30);
  idx.push_back(p.align_offset(x.ids[0], y.ids.empty() ? p.eos() : y.ids[0]));
  for (int i = 0; i < 20; ++i) idx.push_back(r.below(g.size()));
  for (auto i : idx) {
    const double keep = p.params()[i];
    p.params()[i] = keep + h;
    const double up = p.log_prob(x, y);
    p.params()[i] = keep - h;
    const double dn = p.log_prob(x, y);
    p.params()[i] = keep;
    const double fd = (up - dn) / (2 * h);
    CHECK(std::abs(fd - g[i]) <= 1e-6 + 1e-5 * std::abs(fd));
  }
}

TEST_CASE("policy sampling is seeded and greedy is deterministic") {
  const auto p = random_policy(8);
  const auto x = some_text(9);
  CHECK(p.sample(x, 1.0, 42) == p.sample(x, 1.0, 42));
  Rng a(1), b(2);
  CHECK(p.sample(x, 0.0, a) == p.sample(x, 0.0, b));
}

TEST_CASE("policy checkpoints round-trip and detect vocabulary mismatch") {
  const auto p = random_policy(10);
  const auto bytes = policy_to_bytes(p, {"policy", 1, "h", 1});
  const auto q = policy_from_bytes(bytes, p.vocab_hash());
  CHECK(q.params() == p.params());
  CHECK(q.same_shape(p));
  try {
    policy_from_bytes(bytes, p.vocab_hash() ^ 1);
    FAIL("expected a stale artifact");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::StaleArtifact);
  }
  CHECK_THROWS_AS(policy_from_bytes(bytes.substr(0, bytes.size() - 3)), Error);
}

TEST_CASE("SFT lowers the NLL and KL to self is zero") {
  const auto v = Vocabulary::standard();
  auto p = PolicyModel::for_vocab(v, 2, 40);
  Rng r(11);
  std::vector<SftExample> ex;
  for (int i = 0; i < 40; ++i) {
    auto x = write_prompt(v, r);
    auto y = write_variant(v, x, r);
    ex.push_back({x, y});
  }
  SftHyper h;
  h.epochs = 10;
  const auto res = sft_train(p, ex, h, 1);
  CHECK(res.epoch_loss.back() < res.initial_loss);
  CHECK(mean_nll(p, ex) == doctest::Approx(res.epoch_loss.back()));
  CHECK(sequence_kl(p, p, ex[0].input, ex[0].target) == doctest::Approx(0.0));
  const auto q = random_policy(12, 40);
  CHECK(sequence_kl(p, q, ex[0].input, ex[0].target) > 0.0);
}

namespace {

std::vector<PreferencePair> random_pairs(std::uint64_t seed, std::size_t n) {
  const auto v = Vocabulary::standard();
  Rng r(seed);
  std::vector<PreferencePair> out;
  for (std::size_t i = 0; i < n; ++i) {
    PreferencePair p;
    p.prompt = write_prompt(v, r);
    p.winner = write_variant(v, p.prompt, r);
    p.loser = write_variant(v, p.prompt, r);
    out.push_back(p);
  }
  return out;
}

}  // namespace

TEST_CASE("feature views have the documented shape") {
  const auto v = Vocabulary::standard();
  const auto c = FeatureExtractor::for_vocab(v, FeatureExtractor::View::Counts);
  const auto p = FeatureExtractor::for_vocab(v, FeatureExtractor::View::Presence);
  CHECK(c.dimension() == 1 + (v.size() - 2) + 2);
  CHECK(p.dimension() == 1 + (v.size() - 2) + 3);
  CHECK(c.token_slot(v.bos()) == c.dimension());
  TokenSequence rep{{5, 5, 5}};
  const auto fc = c.extract(rep, rep);
  const auto fp = p.extract(rep, rep);
  CHECK(fc[c.token_slot(5)] == 3.0);
  CHECK(fp[p.token_slot(5)] == 1.0);
  CHECK(parse_view("presence") == FeatureExtractor::View::Presence);
  CHECK_THROWS_AS(parse_view("bogus"), Error);
}

TEST_CASE("Bradley-Terry gradient matches central differences") {
  const auto v = Vocabulary::standard();
  const auto pairs = random_pairs(13, 30);
  for (auto view : {FeatureExtractor::View::Counts, FeatureExtractor::View::Presence}) {
    RewardModel rm(FeatureExtractor::for_vocab(v, view));
    Rng r(14);
    for (auto& t : rm.theta) t = r.normal(0.0, 0.3);
    const auto lg = bt_loss_and_grad(rm, pairs);
    for (std::size_t i = 0; i < rm.theta.size(); ++i) {
      const double keep = rm.theta[i], h = 1e-5;
      rm.theta[i] = keep + h;
      const double up = bt_loss_and_grad(rm, pairs).loss;
      rm.theta[i] = keep - h;
      const double dn = bt_loss_and_grad(rm, pairs).loss;
      rm.theta[i] = keep;
      CHECK(std::abs((up - dn) / (2 * h) - lg.grad[i]) <= 1e-7 + 1e-5 * std::abs(lg.grad[i]));
    }
  }
}

TEST_CASE("reward model accuracy, ties and persistence") {
  const auto v = Vocabulary::standard();
  const auto pairs = random_pairs(15, 20);
  RewardModel zero(FeatureExtractor::for_vocab(v, FeatureExtractor::View::Counts));
  CHECK(evaluate_pairwise_accuracy(zero, pairs) == 0.5);
  CHECK(bt_probability(1.0, 1.0) == 0.5);
  CHECK(bt_probability(2.0, 0.0) == doctest::Approx(1.0 / (1.0 + std::exp(-2.0))));

  // Planted linear preferences are learned.
  RewardModel truth(zero.extractor);
  Rng r(16);
  for (auto& t : truth.theta) t = r.normal();
  auto train = random_pairs(17, 400), test = random_pairs(18, 400);
  for (auto* set : {&train, &test})
    for (auto& p : *set)
      if (truth.score(p.prompt, p.winner) < truth.score(p.prompt, p.loser)) std::swap(p.winner, p.loser);
  RmHyper h;
  h.epochs = 300;
  const auto fit = train_pairwise_rm(train, test, zero.extractor, h);
  CHECK(fit.metrics.final_accuracy >= 0.85);
  CHECK(fit.metrics.epoch_loss.front() > fit.metrics.epoch_loss.back());

  const auto json = rm_to_json(fit.model, {"rm", 1, "h", 0});
  const auto back = rm_from_json(json, fit.model.extractor.hash());
  CHECK(back.theta == fit.model.theta);
  CHECK_THROWS_AS(rm_from_json(json, fit.model.extractor.hash() ^ 1), Error);
}

TEST_CASE("shaped reward and clipped surrogate") {
  CHECK(shaped_reward(1.0, 0.5, 10, 0.05, 0.2) == doctest::Approx(1.0 - 0.1 - 0.5));
  CHECK(surrogate_term(1.5, 2.0, 0.2) == doctest::Approx(2.4));
  CHECK(surrogate_term(0.5, -1.0, 0.2) == doctest::Approx(-0.8));
  CHECK(surrogate_slope(1.5, 2.0, 0.2) == 0.0);
  CHECK(surrogate_slope(1.1, 2.0, 0.2) == 2.0);
  CHECK(surrogate_slope(0.5, 2.0, 0.2) == 2.0);
}

namespace {

std::size_t pick(std::vector<double> evals) {
  std::vector<TrajectoryEntry> traj;
  std::vector<Checkpoint> ckpts;
  for (std::size_t i = 0; i < evals.size(); ++i) {
    TrajectoryEntry e;
    e.step = static_cast<std::int64_t>(i);
    e.metrics.eval_rm = evals[i];
    traj.push_back(e);
    ckpts.push_back({static_cast<std::int64_t>(i), {}});
  }
  return select_checkpoint(traj, ckpts, 1);
}

}  // namespace

TEST_CASE("checkpoint selection") {
  CHECK(pick({0.1, 0.4, 0.6, 0.5, 0.3}) == 2);
  CHECK(pick({0.1, 0.2, 0.3, 0.4}) == 3);
  CHECK(pick({0.2, 0.2, 0.2}) == 0);
  const std::vector<double> s{1, 2, 3, 10};
  const auto sm = smooth(s, 3);
  CHECK(sm[0] == doctest::Approx(1.5));
  CHECK(sm[1] == doctest::Approx(2.0));
  CHECK(sm[3] == doctest::Approx(6.5));
}

TEST_CASE("PPO is reproducible and raises the training reward") {
  const auto v = Vocabulary::standard();
  auto init = PolicyModel::for_vocab(v, 2, 20);
  RewardModel rm(FeatureExtractor::for_vocab(v, FeatureExtractor::View::Presence));
  rm.theta[rm.extractor.token_slot(v.roles().cta.front())] = 3.0;
  std::vector<TokenSequence> prompts;
  Rng r(19);
  for (int i = 0; i < 32; ++i) prompts.push_back(write_prompt(v, r));
  PpoConfig c;
  c.steps = 8;
  c.ckpt_interval = 4;
  c.batch = 32;
  c.eval_samples = 32;
  const auto a = train_rlpf(init, rm, rm, prompts, c, 5);
  const auto b = train_rlpf(init, rm, rm, prompts, c, 5);
  REQUIRE(a.trajectory.size() == 9);
  CHECK(a.checkpoints.size() == 3);
  CHECK(a.checkpoints.back().policy.params() == b.checkpoints.back().policy.params());
  CHECK(a.trajectory.back().metrics.eval_rm > a.trajectory.front().metrics.eval_rm);
  CHECK(a.trajectory.front().metrics.kl == doctest::Approx(0.0));
}

TEST_CASE("arm assignment and covariates") {
  MarketConfig mc;
  mc.n_advertisers = 4000;
  const auto m = generate_market(mc, 20);
  const auto arms = assign_arms(m.advertisers, 0.5, 1);
  const auto t = std::count(arms.begin(), arms.end(), Arm::Treatment);
  CHECK(std::abs(static_cast<double>(t) - 2000.0) < 200.0);
  CHECK(assign_arms(m.advertisers, 0.5, 1) == arms);

  ExperimentConfig ec;
  int new_count = 0;
  for (int i = 0; i < 200; ++i) {
    const auto& a = m.advertisers[i];
    const auto h = simulate_pre_history(m, a, ec, derive_seed(2, static_cast<std::uint64_t>(i)));
    const auto c = collect_covariates(h, a, ec);
    CHECK(c.advertiser_id == a.id);
    CHECK(c.is_new_advertiser == (c.pre_exp_ctr.has_value() ? 0 : 1));
    if (c.pre_exp_ctr) {
      CHECK(*c.pre_exp_ctr > 0.0);
      CHECK(*c.pre_exp_ctr < 1.0);
    }
    CHECK(c.nov_feb_variant_cnt >= c.nov_feb_ad_cnt);
    new_count += c.is_new_advertiser;
    if (a.dormant) CHECK(c.is_new_advertiser == 1);
  }
  CHECK(new_count > 0);
}

TEST_CASE("experiment outcomes are consistent and serialize losslessly") {
  MarketConfig mc;
  mc.n_advertisers = 150;
  const auto m = generate_market(mc, 21);
  const auto p = random_policy(22, 30);
  ExperimentConfig ec;
  ec.weeks = 3;
  const auto res = run_experiment(m, p, p, ec, 3);
  REQUIRE(res.outcomes.size() == 150);
  REQUIRE(res.covariates.size() == 150);
  std::uint64_t imps = 0;
  for (const auto& o : res.outcomes) {
    CHECK(o.engagement <= o.impressions);
    CHECK(o.variant_cnt >= o.ad_cnt);
    imps += o.impressions;
  }
  std::uint64_t from_ads = 0;
  for (const auto& a : res.ads) {
    CHECK(a.variants.size() <= static_cast<std::size_t>(ec.selection.max_selected));
    CHECK(a.variants.front() == a.original);
    for (const auto& d : a.delivery) from_ads += d.impressions;
  }
  CHECK(imps == from_ads);
  const FileHeader h{"x", 1, "h", 3};
  const auto ob = outcomes_from_csv(outcomes_csv(res.outcomes, h));
  CHECK(ob.size() == res.outcomes.size());
  CHECK(ob[7].engagement == res.outcomes[7].engagement);
  const auto cb = covariates_from_csv(covariates_csv(res.covariates, h));
  REQUIRE(cb.size() == res.covariates.size());
  for (std::size_t i = 0; i < cb.size(); ++i) {
    CHECK(cb[i].pre_exp_ctr.has_value() == res.covariates[i].pre_exp_ctr.has_value());
    CHECK(cb[i].vertical == res.covariates[i].vertical);
  }
  CHECK(run_experiment(m, p, p, ec, 3).outcomes[9].engagement == res.outcomes[9].engagement);
}

TEST_CASE("KL gradient matches central differences and vanishes at the reference") {
  auto p = random_policy(30);
  const auto ref = random_policy(31);
  const auto x = some_text(32);
  const auto y = p.sample(x, 1.0, 33);
  std::vector<double> g(p.num_params(), 0.0);
  const double kl = p.kl_grad(ref, x, y, g);
  CHECK(kl == doctest::Approx(sequence_kl(p, ref, x, y)).epsilon(1e-12));
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < g.size(); ++i)
    if (g[i] != 0.0) idx.push_back(i);
  REQUIRE(!idx.empty());
  const double h = 1e-5;
  for (std::size_t k = 0; k < idx.size(); k += 7) {
    const auto i = idx[k];
    const double keep = p.params()[i];
    p.params()[i] = keep + h;
    const double up = sequence_kl(p, ref, x, y);
    p.params()[i] = keep - h;
    const double dn = sequence_kl(p, ref, x, y);
    p.params()[i] = keep;
    CHECK(std::abs((up - dn) / (2 * h) - g[i]) <= 1e-6 + 1e-5 * std::abs(g[i]));
  }
  std::vector<double> z(p.num_params(), 0.0);
  CHECK(p.kl_grad(p, x, y, z) == doctest::Approx(0.0));
  CHECK(std::all_of(z.begin(), z.end(), [](double v) { return std::abs(v) < 1e-12; }));
}

TEST_CASE("a very large KL weight keeps the policy on the reference") {
  const auto v = Vocabulary::standard();
  auto init = random_policy(34, 20);
  RewardModel rm(FeatureExtractor::for_vocab(v, FeatureExtractor::View::Counts));
  rm.theta[rm.extractor.token_slot(v.roles().cta.front())] = 3.0;
  std::vector<TokenSequence> prompts;
  Rng r(35);
  for (int i = 0; i < 32; ++i) prompts.push_back(write_prompt(v, r));
  PpoConfig c;
  c.beta = 1000.0;
  // Each epoch moves the parameters by up to lr; keep that below the KL scale.
  c.lr = 0.05;
  c.steps = 10;
  c.batch = 32;
  c.eval_samples = 16;
  const auto out = train_rlpf(init, rm, rm, prompts, c, 6);
  CHECK(out.trajectory.back().metrics.kl < 0.01);
}
