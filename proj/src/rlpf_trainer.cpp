// Copyright 2026 The RLPF Desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "rlpf/rlpf_trainer.hpp"

#include <algorithm>
#include <cmath>

#include "rlpf/error.hpp"

namespace rlpf {

PpoConfig PpoConfig::from(const Config& cfg) {
  PpoConfig c;
  c.beta = cfg.get_double("ppo.beta", c.beta);
  c.alpha = cfg.get_double("ppo.alpha", c.alpha);
  c.clip = cfg.get_double("ppo.clip", c.clip);
  c.lr = cfg.get_double("ppo.lr", c.lr);
  c.batch = cfg.get_int("ppo.batch", c.batch);
  c.steps = cfg.get_int("ppo.steps", c.steps);
  c.ckpt_interval = cfg.get_int("ppo.ckpt_interval", c.ckpt_interval);
  c.epochs = cfg.get_int("ppo.epochs", c.epochs);
  const auto baseline = cfg.get_string("ppo.baseline", "batch-mean");
  if (baseline == "batch-mean")
    c.baseline = Baseline::BatchMean;
  else if (baseline == "none")
    c.baseline = Baseline::None;
  else
    fail(ErrorKind::Config, "ppo.baseline must be 'batch-mean' or 'none'");
  c.normalize_advantages = cfg.get_bool("ppo.normalize_advantages", c.normalize_advantages);
  c.max_grad_norm = cfg.get_double("ppo.max_grad_norm", c.max_grad_norm);
  c.temperature = cfg.get_double("ppo.temperature", c.temperature);
  c.smoothing = cfg.get_int("ppo.smoothing", c.smoothing);
  c.eval_samples = cfg.get_int("ppo.eval_samples", c.eval_samples);

  const double reals[] = {c.beta, c.alpha, c.clip, c.lr, c.max_grad_norm, c.temperature};
  for (double v : reals)
    if (!std::isfinite(v)) fail(ErrorKind::Config, "ppo config contains a non-finite value");
  if (c.beta < 0 || c.alpha < 0) fail(ErrorKind::Config, "ppo.beta and ppo.alpha must be >= 0");
  if (!(c.clip > 0.0 && c.clip < 1.0)) fail(ErrorKind::Config, "ppo.clip must lie in (0, 1)");
  if (c.lr < 0 || c.max_grad_norm < 0 || c.temperature <= 0)
    fail(ErrorKind::Config, "ppo.lr, ppo.max_grad_norm must be >= 0 and ppo.temperature > 0");
  if (c.batch < 1 || c.steps < 0 || c.ckpt_interval < 1 || c.epochs < 1 || c.smoothing < 1 || c.eval_samples < 1)
    fail(ErrorKind::Config, "ppo batch, interval, epochs, smoothing and eval_samples must be >= 1, steps >= 0");
  return c;
}

double shaped_reward(double score, double kl, std::size_t length, double alpha, double beta) {
  return score - beta * kl - alpha * static_cast<double>(length);
}

double shaped_reward(const RewardModel& rm, const PolicyModel& policy, const PolicyModel& ref,
                     const TokenSequence& prompt, const TokenSequence& y, double alpha, double beta) {
  const double kl = beta == 0.0 ? 0.0 : sequence_kl(policy, ref, prompt, y);
  return shaped_reward(rm.score(prompt, y), kl, y.length(), alpha, beta);
}

double surrogate_term(double ratio, double advantage, double clip) {
  const double clipped = std::clamp(ratio, 1.0 - clip, 1.0 + clip);
  return std::min(ratio * advantage, clipped * advantage);
}

double surrogate_slope(double ratio, double advantage, double clip) {
  if (advantage > 0.0 && ratio > 1.0 + clip) return 0.0;
  if (advantage < 0.0 && ratio < 1.0 - clip) return 0.0;
  return advantage;
}

StepMetrics ppo_update(PolicyModel& policy, const PolicyModel& ref, const RewardModel& rm,
                       std::span<const TokenSequence> prompts, const PpoConfig& config, Rng& rng,
                       std::int64_t step, const RewardModel* eval_rm) {
  if (prompts.empty()) fail(ErrorKind::InvalidInput, "ppo_update: empty prompt batch");
  if (!policy.same_shape(ref)) fail(ErrorKind::InvalidInput, "ppo_update: policy and reference differ in shape");
  const std::size_t n = prompts.size();
  const double inv_n = 1.0 / static_cast<double>(n);
  const auto diverged = [step](const std::string& what) {
    fail(ErrorKind::Diverged, "ppo_update: " + what + " at step " + std::to_string(step));
  };

  StepMetrics m;
  std::vector<TokenSequence> ys(n);
  std::vector<double> old_lp(n), reward(n);
  const std::uint64_t rollout_seed = rng.next();
  for (std::size_t i = 0; i < n; ++i) {
    ys[i] = policy.sample(prompts[i], config.temperature, derive_seed(rollout_seed, i));
    old_lp[i] = policy.log_prob(prompts[i], ys[i]);
    const double score = rm.score(prompts[i], ys[i]);
    const double kl = sequence_kl(policy, ref, prompts[i], ys[i]);
    reward[i] = shaped_reward(score, kl, ys[i].length(), config.alpha, config.beta);
    if (!std::isfinite(reward[i])) diverged("non-finite shaped reward");
    m.train_rm += score * inv_n;
    if (eval_rm) m.eval_rm += eval_rm->score(prompts[i], ys[i]) * inv_n;
    m.length += static_cast<double>(ys[i].length()) * inv_n;
    m.kl += kl * inv_n;
    m.objective += reward[i] * inv_n;
  }

  std::vector<double> adv = reward;
  if (config.baseline == PpoConfig::Baseline::BatchMean)
    for (auto& a : adv) a -= m.objective;
  // The KL term's direct gradient is scaled with the advantages so the two
  // parts stay in proportion.
  double adv_scale = 1.0;
  if (config.normalize_advantages && n > 1) {
    double mean = 0.0;
    for (double a : adv) mean += a * inv_n;
    double var = 0.0;
    for (double a : adv) var += (a - mean) * (a - mean);
    const double sd = std::sqrt(var / static_cast<double>(n - 1));
    if (sd > 1e-12) adv_scale = 1.0 / sd;
    for (auto& a : adv) a *= adv_scale;
  }

  if (config.lr == 0.0) return m;
  auto& theta = policy.params();
  std::vector<double> grad(theta.size());
  std::size_t clipped = 0;
  for (std::int64_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::fill(grad.begin(), grad.end(), 0.0);
    std::vector<double> lp(n);
    for (std::size_t i = 0; i < n; ++i) lp[i] = policy.log_prob(prompts[i], ys[i]);
    for (std::size_t i = 0; i < n; ++i) {
      const double ratio = std::exp(lp[i] - old_lp[i]);
      // The reward carries the KL only through sampling; this adds its
      // derivative along the fixed sample, giving the exact gradient of
      // E[score - beta * KL - alpha * length].
      if (config.beta > 0.0) policy.kl_grad(ref, prompts[i], ys[i], grad, -config.beta * adv_scale * ratio * inv_n);
      const double slope = surrogate_slope(ratio, adv[i], config.clip);
      if (slope == 0.0) {
        if (adv[i] != 0.0) ++clipped;
        continue;
      }
      // d(ratio * A) = A * ratio * d log pi
      policy.log_prob_grad(prompts[i], ys[i], grad, slope * ratio * inv_n);
    }
    double norm2 = 0.0;
    for (double g : grad) norm2 += g * g;
    if (!std::isfinite(norm2)) diverged("non-finite gradient");
    double scale = config.lr;
    const double norm = std::sqrt(norm2);
    if (config.max_grad_norm > 0.0 && norm > config.max_grad_norm) scale *= config.max_grad_norm / norm;
    for (std::size_t k = 0; k < theta.size(); ++k) theta[k] += scale * grad[k];
  }
  m.clip_fraction = static_cast<double>(clipped) / static_cast<double>(n * static_cast<std::size_t>(config.epochs));
  return m;
}

double mean_score(const PolicyModel& policy, const RewardModel& rm, std::span<const TokenSequence> prompts,
                  double temperature, std::uint64_t seed) {
  if (prompts.empty()) fail(ErrorKind::InvalidInput, "mean_score: no prompts");
  double s = 0.0;
  for (std::size_t i = 0; i < prompts.size(); ++i)
    s += rm.score(prompts[i], policy.sample(prompts[i], temperature, derive_seed(seed, i)));
  return s / static_cast<double>(prompts.size());
}

RlpfResult train_rlpf(const PolicyModel& init, const RewardModel& rm, const RewardModel& eval_rm,
                      std::span<const TokenSequence> prompts, const PpoConfig& config,
                      std::uint64_t seed, std::span<const TokenSequence> eval_prompts) {
  if (prompts.empty()) fail(ErrorKind::InvalidInput, "train_rlpf: no prompts");
  if (eval_prompts.empty()) eval_prompts = prompts;
  // A fixed evaluation draw, sampled with the same seeds at every step, so
  // the eval-RM curve moves only with the policy.
  std::vector<TokenSequence> eval_set(static_cast<std::size_t>(config.eval_samples));
  Rng pick(derive_seed(seed, "ppo.eval"));
  for (auto& p : eval_set) p = eval_prompts[static_cast<std::size_t>(pick.below(eval_prompts.size()))];
  const std::uint64_t eval_seed = pick.next();

  RlpfResult out;
  PolicyModel policy = init;
  const PolicyModel& ref = init;
  const auto batch = static_cast<std::size_t>(config.batch);
  std::vector<TokenSequence> chosen(batch);
  for (std::int64_t s = 0; s <= config.steps; ++s) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(s)));
    for (auto& p : chosen) p = prompts[static_cast<std::size_t>(rng.below(prompts.size()))];
    if (s % config.ckpt_interval == 0 || s == config.steps) out.checkpoints.push_back({s, policy});
    const double eval = mean_score(policy, eval_rm, eval_set, config.temperature, eval_seed);
    PpoConfig cfg = config;
    if (s == config.steps) cfg.lr = 0.0;  // final rollout is measurement only
    auto m = ppo_update(policy, ref, rm, chosen, cfg, rng, s);
    m.eval_rm = eval;
    out.trajectory.push_back({s, m});
  }
  return out;
}

std::vector<double> smooth(std::span<const double> values, std::int64_t window) {
  const auto n = static_cast<std::int64_t>(values.size());
  const std::int64_t half = std::max<std::int64_t>(0, (window - 1) / 2);
  std::vector<double> out(values.size());
  for (std::int64_t i = 0; i < n; ++i) {
    const auto lo = std::max<std::int64_t>(0, i - half);
    const auto hi = std::min<std::int64_t>(n - 1, i + half);
    double s = 0.0;
    for (auto j = lo; j <= hi; ++j) s += values[static_cast<std::size_t>(j)];
    out[static_cast<std::size_t>(i)] = s / static_cast<double>(hi - lo + 1);
  }
  return out;
}

std::size_t select_checkpoint(std::span<const TrajectoryEntry> trajectory,
                              std::span<const Checkpoint> checkpoints, std::int64_t window) {
  if (checkpoints.empty() || trajectory.empty())
    fail(ErrorKind::InvalidInput, "select_checkpoint: no checkpoints");
  std::vector<double> eval;
  eval.reserve(checkpoints.size());
  for (const auto& c : checkpoints) {
    const auto it = std::find_if(trajectory.begin(), trajectory.end(),
                                 [&](const TrajectoryEntry& e) { return e.step == c.step; });
    if (it == trajectory.end())
      fail(ErrorKind::InvalidInput, "select_checkpoint: no trajectory entry for step " + std::to_string(c.step));
    eval.push_back(it->metrics.eval_rm);
  }
  const auto sm = smooth(eval, window);
  std::size_t best = 0;
  for (std::size_t i = 1; i < sm.size(); ++i)
    if (sm[i] > sm[best] + 1e-12 * std::max(1.0, std::abs(sm[best]))) best = i;
  return best;
}

std::string trajectory_csv(const RlpfResult& result, const FileHeader& header) {
  std::string out = header_comment(header);
  out += "step,train_rm,eval_rm,length,kl,objective,clip_fraction,checkpoint\n";
  for (const auto& e : result.trajectory) {
    const bool ckpt = std::any_of(result.checkpoints.begin(), result.checkpoints.end(),
                                  [&](const Checkpoint& c) { return c.step == e.step; });
    const auto& m = e.metrics;
    out += std::to_string(e.step) + "," + format_fixed(m.train_rm, 6) + "," + format_fixed(m.eval_rm, 6) +
           "," + format_fixed(m.length, 4) + "," + format_fixed(m.kl, 6) + "," +
           format_fixed(m.objective, 6) + "," + format_fixed(m.clip_fraction, 4) + "," +
           (ckpt ? "1" : "0") + "\n";
  }
  return out;
}

}  // namespace rlpf
