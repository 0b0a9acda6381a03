// Copyright 2026 The RLPF Desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "rlpf/reward_model.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>
#include <json.hpp>

#include "rlpf/error.hpp"

namespace rlpf {
namespace {

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// log(1 + exp(z)) without overflow.
double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

bool in_prompt(const TokenSequence& prompt, TokenId t) {
  return std::find(prompt.ids.begin(), prompt.ids.end(), t) != prompt.ids.end();
}

// Rows of winner-minus-loser feature differences.
Eigen::MatrixXd pair_diffs(const FeatureExtractor& fx, std::span<const PreferencePair> pairs) {
  const auto d = fx.dimension();
  Eigen::MatrixXd D(static_cast<Eigen::Index>(pairs.size()), static_cast<Eigen::Index>(d));
  std::vector<double> fw(d), fl(d);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    fx.extract(pairs[i].prompt, pairs[i].winner, fw);
    fx.extract(pairs[i].prompt, pairs[i].loser, fl);
    for (std::size_t k = 0; k < d; ++k)
      D(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = fw[k] - fl[k];
  }
  return D;
}

double accuracy_of(const Eigen::VectorXd& margins) {
  if (margins.size() == 0) return 0.0;
  double s = 0.0;
  for (double m : margins) s += m > 0.0 ? 1.0 : (m == 0.0 ? 0.5 : 0.0);
  return s / static_cast<double>(margins.size());
}

}  // namespace

FeatureExtractor::FeatureExtractor(std::size_t vocab_size, TokenId bos, TokenId eos, View view,
                                   std::size_t short_max, std::size_t long_min)
    : vocab_size_(vocab_size), bos_(bos), eos_(eos), view_(view), short_max_(short_max),
      long_min_(long_min) {
  if (vocab_size < 3 || bos == eos || bos >= vocab_size || eos >= vocab_size)
    fail(ErrorKind::Config, "feature extractor needs a vocabulary with distinct BOS and EOS");
  if (long_min <= short_max) fail(ErrorKind::Config, "feature extractor: long_min must exceed short_max");
  const std::size_t tokens = vocab_size - 2;
  dim_ = view == View::Counts ? 1 + tokens + 2 : 1 + tokens + 3;
}

FeatureExtractor FeatureExtractor::for_vocab(const Vocabulary& vocab, View view,
                                             std::size_t short_max, std::size_t long_min) {
  return FeatureExtractor(vocab.size(), vocab.bos(), vocab.eos(), view, short_max, long_min);
}

std::size_t FeatureExtractor::token_slot(TokenId t) const {
  if (t == bos_ || t == eos_ || t >= vocab_size_) return dim_;
  std::size_t slot = 1 + t;
  if (t > bos_) --slot;
  if (t > eos_) --slot;
  return slot;
}

void FeatureExtractor::extract(const TokenSequence& prompt, const TokenSequence& text,
                               std::span<double> out) const {
  if (out.size() != dim_) fail(ErrorKind::InvalidInput, "feature buffer has wrong size");
  std::fill(out.begin(), out.end(), 0.0);
  out[0] = 1.0;
  std::size_t overlap = 0;
  for (TokenId t : text.ids) {
    const auto slot = token_slot(t);
    if (slot < dim_) out[slot] = view_ == View::Counts ? out[slot] + 1.0 : 1.0;
    if (in_prompt(prompt, t)) ++overlap;
  }
  const std::size_t tail = 1 + (vocab_size_ - 2);
  const double len = static_cast<double>(text.length());
  const double share = text.ids.empty() ? 0.0 : static_cast<double>(overlap) / len;
  if (view_ == View::Counts) {
    out[tail] = len / 10.0;
    out[tail + 1] = share;
  } else {
    out[tail] = text.length() <= short_max_ ? 1.0 : 0.0;
    out[tail + 1] = text.length() >= long_min_ ? 1.0 : 0.0;
    out[tail + 2] = share;
  }
}

std::vector<double> FeatureExtractor::extract(const TokenSequence& prompt,
                                              const TokenSequence& text) const {
  std::vector<double> f(dim_);
  extract(prompt, text, f);
  return f;
}

std::vector<std::string> FeatureExtractor::names(const Vocabulary& vocab) const {
  std::vector<std::string> out(dim_);
  out[0] = "intercept";
  const std::string prefix = view_ == View::Counts ? "count:" : "has:";
  for (TokenId t = 0; t < vocab_size_; ++t) {
    const auto slot = token_slot(t);
    if (slot < dim_) out[slot] = prefix + vocab.symbol(t);
  }
  const std::size_t tail = 1 + (vocab_size_ - 2);
  if (view_ == View::Counts) {
    out[tail] = "length/10";
    out[tail + 1] = "prompt_overlap";
  } else {
    out[tail] = "is_short";
    out[tail + 1] = "is_long";
    out[tail + 2] = "prompt_overlap";
  }
  return out;
}

std::uint64_t FeatureExtractor::hash() const {
  std::string key = "rlpf.features.v1|" + std::string(view_name(view_)) + "|" +
                    std::to_string(vocab_size_) + "|" + std::to_string(bos_) + "|" +
                    std::to_string(eos_) + "|" + std::to_string(short_max_) + "|" +
                    std::to_string(long_min_);
  return fnv1a(key);
}

FeatureExtractor::View parse_view(std::string_view name) {
  if (name == "counts") return FeatureExtractor::View::Counts;
  if (name == "presence") return FeatureExtractor::View::Presence;
  fail(ErrorKind::Config, "unknown feature view '" + std::string(name) + "'");
}

std::string_view view_name(FeatureExtractor::View v) {
  return v == FeatureExtractor::View::Counts ? "counts" : "presence";
}

double RewardModel::score(const TokenSequence& prompt, const TokenSequence& text) const {
  const auto f = extractor.extract(prompt, text);
  double s = 0.0;
  for (std::size_t k = 0; k < f.size(); ++k) s += theta[k] * f[k];
  return s;
}

double bt_probability(double r1, double r2) { return sigmoid(r1 - r2); }

LossGrad bt_loss_and_grad(const RewardModel& rm, std::span<const PreferencePair> batch) {
  if (batch.empty()) fail(ErrorKind::InvalidInput, "bt_loss_and_grad: empty batch");
  const auto d = rm.extractor.dimension();
  LossGrad out;
  out.grad.assign(d, 0.0);
  std::vector<double> fw(d), fl(d);
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    rm.extractor.extract(batch[i].prompt, batch[i].winner, fw);
    rm.extractor.extract(batch[i].prompt, batch[i].loser, fl);
    double margin = 0.0;
    for (std::size_t k = 0; k < d; ++k) margin += rm.theta[k] * (fw[k] - fl[k]);
    const double loss = softplus(-margin);
    if (!std::isfinite(loss))
      fail(ErrorKind::Numerical, "bt_loss_and_grad: non-finite loss at pair " + std::to_string(i));
    out.loss += loss * inv_n;
    // d softplus(-m) / dm = -sigmoid(-m)
    const double g = -sigmoid(-margin) * inv_n;
    for (std::size_t k = 0; k < d; ++k) out.grad[k] += g * (fw[k] - fl[k]);
  }
  return out;
}

double evaluate_pairwise_accuracy(const RewardModel& rm, std::span<const PreferencePair> pairs) {
  if (pairs.empty()) fail(ErrorKind::InvalidInput, "evaluate_pairwise_accuracy: no pairs");
  double s = 0.0;
  for (const auto& p : pairs) {
    const double w = rm.score(p.prompt, p.winner);
    const double l = rm.score(p.prompt, p.loser);
    s += w > l ? 1.0 : (w == l ? 0.5 : 0.0);
  }
  return s / static_cast<double>(pairs.size());
}

RmHyper RmHyper::from(const Config& cfg) {
  RmHyper h;
  h.epochs = cfg.get_int("rm.epochs", h.epochs);
  h.lr = cfg.get_double("rm.lr", h.lr);
  h.momentum = cfg.get_double("rm.momentum", h.momentum);
  h.l2 = cfg.get_double("rm.l2", h.l2);
  if (h.epochs < 0 || !(h.lr >= 0.0) || !(h.momentum >= 0.0 && h.momentum < 1.0) || !(h.l2 >= 0.0))
    fail(ErrorKind::Config, "rm hyperparameters out of range");
  return h;
}

RmTrainResult train_pairwise_rm(std::span<const PreferencePair> train,
                                std::span<const PreferencePair> eval, const FeatureExtractor& fx,
                                const RmHyper& hyper) {
  if (train.empty()) fail(ErrorKind::InvalidInput, "train_pairwise_rm: no training pairs");
  RmTrainResult out{RewardModel(fx, RewardModel::Kind::Pairwise), {}};
  const Eigen::MatrixXd D = pair_diffs(fx, train);
  const Eigen::MatrixXd E = pair_diffs(fx, eval);
  const auto d = static_cast<Eigen::Index>(fx.dimension());
  const double n = static_cast<double>(train.size());
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(d);
  Eigen::VectorXd velocity = Eigen::VectorXd::Zero(d);

  auto objective = [&](const Eigen::VectorXd& th, Eigen::VectorXd* grad) {
    const Eigen::VectorXd m = D * th;
    double loss = 0.0;
    Eigen::VectorXd w(m.size());
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      loss += softplus(-m[i]);
      w[i] = -sigmoid(-m[i]);
    }
    loss = loss / n + 0.5 * hyper.l2 * th.squaredNorm();
    if (grad) *grad = D.transpose() * w / n + hyper.l2 * th;
    return loss;
  };

  const double initial = objective(theta, nullptr);
  Eigen::VectorXd grad(d);
  for (std::int64_t epoch = 0; epoch < hyper.epochs; ++epoch) {
    objective(theta, &grad);
    velocity = hyper.momentum * velocity - hyper.lr * grad;
    theta += velocity;
    const double loss = objective(theta, nullptr);
    if (!std::isfinite(loss) || loss > 10.0 * initial)
      fail(ErrorKind::Diverged, "train_pairwise_rm: loss " + format_double(loss) + " at epoch " +
                                    std::to_string(epoch) + " exceeds ten times the initial loss");
    out.metrics.epoch_loss.push_back(loss);
    if (E.rows() > 0) out.metrics.epoch_accuracy.push_back(accuracy_of(E * theta));
  }
  out.model.theta.assign(theta.data(), theta.data() + d);
  out.metrics.final_accuracy = E.rows() > 0 ? accuracy_of(E * theta) : 0.0;
  return out;
}

RmTrainResult train_pointwise_rm(std::span<const PointwiseRow> rows,
                                 std::span<const PreferencePair> eval, const FeatureExtractor& fx) {
  if (rows.empty()) fail(ErrorKind::InvalidInput, "train_pointwise_rm: no rows");
  RmTrainResult out{RewardModel(fx, RewardModel::Kind::Pointwise), {}};
  const auto d = fx.dimension();
  Eigen::MatrixXd X(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(d));
  Eigen::VectorXd y(static_cast<Eigen::Index>(rows.size()));
  std::vector<double> f(d);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    fx.extract(rows[i].prompt, rows[i].variant, f);
    for (std::size_t k = 0; k < d; ++k) X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = f[k];
    const double c = std::clamp(rows[i].ctr, 1e-6, 1.0 - 1e-6);
    y[static_cast<Eigen::Index>(i)] = std::log(c / (1.0 - c));
  }
  const Eigen::VectorXd theta = X.completeOrthogonalDecomposition().solve(y);
  for (Eigen::Index k = 0; k < theta.size(); ++k)
    if (!std::isfinite(theta[k])) fail(ErrorKind::Numerical, "train_pointwise_rm: non-finite solution");
  out.model.theta.assign(theta.data(), theta.data() + theta.size());
  out.metrics.epoch_loss.push_back((X * theta - y).squaredNorm() / static_cast<double>(rows.size()));
  if (!eval.empty()) {
    out.metrics.final_accuracy = evaluate_pairwise_accuracy(out.model, eval);
    out.metrics.epoch_accuracy.push_back(out.metrics.final_accuracy);
  }
  return out;
}

std::string rm_to_json(const RewardModel& rm, const FileHeader& header) {
  nlohmann::ordered_json j;
  j["kind"] = rm.kind == RewardModel::Kind::Pairwise ? "pairwise" : "pointwise";
  j["view"] = view_name(rm.extractor.view());
  j["extractor_hash"] = to_hex(rm.extractor.hash());
  j["vocab_size"] = rm.extractor.vocab_size();
  j["bos"] = rm.extractor.bos();
  j["eos"] = rm.extractor.eos();
  j["short_max"] = rm.extractor.short_max();
  j["long_min"] = rm.extractor.long_min();
  j["theta"] = rm.theta;
  return header_json(header) + j.dump() + "\n";
}

RewardModel rm_from_json(std::string_view text, std::uint64_t expected_extractor_hash) {
  const auto lines = split_lines(text);
  if (lines.size() < 2) fail(ErrorKind::Io, "reward model file: expected header and body");
  const auto j = nlohmann::json::parse(lines[1], nullptr, false);
  if (j.is_discarded()) fail(ErrorKind::Io, "reward model file: malformed body");
  try {
    FeatureExtractor fx(j.at("vocab_size").get<std::size_t>(), j.at("bos").get<TokenId>(),
                        j.at("eos").get<TokenId>(), parse_view(j.at("view").get<std::string>()),
                        j.at("short_max").get<std::size_t>(), j.at("long_min").get<std::size_t>());
    const auto stored = std::stoull(j.at("extractor_hash").get<std::string>(), nullptr, 16);
    if (stored != fx.hash()) fail(ErrorKind::Io, "reward model file: extractor hash does not match its shape");
    if (expected_extractor_hash != 0 && stored != expected_extractor_hash)
      fail(ErrorKind::StaleArtifact, "reward model was trained with a different feature extractor");
    const auto kind = j.at("kind").get<std::string>() == "pointwise" ? RewardModel::Kind::Pointwise
                                                                      : RewardModel::Kind::Pairwise;
    RewardModel rm(fx, kind);
    rm.theta = j.at("theta").get<std::vector<double>>();
    if (rm.theta.size() != fx.dimension()) fail(ErrorKind::Io, "reward model file: theta has wrong size");
    return rm;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Io, std::string("reward model file: ") + e.what());
  }
}

std::string rm_metrics_csv(const RmTrainMetrics& m, const FileHeader& header) {
  std::string out = header_comment(header);
  out += "epoch,loss,accuracy\n";
  for (std::size_t e = 0; e < m.epoch_loss.size(); ++e) {
    out += std::to_string(e + 1) + "," + format_double(m.epoch_loss[e]) + ",";
    if (e < m.epoch_accuracy.size()) out += format_double(m.epoch_accuracy[e]);
    out += "\n";
  }
  return out;
}

}  // namespace rlpf
