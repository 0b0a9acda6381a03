// Copyright 2026 The RLPF Desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "rlpf/policy_model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>

#include <json.hpp>

#include "rlpf/error.hpp"

namespace rlpf {
namespace {

void softmax_inplace(std::vector<double>& z) {
  const double m = *std::max_element(z.begin(), z.end());
  double s = 0.0;
  for (auto& v : z) {
    v = std::exp(v - m);
    s += v;
  }
  for (auto& v : z) v /= s;
}

}  // namespace

PolicyModel::PolicyModel(std::size_t vocab_size, TokenId bos, TokenId eos, int order,
                         std::size_t max_len, std::uint64_t vocab_hash)
    : vocab_size_(vocab_size), bos_(bos), eos_(eos), order_(order), max_len_(max_len),
      vocab_hash_(vocab_hash) {
  if (vocab_size == 0) fail(ErrorKind::Config, "policy vocabulary is empty");
  if (bos >= vocab_size || eos >= vocab_size)
    fail(ErrorKind::Config, "policy BOS/EOS ids out of range");
  if (order < 0 || order > 3) fail(ErrorKind::Config, "policy order must lie in [0, 3]");
  if (max_len == 0) fail(ErrorKind::Config, "policy max_len must be >= 1");
  rows_ = 1;
  for (int k = 0; k < order; ++k) rows_ *= vocab_size;
  params_.assign(rows_ * vocab_size + 2 * vocab_size * vocab_size, 0.0);
}

PolicyModel PolicyModel::for_vocab(const Vocabulary& vocab, int order, std::size_t max_len) {
  return PolicyModel(vocab.size(), vocab.bos(), vocab.eos(), order, max_len, vocab.hash());
}

std::size_t PolicyModel::table_offset(std::span<const TokenId> context, TokenId v) const {
  if (context.size() != static_cast<std::size_t>(order_))
    fail(ErrorKind::InvalidInput, "context length must equal the model order");
  std::size_t row = 0;
  for (TokenId t : context) row = row * vocab_size_ + t;
  return row * vocab_size_ + v;
}

std::size_t PolicyModel::prompt_offset(TokenId u, TokenId v) const {
  return rows_ * vocab_size_ + static_cast<std::size_t>(u) * vocab_size_ + v;
}

std::size_t PolicyModel::align_offset(TokenId a, TokenId v) const {
  return (rows_ + vocab_size_ + a) * vocab_size_ + v;
}

TokenId PolicyModel::aligned(const TokenSequence& prompt, std::size_t j) const {
  return j < prompt.ids.size() ? prompt.ids[j] : eos_;
}

void PolicyModel::advance(const TokenSequence& prompt, std::size_t& j, TokenId emitted) const {
  const auto& x = prompt.ids;
  if (j < x.size() && emitted == x[j])
    j += 1;
  else if (j + 1 < x.size() && emitted == x[j + 1])
    j += 2;
}

bool PolicyModel::same_shape(const PolicyModel& o) const {
  return vocab_size_ == o.vocab_size_ && bos_ == o.bos_ && eos_ == o.eos_ && order_ == o.order_ &&
         max_len_ == o.max_len_;
}

void PolicyModel::check_ids(const TokenSequence& s, const char* what) const {
  for (TokenId t : s.ids)
    if (t >= vocab_size_)
      fail(ErrorKind::InvalidInput, std::string(what) + ": token id " + std::to_string(t) +
                                        " out of range for vocabulary of " + std::to_string(vocab_size_));
}

std::vector<double> PolicyModel::prompt_bag(const TokenSequence& prompt) const {
  std::vector<double> bag(vocab_size_, 0.0);
  if (prompt.ids.empty()) return bag;
  const double w = 1.0 / static_cast<double>(prompt.ids.size());
  for (TokenId t : prompt.ids) bag[t] += w;
  return bag;
}

std::size_t PolicyModel::context_row(std::span<const TokenId> body, std::size_t pos) const {
  std::size_t row = 0;
  for (int k = order_; k >= 1; --k) {
    const auto back = static_cast<std::size_t>(k);
    const TokenId t = pos >= back ? body[pos - back] : bos_;
    row = row * vocab_size_ + t;
  }
  return row;
}

void PolicyModel::logits(const std::vector<double>& bag, std::size_t row, TokenId align,
                         std::vector<double>& out) const {
  const std::size_t V = vocab_size_;
  out.assign(params_.begin() + static_cast<std::ptrdiff_t>(row * V),
             params_.begin() + static_cast<std::ptrdiff_t>(row * V + V));
  const double* A = params_.data() + align_offset(align, 0);
  for (std::size_t v = 0; v < V; ++v) out[v] += A[v];
  const double* P = params_.data() + rows_ * V;
  for (std::size_t u = 0; u < V; ++u) {
    if (bag[u] == 0.0) continue;
    const double b = bag[u];
    const double* pu = P + u * V;
    for (std::size_t v = 0; v < V; ++v) out[v] += b * pu[v];
  }
  out[bos_] = -std::numeric_limits<double>::infinity();
}

std::vector<double> PolicyModel::next_distribution(const TokenSequence& prompt,
                                                   std::span<const TokenId> prefix) const {
  check_ids(prompt, "prompt");
  if (prefix.size() >= max_len_) {
    std::vector<double> p(vocab_size_, 0.0);
    p[eos_] = 1.0;
    return p;
  }
  std::size_t j = 0;
  for (TokenId t : prefix) advance(prompt, j, t);
  std::vector<double> z;
  logits(prompt_bag(prompt), context_row(prefix, prefix.size()), aligned(prompt, j), z);
  softmax_inplace(z);
  return z;
}

double PolicyModel::log_prob(const TokenSequence& prompt, const TokenSequence& y) const {
  check_ids(prompt, "prompt");
  check_ids(y, "sequence");
  if (y.length() > max_len_)
    fail(ErrorKind::InvalidInput, "sequence longer than max_len " + std::to_string(max_len_));
  const auto bag = prompt_bag(prompt);
  std::vector<double> z;
  double total = 0.0;
  std::size_t j = 0;
  const std::size_t steps = std::min(y.length() + 1, max_len_);
  for (std::size_t pos = 0; pos < steps; ++pos) {
    const TokenId target = pos < y.length() ? y.ids[pos] : eos_;
    logits(bag, context_row(y.ids, pos), aligned(prompt, j), z);
    const double m = *std::max_element(z.begin(), z.end());
    double s = 0.0;
    for (double v : z) s += std::exp(v - m);
    total += z[target] - m - std::log(s);
    advance(prompt, j, target);
  }
  return total;
}

double PolicyModel::log_prob_grad(const TokenSequence& prompt, const TokenSequence& y,
                                  std::span<double> grad, double scale) const {
  if (grad.size() != params_.size())
    fail(ErrorKind::InvalidInput, "gradient buffer has wrong size");
  check_ids(prompt, "prompt");
  check_ids(y, "sequence");
  if (y.length() > max_len_)
    fail(ErrorKind::InvalidInput, "sequence longer than max_len " + std::to_string(max_len_));
  const std::size_t V = vocab_size_;
  const auto bag = prompt_bag(prompt);
  std::vector<double> z;
  double total = 0.0;
  double* gP = grad.data() + rows_ * V;
  std::size_t j = 0;
  const std::size_t steps = std::min(y.length() + 1, max_len_);
  for (std::size_t pos = 0; pos < steps; ++pos) {
    const TokenId target = pos < y.length() ? y.ids[pos] : eos_;
    const std::size_t row = context_row(y.ids, pos);
    const TokenId align = aligned(prompt, j);
    logits(bag, row, align, z);
    advance(prompt, j, target);
    const double m = *std::max_element(z.begin(), z.end());
    double s = 0.0;
    for (double v : z) s += std::exp(v - m);
    total += z[target] - m - std::log(s);
    // d log p(target) / d logit_v = [v == target] - p_v
    for (std::size_t v = 0; v < V; ++v) z[v] = -std::exp(z[v] - m) / s;
    z[target] += 1.0;
    double* gT = grad.data() + row * V;
    for (std::size_t v = 0; v < V; ++v) gT[v] += scale * z[v];
    double* gA = grad.data() + align_offset(align, 0);
    for (std::size_t v = 0; v < V; ++v) gA[v] += scale * z[v];
    for (std::size_t u = 0; u < V; ++u) {
      if (bag[u] == 0.0) continue;
      const double b = scale * bag[u];
      double* gu = gP + u * V;
      for (std::size_t v = 0; v < V; ++v) gu[v] += b * z[v];
    }
  }
  return total;
}

double PolicyModel::kl_grad(const PolicyModel& ref, const TokenSequence& prompt, const TokenSequence& y,
                            std::span<double> grad, double scale) const {
  if (grad.size() != params_.size())
    fail(ErrorKind::InvalidInput, "gradient buffer has wrong size");
  if (!same_shape(ref)) fail(ErrorKind::InvalidInput, "kl_grad: models do not share a shape");
  check_ids(prompt, "prompt");
  check_ids(y, "sequence");
  if (y.length() > max_len_)
    fail(ErrorKind::InvalidInput, "sequence longer than max_len " + std::to_string(max_len_));
  const std::size_t V = vocab_size_;
  const auto bag = prompt_bag(prompt);
  std::vector<double> p, q;
  double total = 0.0;
  double* gP = grad.data() + rows_ * V;
  std::size_t j = 0;
  // The forced EOS step has KL zero in every parameter.
  const std::size_t steps = std::min(y.length() + 1, max_len_);
  for (std::size_t pos = 0; pos < steps; ++pos) {
    const std::size_t row = context_row(y.ids, pos);
    const TokenId align = aligned(prompt, j);
    logits(bag, row, align, p);
    ref.logits(bag, row, align, q);
    softmax_inplace(p);
    softmax_inplace(q);
    double kl = 0.0;
    for (std::size_t v = 0; v < V; ++v) {
      if (p[v] == 0.0) continue;
      if (q[v] == 0.0) return std::numeric_limits<double>::infinity();
      kl += p[v] * (std::log(p[v]) - std::log(q[v]));
    }
    total += kl;
    // d KL / d logit_v = p_v (log p_v - log q_v - KL)
    for (std::size_t v = 0; v < V; ++v)
      p[v] = p[v] == 0.0 ? 0.0 : scale * p[v] * (std::log(p[v]) - std::log(q[v]) - kl);
    double* gT = grad.data() + row * V;
    double* gA = grad.data() + align_offset(align, 0);
    for (std::size_t v = 0; v < V; ++v) {
      gT[v] += p[v];
      gA[v] += p[v];
    }
    for (std::size_t u = 0; u < V; ++u) {
      if (bag[u] == 0.0) continue;
      double* gu = gP + u * V;
      for (std::size_t v = 0; v < V; ++v) gu[v] += bag[u] * p[v];
    }
    advance(prompt, j, pos < y.length() ? y.ids[pos] : eos_);
  }
  return std::max(total, 0.0);
}

TokenSequence PolicyModel::sample(const TokenSequence& prompt, double temperature, Rng& rng) const {
  check_ids(prompt, "prompt");
  if (!(temperature >= 0.0)) fail(ErrorKind::InvalidInput, "temperature must be >= 0");
  const auto bag = prompt_bag(prompt);
  TokenSequence y;
  std::vector<double> z;
  std::size_t j = 0;
  while (y.length() < max_len_) {
    logits(bag, context_row(y.ids, y.length()), aligned(prompt, j), z);
    TokenId next = 0;
    if (temperature == 0.0) {
      next = static_cast<TokenId>(std::max_element(z.begin(), z.end()) - z.begin());
    } else {
      for (auto& v : z) v /= temperature;
      softmax_inplace(z);
      next = static_cast<TokenId>(rng.categorical(z));
    }
    if (next == eos_) break;
    y.ids.push_back(next);
    advance(prompt, j, next);
  }
  return y;
}

TokenSequence PolicyModel::sample(const TokenSequence& prompt, double temperature,
                                  std::uint64_t seed) const {
  Rng rng(seed);
  return sample(prompt, temperature, rng);
}

double sequence_kl(const PolicyModel& policy, const PolicyModel& ref, const TokenSequence& prompt,
                   const TokenSequence& y) {
  if (policy.vocab_size() != ref.vocab_size() || policy.eos() != ref.eos())
    fail(ErrorKind::InvalidInput, "sequence_kl: models do not share a vocabulary");
  double kl = 0.0;
  const std::size_t steps = y.length() + 1;
  for (std::size_t pos = 0; pos < steps; ++pos) {
    const std::span<const TokenId> prefix(y.ids.data(), pos);
    const auto p = policy.next_distribution(prompt, prefix);
    const auto q = ref.next_distribution(prompt, prefix);
    for (std::size_t v = 0; v < p.size(); ++v) {
      if (p[v] == 0.0) continue;
      if (q[v] == 0.0) return std::numeric_limits<double>::infinity();
      kl += p[v] * (std::log(p[v]) - std::log(q[v]));
    }
  }
  // Rounding can leave a tiny negative sum when the two models agree.
  return std::max(kl, 0.0);
}

SftHyper SftHyper::from(const Config& cfg) {
  SftHyper h;
  h.epochs = cfg.get_int("sft.epochs", h.epochs);
  h.lr = cfg.get_double("sft.lr", h.lr);
  h.momentum = cfg.get_double("sft.momentum", h.momentum);
  h.batch = cfg.get_int("sft.batch", h.batch);
  if (h.epochs < 0 || h.batch < 0 || !(h.lr >= 0.0) || !(h.momentum >= 0.0 && h.momentum < 1.0))
    fail(ErrorKind::Config, "sft hyperparameters out of range");
  return h;
}

double mean_nll(const PolicyModel& policy, const std::vector<SftExample>& examples) {
  if (examples.empty()) return 0.0;
  double s = 0.0;
  for (const auto& ex : examples) s -= policy.log_prob(ex.input, ex.target);
  return s / static_cast<double>(examples.size());
}

SftResult sft_train(PolicyModel& policy, const std::vector<SftExample>& examples,
                    const SftHyper& hyper, std::uint64_t seed) {
  if (examples.empty()) fail(ErrorKind::InvalidInput, "sft_train: no examples");
  SftResult result;
  result.initial_loss = mean_nll(policy, examples);
  if (!std::isfinite(result.initial_loss))
    fail(ErrorKind::Diverged, "sft_train: initial loss is not finite");

  const std::size_t n = examples.size();
  const std::size_t batch = hyper.batch <= 0 ? n : std::min<std::size_t>(n, static_cast<std::size_t>(hyper.batch));
  std::vector<double> grad(policy.num_params());
  std::vector<double> velocity(policy.num_params(), 0.0);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  auto& theta = policy.params();

  for (std::int64_t epoch = 0; epoch < hyper.epochs; ++epoch) {
    if (batch < n)
      for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[static_cast<std::size_t>(rng.below(i))]);
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t end = std::min(n, start + batch);
      std::fill(grad.begin(), grad.end(), 0.0);
      const double w = 1.0 / static_cast<double>(end - start);
      for (std::size_t i = start; i < end; ++i) {
        const auto& ex = examples[order[i]];
        policy.log_prob_grad(ex.input, ex.target, grad, w);
      }
      for (std::size_t k = 0; k < theta.size(); ++k) {
        velocity[k] = hyper.momentum * velocity[k] + hyper.lr * grad[k];
        theta[k] += velocity[k];
      }
    }
    const double loss = mean_nll(policy, examples);
    if (!std::isfinite(loss))
      fail(ErrorKind::Diverged, "sft_train: loss is not finite after epoch " + std::to_string(epoch));
    result.epoch_loss.push_back(loss);
  }
  return result;
}

std::string policy_to_bytes(const PolicyModel& policy, const FileHeader& header) {
  static_assert(std::endian::native == std::endian::little, "checkpoints assume a little-endian host");
  nlohmann::ordered_json shape;
  shape["vocab_size"] = policy.vocab_size();
  shape["bos"] = policy.bos();
  shape["eos"] = policy.eos();
  shape["order"] = policy.order();
  shape["max_len"] = policy.max_len();
  shape["vocab_hash"] = to_hex(policy.vocab_hash());
  shape["n_params"] = policy.num_params();
  std::string out = "RLPFBIN1 " + header_json(header) + shape.dump() + "\n";
  const auto& p = policy.params();
  const std::size_t at = out.size();
  out.resize(at + p.size() * sizeof(double));
  std::memcpy(out.data() + at, p.data(), p.size() * sizeof(double));
  return out;
}

PolicyModel policy_from_bytes(std::string_view bytes, std::uint64_t expected_vocab_hash) {
  if (bytes.rfind("RLPFBIN1 ", 0) != 0) fail(ErrorKind::Io, "policy checkpoint: bad magic");
  const auto eol1 = bytes.find('\n');
  if (eol1 == std::string_view::npos) fail(ErrorKind::Io, "policy checkpoint: truncated header");
  const auto eol2 = bytes.find('\n', eol1 + 1);
  if (eol2 == std::string_view::npos) fail(ErrorKind::Io, "policy checkpoint: truncated shape line");
  const auto shape = nlohmann::json::parse(bytes.substr(eol1 + 1, eol2 - eol1 - 1), nullptr, false);
  if (shape.is_discarded()) fail(ErrorKind::Io, "policy checkpoint: malformed shape line");
  try {
    const std::uint64_t hash = std::stoull(shape.at("vocab_hash").get<std::string>(), nullptr, 16);
    if (expected_vocab_hash != 0 && hash != expected_vocab_hash)
      fail(ErrorKind::StaleArtifact, "policy checkpoint was trained on a different vocabulary");
    PolicyModel m(shape.at("vocab_size").get<std::size_t>(), shape.at("bos").get<TokenId>(),
                  shape.at("eos").get<TokenId>(), shape.at("order").get<int>(),
                  shape.at("max_len").get<std::size_t>(), hash);
    const auto n = shape.at("n_params").get<std::size_t>();
    const auto payload = bytes.substr(eol2 + 1);
    if (n != m.num_params() || payload.size() != n * sizeof(double))
      fail(ErrorKind::Io, "policy checkpoint: parameter block has wrong size");
    std::memcpy(m.params().data(), payload.data(), payload.size());
    for (double v : m.params())
      if (!std::isfinite(v)) fail(ErrorKind::Io, "policy checkpoint: non-finite parameter");
    return m;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Io, std::string("policy checkpoint: ") + e.what());
  }
}

}  // namespace rlpf
