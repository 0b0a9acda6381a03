// Copyright 2026 The RLPF Desk Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string_view>

namespace rlpf {

/// One step of the splitmix64 sequence; advances `state`.
std::uint64_t splitmix64(std::uint64_t& state) noexcept;

/// Child seed for an independent stream. Every stage and every per-advertiser
/// simulation derives its seed from the root this way, never from a shared
/// generator, so results do not depend on evaluation order.
std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t stream) noexcept;
std::uint64_t derive_seed(std::uint64_t parent, std::string_view tag) noexcept;

/// FNV-1a 64-bit.
std::uint64_t fnv1a(std::string_view bytes,
                    std::uint64_t basis = 0xcbf29ce484222325ULL) noexcept;

/// xoshiro256** seeded through splitmix64. All variate generators below are
/// written out here rather than taken from <random>, whose distributions are
/// implementation-defined; this keeps logs bit-identical across toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) noexcept;

  std::uint64_t next() noexcept;

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() noexcept;
  /// Uniform in (0, 1).
  double uniform_open() noexcept;
  /// Uniform integer in [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n) noexcept;
  bool bernoulli(double p) noexcept;
  double normal() noexcept;
  double normal(double mean, double sd) noexcept { return mean + sd * normal(); }
  double lognormal(double log_median, double sigma) noexcept;
  double gamma(double shape) noexcept;
  double beta(double a, double b) noexcept;
  std::uint64_t poisson(double lambda) noexcept;
  /// Exact binomial draw; cost is O(n * min(p, 1 - p)).
  std::uint64_t binomial(std::uint64_t n, double p) noexcept;
  /// Index drawn proportionally to non-negative weights.
  std::size_t categorical(std::span<const double> weights) noexcept;

 private:
  std::uint64_t s_[4];
};

}  // namespace rlpf
