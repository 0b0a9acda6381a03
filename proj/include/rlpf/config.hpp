// Copyright 2026 The RLPF Desk Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>

namespace rlpf {

/// Flat key=value configuration with namespaced keys (market.*, filters.*,
/// rm.*, ppo.*, ab.*, stats.*). Lines starting with '#' are comments.
/// Missing keys fall back to the defaults supplied at the call site.
class Config {
 public:
  Config() = default;

  static Config parse(std::string_view text);
  static Config load(const std::filesystem::path& path);

  void set(std::string key, std::string value);
  bool has(std::string_view key) const;

  std::string get_string(std::string_view key, std::string_view fallback) const;
  double get_double(std::string_view key, double fallback) const;
  std::int64_t get_int(std::string_view key, std::int64_t fallback) const;
  bool get_bool(std::string_view key, bool fallback) const;

  /// Sorted "key=value\n" lines; the hash is taken over this text, so
  /// comments, ordering and whitespace do not change it.
  std::string canonical() const;
  std::uint64_t hash() const;
  std::string hash_hex() const;

  const std::map<std::string, std::string, std::less<>>& entries() const {
    return entries_;
  }

 private:
  std::map<std::string, std::string, std::less<>> entries_;
};

std::string to_hex(std::uint64_t value);

}  // namespace rlpf
