// Copyright 2026 The RLPF Desk Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace rlpf {

/// Error categories. They map one-to-one onto the C API status codes and the
/// CLI exit codes, so keep the order stable.
enum class ErrorKind {
  Config = 1,
  InvalidInput = 2,
  MissingArtifact = 3,
  StaleArtifact = 4,
  Numerical = 5,
  Diverged = 6,
  Io = 7,
  Design = 8,
  InsufficientData = 9,
};

const char* to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& what);

}  // namespace rlpf
