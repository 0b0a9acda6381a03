// Copyright 2026 The RLPF Desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "rlpf/error.hpp"

namespace rlpf {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::Config: return "config";
    case ErrorKind::InvalidInput: return "invalid_input";
    case ErrorKind::MissingArtifact: return "missing_artifact";
    case ErrorKind::StaleArtifact: return "stale_artifact";
    case ErrorKind::Numerical: return "numerical";
    case ErrorKind::Diverged: return "training_diverged";
    case ErrorKind::Io: return "io";
    case ErrorKind::Design: return "design";
    case ErrorKind::InsufficientData: return "insufficient_data";
  }
  return "unknown";
}

void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

}  // namespace rlpf
