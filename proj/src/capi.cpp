// Copyright 2026 The RLPF Desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "rlpf/rlpf.h"

#include <exception>
#include <memory>
#include <new>
#include <optional>
#include <string>

#include "rlpf/error.hpp"
#include "rlpf/pipeline.hpp"
#include "rlpf/stats.hpp"

struct rlpf_session {
  std::optional<rlpf::Session> session;
  std::string error;
};

namespace {

thread_local std::string g_error;

template <class F>
rlpf_status guarded(std::string& error, F&& f) {
  try {
    f();
    error.clear();
    return RLPF_OK;
  } catch (const rlpf::Error& e) {
    error = e.what();
    return static_cast<rlpf_status>(e.kind());
  } catch (const std::bad_alloc&) {
    error = "out of memory";
  } catch (const std::exception& e) {
    error = e.what();
  } catch (...) {
    error = "unknown error";
  }
  return RLPF_ERR_INTERNAL;
}

}  // namespace

extern "C" {

const char* rlpf_version(void) { return RLPF_VERSION; }

const char* rlpf_status_name(rlpf_status status) {
  if (status == RLPF_OK) return "ok";
  if (status == RLPF_ERR_INTERNAL) return "internal";
  if (status >= RLPF_ERR_CONFIG && status <= RLPF_ERR_INSUFFICIENT_DATA)
    return rlpf::to_string(static_cast<rlpf::ErrorKind>(status));
  return "unknown";
}

const char* rlpf_last_error(void) { return g_error.c_str(); }

rlpf_status rlpf_session_open(const char* config_path, uint64_t seed, const char* workdir, rlpf_session** out) {
  if (!out) {
    g_error = "rlpf_session_open: out is null";
    return RLPF_ERR_INVALID_INPUT;
  }
  *out = nullptr;
  if (!workdir || !*workdir) {
    g_error = "rlpf_session_open: workdir is required";
    return RLPF_ERR_INVALID_INPUT;
  }
  return guarded(g_error, [&] {
    auto s = std::make_unique<rlpf_session>();
    s->session.emplace(rlpf::Session::open(config_path ? config_path : "", seed, workdir));
    *out = s.release();
  });
}

void rlpf_session_close(rlpf_session* session) { delete session; }

const char* rlpf_session_last_error(const rlpf_session* session) {
  return session ? session->error.c_str() : g_error.c_str();
}

const char* rlpf_session_config_hash(const rlpf_session* session) {
  static thread_local std::string hash;
  hash = session && session->session ? session->session->config().hash_hex() : "";
  return hash.c_str();
}

rlpf_status rlpf_run_stage(rlpf_session* session, const char* stage, int* wrote) {
  if (!session || !session->session) {
    g_error = "rlpf_run_stage: session is null";
    return RLPF_ERR_INVALID_INPUT;
  }
  if (!stage) {
    session->error = "rlpf_run_stage: stage is null";
    return RLPF_ERR_INVALID_INPUT;
  }
  return guarded(session->error, [&] {
    const bool w = session->session->run(stage);
    if (wrote) *wrote = w ? 1 : 0;
  });
}

double rlpf_relative_risk(double coefficient) { return rlpf::stats::relative_risk(coefficient); }

rlpf_status rlpf_wald_p(double estimate, double se, double* p) {
  if (!p) {
    g_error = "rlpf_wald_p: p is null";
    return RLPF_ERR_INVALID_INPUT;
  }
  return guarded(g_error, [&] { *p = rlpf::stats::wald_test(estimate, se).p; });
}

rlpf_status rlpf_global_ctr(const double* clicks, const double* impressions, size_t n, double* estimate,
                            double* ci_low, double* ci_high) {
  if (!clicks || !impressions || !estimate) {
    g_error = "rlpf_global_ctr: null argument";
    return RLPF_ERR_INVALID_INPUT;
  }
  return guarded(g_error, [&] {
    const auto r = rlpf::stats::global_ctr({clicks, n}, {impressions, n});
    *estimate = r.estimate;
    if (ci_low) *ci_low = r.ci_low;
    if (ci_high) *ci_high = r.ci_high;
  });
}

}  // extern "C"
