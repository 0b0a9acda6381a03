/* Copyright 2026 The RLPF Desk Authors
 * SPDX-License-Identifier: Apache-2.0
 *
 * C interface to the RLPF desk pipeline. All functions return an
 * rlpf_status; on failure the message is kept on the session (or in a
 * thread-local slot when no session exists) until the next call.
 */
#ifndef RLPF_RLPF_H
#define RLPF_RLPF_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#if defined(RLPF_BUILDING_DLL)
#define RLPF_API __declspec(dllexport)
#else
#define RLPF_API __declspec(dllimport)
#endif
#else
#define RLPF_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum rlpf_status {
  RLPF_OK = 0,
  RLPF_ERR_CONFIG = 1,
  RLPF_ERR_INVALID_INPUT = 2,
  RLPF_ERR_MISSING_ARTIFACT = 3,
  RLPF_ERR_STALE_ARTIFACT = 4,
  RLPF_ERR_NUMERICAL = 5,
  RLPF_ERR_DIVERGED = 6,
  RLPF_ERR_IO = 7,
  RLPF_ERR_DESIGN = 8,
  RLPF_ERR_INSUFFICIENT_DATA = 9,
  RLPF_ERR_INTERNAL = 99
} rlpf_status;

typedef struct rlpf_session rlpf_session;

RLPF_API const char* rlpf_version(void);
/* Machine-readable category, e.g. "missing_artifact". */
RLPF_API const char* rlpf_status_name(rlpf_status status);
/* Message of the last failure on this thread outside any session. */
RLPF_API const char* rlpf_last_error(void);

/* config_path may be NULL or empty to use $RLPF_CONFIG. */
RLPF_API rlpf_status rlpf_session_open(const char* config_path, uint64_t seed, const char* workdir,
                                       rlpf_session** out);
RLPF_API void rlpf_session_close(rlpf_session* session);
RLPF_API const char* rlpf_session_last_error(const rlpf_session* session);
/* Hex hash of the canonical configuration. */
RLPF_API const char* rlpf_session_config_hash(const rlpf_session* session);

/* stage is one of simulate, build-data, train-sft, train-rm, train-rlpf,
 * abtest, analyze, report or pipeline. *wrote (optional) is set to 0 when
 * the stage was already up to date. */
RLPF_API rlpf_status rlpf_run_stage(rlpf_session* session, const char* stage, int* wrote);

/* exp(b) - 1. */
RLPF_API double rlpf_relative_risk(double coefficient);
/* Two-sided normal p-value of estimate / se. */
RLPF_API rlpf_status rlpf_wald_p(double estimate, double se, double* p);
/* Global CTR (sum clicks / sum impressions) with its delta-method 95% CI. */
RLPF_API rlpf_status rlpf_global_ctr(const double* clicks, const double* impressions, size_t n, double* estimate,
                                     double* ci_low, double* ci_high);

#ifdef __cplusplus
}
#endif

#endif /* RLPF_RLPF_H */
