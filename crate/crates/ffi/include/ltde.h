#ifndef LTDE_H
#define LTDE_H

#pragma once

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum LtdeStatus {
  LTDE_STATUS_OK = 0,
  LTDE_STATUS_NULL_POINTER = 1,
  LTDE_STATUS_CONFIG = 2,
  LTDE_STATUS_CAP_EXCEEDED = 3,
  LTDE_STATUS_INVALID_ARGUMENT = 4,
  LTDE_STATUS_BUFFER_TOO_SMALL = 5,
  LTDE_STATUS_INTERNAL = 6,
  LTDE_STATUS_PANIC = 7,
} LtdeStatus;

/**
 * Validated model and its configuration.
 */
typedef struct LtdeModel LtdeModel;

/**
 * Enumerated oracle with the team Q tables of the configured policy.
 */
typedef struct LtdeOracle LtdeOracle;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *ltde_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *ltde_version(void);

/**
 * Parses a TOML experiment config (empty string for the line3 defaults) and
 * validates the model.
 *
 * # Safety
 * `toml` must be a NUL-terminated string and `out` a valid pointer.
 */
enum LtdeStatus ltde_model_new(const char *toml, struct LtdeModel **out);

/**
 * # Safety
 * `model` must come from [`ltde_model_new`] and not be used afterwards.
 */
void ltde_model_free(struct LtdeModel *model);

/**
 * Number of states and agents.
 *
 * # Safety
 * All pointers must be valid.
 */
enum LtdeStatus ltde_model_sizes(const struct LtdeModel *model,
                                 size_t *n_states,
                                 uint32_t *n_agents);

/**
 * Enumerates the joint space and solves the team Q tables of the configured policy.
 *
 * # Safety
 * `model` must be valid and `out` a valid pointer.
 */
enum LtdeStatus ltde_oracle_new(const struct LtdeModel *model, struct LtdeOracle **out);

/**
 * # Safety
 * `oracle` must come from [`ltde_oracle_new`] and not be used afterwards.
 */
void ltde_oracle_free(struct LtdeOracle *oracle);

/**
 * Size of the joint `(mu, h)` space.
 *
 * # Safety
 * Both pointers must be valid.
 */
enum LtdeStatus ltde_oracle_xi_size(const struct LtdeOracle *oracle, size_t *out);

/**
 * Exact `J` of the configured policy.
 *
 * # Safety
 * Both pointers must be valid.
 */
enum LtdeStatus ltde_oracle_j(const struct LtdeOracle *oracle, double *out);

/**
 * Copies `Q_state` (one value per joint index) into `buf`. Fails with
 * `BufferTooSmall` when `len` is below the joint space size.
 *
 * # Safety
 * `buf` must point to `len` writable doubles.
 */
enum LtdeStatus ltde_oracle_team_q(const struct LtdeOracle *oracle,
                                   size_t state,
                                   double *buf,
                                   size_t len);

/**
 * Largest change of `Q_state` between inputs that agree on the `k`-hop window.
 *
 * # Safety
 * Both pointers must be valid.
 */
enum LtdeStatus ltde_oracle_decay_gap(const struct LtdeOracle *oracle,
                                      size_t state,
                                      size_t k,
                                      double *out);

/**
 * Team-level trajectory under the configured policy: `steps` rows of
 * per-state counts written row-major into `counts`.
 *
 * # Safety
 * `counts` must point to `len` writable values.
 */
enum LtdeStatus ltde_simulate(const struct LtdeModel *model,
                              size_t steps,
                              uint64_t seed,
                              uint32_t *counts,
                              size_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LTDE_H */
