#ifndef AEROCAP_H
#define AEROCAP_H

#pragma once

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum AerocapStatus {
  AEROCAP_STATUS_OK = 0,
  AEROCAP_STATUS_NULL_POINTER = 1,
  AEROCAP_STATUS_INVALID_ARGUMENT = 2,
  AEROCAP_STATUS_IO = 3,
  AEROCAP_STATUS_PARSE = 4,
  AEROCAP_STATUS_RUNTIME = 5,
  AEROCAP_STATUS_PANIC = 6,
} AerocapStatus;

typedef enum AerocapMode {
  AEROCAP_MODE_CAPTURE = 0,
  AEROCAP_MODE_ESCAPE = 1,
  AEROCAP_MODE_IMPACT = 2,
  /**
   * The trial could not be flown.
   */
  AEROCAP_MODE_FAILED = -1,
} AerocapMode;

/**
 * Campaign settings resolved from a run configuration.
 */
typedef struct AerocapConfig AerocapConfig;

/**
 * A trained mode-indicator model.
 */
typedef struct AerocapModel AerocapModel;

/**
 * Result of one trial. Quantities that do not apply are NaN.
 */
typedef struct AerocapTrialResult {
  uint64_t trial;
  enum AerocapMode mode;
  /**
   * Apoapsis radius [m].
   */
  double r_a;
  /**
   * Apoapsis error [m], captures only.
   */
  double r_a_error;
  uint32_t corrected_cycles;
  /**
   * Time guidance first enabled [s].
   */
  double enabled_at;
} AerocapTrialResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *aerocap_version(void);

/**
 * Copies the last error message of this thread into `buf` (truncated,
 * always NUL-terminated when `len > 0`). Returns the full message length
 * in bytes, or 0 when there is no error.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t aerocap_last_error(char *buf, size_t len);

/**
 * Parses a TOML run configuration held in memory.
 *
 * # Safety
 * `toml` must be a NUL-terminated string and `out` a valid pointer.
 */
enum AerocapStatus aerocap_config_from_toml(const char *toml, struct AerocapConfig **out);

/**
 * Loads a TOML run configuration from a file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum AerocapStatus aerocap_config_load(const char *path, struct AerocapConfig **out);

/**
 * Built-in near-escape defaults with the given master seed.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum AerocapStatus aerocap_config_default(uint64_t seed, struct AerocapConfig **out);

/**
 * # Safety
 * `cfg` must be null or a handle from this library not yet freed.
 */
void aerocap_config_free(struct AerocapConfig *cfg);

/**
 * Loads a model written by `aerocap train`.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum AerocapStatus aerocap_model_load(const char *path, struct AerocapModel **out);

/**
 * # Safety
 * `model` must be null or a handle from this library not yet freed.
 */
void aerocap_model_free(struct AerocapModel *model);

/**
 * Length of the normalized energy vector the model expects, or 0 for null.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t aerocap_model_input_dim(const struct AerocapModel *model);

/**
 * Capture, escape and impact probabilities of a normalized energy vector.
 *
 * # Safety
 * `x` must point to `n` doubles and `out` to 3 writable doubles.
 */
enum AerocapStatus aerocap_model_mode_probabilities(const struct AerocapModel *model,
                                                    const double *x,
                                                    size_t n,
                                                    double *out);

/**
 * Flies one dispersed trial. `variant` is one of `fnpag`, `pipag`,
 * `fnpag-noff`, `pipag-noff`; the πPAG variants need a model.
 *
 * # Safety
 * `cfg` must be a live handle, `model` null or a live handle, `variant` a
 * NUL-terminated string and `out` a valid pointer.
 */
enum AerocapStatus aerocap_run_trial(const struct AerocapConfig *cfg,
                                     const char *variant,
                                     const struct AerocapModel *model,
                                     uint64_t trial,
                                     struct AerocapTrialResult *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* AEROCAP_H */
