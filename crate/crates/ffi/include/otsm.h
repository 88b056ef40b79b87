#ifndef OTSM_H
#define OTSM_H

#pragma once

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stddef.h>
#include <stdint.h>

typedef enum OtsmStatus {
  OTSM_STATUS_OK = 0,
  OTSM_STATUS_NULL_POINTER = 1,
  OTSM_STATUS_INVALID_ARGUMENT = 2,
  OTSM_STATUS_CONFIG = 3,
  OTSM_STATUS_UNSUPPORTED = 4,
  OTSM_STATUS_SIZE_LIMIT = 5,
  OTSM_STATUS_NUMERIC = 6,
  OTSM_STATUS_IO = 7,
  OTSM_STATUS_PANIC = 8,
} OtsmStatus;

/**
 * Opaque configuration handle.
 */
typedef struct OtsmConfig OtsmConfig;

/**
 * Interleaved complex sample, layout-compatible with `double _Complex`.
 */
typedef struct OtsmComplex {
  double re;
  double im;
} OtsmComplex;

typedef struct OtsmBerPoint {
  double snr_db;
  uint64_t bits;
  uint64_t bit_errors;
  double ber;
  uint64_t frames;
  uint64_t frame_errors;
} OtsmBerPoint;

typedef struct OtsmBoundPoint {
  double snr_db;
  double abep;
  double cond_pep;
  double chiani;
  double high_snr;
  uint32_t kappa;
} OtsmBoundPoint;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread into `buf` (NUL-terminated,
 * truncated to `len - 1` bytes) and returns the full message length.
 *
 * # Safety
 * `buf` must be null or valid for `len` bytes.
 */
uintptr_t otsm_last_error(char *buf, uintptr_t len);

/**
 * Library version as a static NUL-terminated string.
 */
const char *otsm_version(void);

/**
 * Parses a TOML configuration. `toml` may be null for all defaults.
 *
 * # Safety
 * `toml` must be null or a NUL-terminated string; `out` must be valid for a write.
 */
enum OtsmStatus otsm_config_new(const char *toml, struct OtsmConfig **out);

/**
 * Applies a `key=value` override. The handle is unchanged on error.
 *
 * # Safety
 * `cfg` must come from `otsm_config_new`; `kv` must be NUL-terminated.
 */
enum OtsmStatus otsm_config_set(struct OtsmConfig *cfg, const char *kv);

/**
 * # Safety
 * `cfg` must be null or come from `otsm_config_new`, and not be used afterwards.
 */
void otsm_config_free(struct OtsmConfig *cfg);

/**
 * Frame sizes: `nm` grid entries, `data` symbols, `samples` per frame with
 * prefix, `bits` per frame. Any output pointer may be null.
 *
 * # Safety
 * `cfg` must come from `otsm_config_new`; non-null outputs must be writable.
 */
enum OtsmStatus otsm_config_sizes(const struct OtsmConfig *cfg,
                                  uintptr_t *nm,
                                  uintptr_t *data,
                                  uintptr_t *samples,
                                  uintptr_t *bits);

/**
 * Orthonormal Walsh–Hadamard transform in place; `len` must be a power of two.
 *
 * # Safety
 * `data` must be valid for `len` elements.
 */
enum OtsmStatus otsm_fwht(struct OtsmComplex *data, uintptr_t len);

/**
 * Maps `data_len` data symbols onto the grid and produces the time frame
 * with cyclic prefix (`out_len` samples).
 *
 * # Safety
 * Pointers must be valid for the given lengths.
 */
enum OtsmStatus otsm_modulate(const struct OtsmConfig *cfg,
                              const struct OtsmComplex *data,
                              uintptr_t data_len,
                              struct OtsmComplex *out,
                              uintptr_t out_len);

/**
 * Inverse of [`otsm_modulate`]: `in_len` prefixed samples to the full
 * `out_len = NM` grid, row-major.
 *
 * # Safety
 * Pointers must be valid for the given lengths.
 */
enum OtsmStatus otsm_demodulate(const struct OtsmConfig *cfg,
                                const struct OtsmComplex *samples,
                                uintptr_t in_len,
                                struct OtsmComplex *out,
                                uintptr_t out_len);

/**
 * Monte-Carlo BER at one SNR with the handle's settings.
 *
 * # Safety
 * `cfg` must come from `otsm_config_new`; `out` must be writable.
 */
enum OtsmStatus otsm_run_point(const struct OtsmConfig *cfg,
                               double snr_db,
                               struct OtsmBerPoint *out);

/**
 * Analytical bounds at one SNR with the handle's `[bound]` settings.
 *
 * # Safety
 * `cfg` must come from `otsm_config_new`; `out` must be writable.
 */
enum OtsmStatus otsm_bound_point(const struct OtsmConfig *cfg,
                                 double snr_db,
                                 struct OtsmBoundPoint *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* OTSM_H */
