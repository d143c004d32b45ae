#ifndef ROBUST_MEAN_H
#define ROBUST_MEAN_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible function.
 */
typedef enum RmStatus {
  RM_STATUS_OK = 0,
  RM_STATUS_NULL_POINTER = 1,
  RM_STATUS_INVALID_ARGUMENT = 2,
  /**
   * Mismatched shapes or other broken preconditions.
   */
  RM_STATUS_CONTRACT = 3,
  /**
   * A numeric parameter is out of range.
   */
  RM_STATUS_PARAMETER = 4,
  /**
   * A file could not be read or parsed.
   */
  RM_STATUS_DATA = 5,
  RM_STATUS_BUFFER_TOO_SMALL = 6,
  RM_STATUS_PANIC = 7,
} RmStatus;

/**
 * Estimator settings, initialized to the library defaults.
 */
typedef struct RmConfig RmConfig;

/**
 * A dataset of `n` points in dimension `d`.
 */
typedef struct RmPointSet RmPointSet;

/**
 * The result of one estimation run.
 */
typedef struct RmTrace RmTrace;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread into `buf` as a
 * NUL-terminated string, truncating if needed. Returns the full message
 * length plus one, so a caller can size a buffer by passing `len = 0`.
 *
 * # Safety
 * `buf` must be valid for `len` bytes, or null when `len` is 0.
 */
size_t rm_last_error_message(char *buf, size_t len);

/**
 * Builds a point set from `n * d` row-major values.
 *
 * # Safety
 * `data` must point to `n * d` readable doubles; `out` must be writable.
 */
enum RmStatus rm_points_new(const double *data, size_t n, size_t d, struct RmPointSet **out);

/**
 * Reads a CSV file with one point per row.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum RmStatus rm_points_from_csv(const char *path, bool header, struct RmPointSet **out);

/**
 * # Safety
 * `points` must be null or a handle from this library, not yet freed.
 */
void rm_points_free(struct RmPointSet *points);

/**
 * Number of points, or 0 for a null handle.
 *
 * # Safety
 * `points` must be null or a live handle.
 */
size_t rm_points_n(const struct RmPointSet *points);

/**
 * Dimension, or 0 for a null handle.
 *
 * # Safety
 * `points` must be null or a live handle.
 */
size_t rm_points_d(const struct RmPointSet *points);

/**
 * A config with the library defaults. Never returns null.
 */
struct RmConfig *rm_config_new(void);

/**
 * # Safety
 * `cfg` must be null or a handle from [`rm_config_new`], not yet freed.
 */
void rm_config_free(struct RmConfig *cfg);

/**
 * Sets one numeric field by name. Keys: `p`, `tau`, `c1`, `sigma`,
 * `eps_check`, `final_threshold`, `c2_init`, `tol_feas`, `max_sweeps`,
 * `polish_rounds`, `eta`, `rw_delta`, `rw_rounds`, `spectral_tol`, `spectral_max_iters`,
 * `allow_breakdown_violation` (nonzero is true). Ranges are checked when the
 * config is used.
 *
 * # Safety
 * `cfg` must be a live handle and `key` a NUL-terminated string.
 */
enum RmStatus rm_config_set(struct RmConfig *cfg, const char *key, double value);

/**
 * Runs the estimator.
 *
 * # Safety
 * `points` and `cfg` must be live handles; `out` must be writable.
 */
enum RmStatus rm_estimate(const struct RmPointSet *points,
                          const struct RmConfig *cfg,
                          struct RmTrace **out);

/**
 * # Safety
 * `trace` must be null or a handle from [`rm_estimate`], not yet freed.
 */
void rm_trace_free(struct RmTrace *trace);

/**
 * Copies the estimate (`d` values) into `out`.
 *
 * # Safety
 * `trace` must be a live handle and `out` valid for `len` doubles.
 */
enum RmStatus rm_trace_estimate(const struct RmTrace *trace, double *out, size_t len);

/**
 * Copies the final outlier indicator (`n` values) into `out`.
 *
 * # Safety
 * `trace` must be a live handle and `out` valid for `len` doubles.
 */
enum RmStatus rm_trace_outlier_indicator(const struct RmTrace *trace, double *out, size_t len);

/**
 * Number of outer iterations run, or 0 for a null handle.
 *
 * # Safety
 * `trace` must be null or a live handle.
 */
size_t rm_trace_iterations(const struct RmTrace *trace);

/**
 * Why the iteration stopped: 0 iteration budget reached, 1 radius stopped
 * shrinking, 2 solver failure, 3 empty support; -1 for a null handle.
 *
 * # Safety
 * `trace` must be null or a live handle.
 */
int32_t rm_trace_termination(const struct RmTrace *trace);

/**
 * Library version as a static NUL-terminated string.
 */
const char *rm_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ROBUST_MEAN_H */
