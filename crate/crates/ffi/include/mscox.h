#ifndef MSCOX_H
#define MSCOX_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum MscoxStatus {
  MSCOX_STATUS_OK = 0,
  MSCOX_STATUS_NULL_POINTER = 1,
  MSCOX_STATUS_VALIDATION = 2,
  MSCOX_STATUS_SHAPE = 3,
  MSCOX_STATUS_PARSE = 4,
  MSCOX_STATUS_NON_STATIONARY = 5,
  MSCOX_STATUS_OVERFLOW = 6,
  MSCOX_STATUS_DEGENERATE = 7,
  MSCOX_STATUS_CONFIG = 8,
  MSCOX_STATUS_IO = 9,
  MSCOX_STATUS_SERIALIZATION = 10,
  MSCOX_STATUS_BUFFER_TOO_SMALL = 11,
  MSCOX_STATUS_PANIC = 12,
} MscoxStatus;

/**
 * Opaque curve field `(s1, s2, 2^depth)`.
 */
typedef struct MscoxField MscoxField;

/**
 * Opaque estimation report.
 */
typedef struct MscoxReport MscoxReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failing call on this thread (empty if none). The
 * pointer stays valid until the next failing call on the same thread.
 */
const char *mscox_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *mscox_version(void);

/**
 * Simulates the reference design (tabulated eigenvalues, coupled third
 * operator, default variance profile).
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for a handle.
 */
enum MscoxStatus mscox_simulate_reference(size_t s1,
                                          size_t s2,
                                          uint32_t depth,
                                          size_t truncation,
                                          size_t burn_in,
                                          uint64_t seed,
                                          struct MscoxField **out);

/**
 * Simulates from a JSON run configuration (the CLI schema).
 *
 * # Safety
 * `config_json` must be a NUL-terminated string; `out` must be writable.
 */
enum MscoxStatus mscox_simulate_config(const char *config_json, struct MscoxField **out);

/**
 * Builds a field from `s1·s2·2^depth` row-major values (time fastest).
 *
 * # Safety
 * `values` must point to `len` readable doubles; `out` must be writable.
 */
enum MscoxStatus mscox_field_from_values(size_t s1,
                                         size_t s2,
                                         uint32_t depth,
                                         const double *values,
                                         size_t len,
                                         struct MscoxField **out);

/**
 * Loads a field file; the format follows the extension (`.csv`, `.ndjson`).
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum MscoxStatus mscox_field_load(const char *path, struct MscoxField **out);

/**
 * Saves a field; the format follows the extension.
 *
 * # Safety
 * `field` must be a live handle; `path` a NUL-terminated string.
 */
enum MscoxStatus mscox_field_save(const struct MscoxField *field, const char *path);

/**
 * Writes the dimensions `(s1, s2, number of time points)`.
 *
 * # Safety
 * `field` must be a live handle; the output pointers must be writable.
 */
enum MscoxStatus mscox_field_dims(const struct MscoxField *field,
                                  size_t *s1,
                                  size_t *s2,
                                  size_t *n_time);

/**
 * Copies the values row-major (time fastest) into `buf`.
 *
 * # Safety
 * `field` must be a live handle; `buf` must point to `len` writable doubles.
 */
enum MscoxStatus mscox_field_values(const struct MscoxField *field, double *buf, size_t len);

/**
 * Releases a field handle. Null is ignored.
 *
 * # Safety
 * `field` must be null or a handle not yet freed.
 */
void mscox_field_free(struct MscoxField *field);

/**
 * Detrends, transforms, and estimates the diagonal operator parameters.
 * `factorized` selects the two-parameter domain `θ₃ = −θ₁θ₂`.
 *
 * # Safety
 * `field` must be a live handle; `out` must be writable.
 */
enum MscoxStatus mscox_estimate(const struct MscoxField *field,
                                uint32_t j0,
                                bool factorized,
                                struct MscoxReport **out);

/**
 * Copies the estimated eigenvalues of operator `operator` (1, 2 or 3),
 * ordered by decreasing magnitude, and writes their number to `written`.
 *
 * # Safety
 * `report` must be a live handle; `buf` must point to `len` writable
 * doubles; `written` must be writable.
 */
enum MscoxStatus mscox_report_eigenvalues(const struct MscoxReport *report,
                                          uint32_t operator_,
                                          double *buf,
                                          size_t len,
                                          size_t *written);

/**
 * Writes the report as NDJSON.
 *
 * # Safety
 * `report` must be a live handle; `path` a NUL-terminated string.
 */
enum MscoxStatus mscox_report_save(const struct MscoxReport *report, const char *path);

/**
 * Releases a report handle. Null is ignored.
 *
 * # Safety
 * `report` must be null or a handle not yet freed.
 */
void mscox_report_free(struct MscoxReport *report);

/**
 * Treats `field` as a log-intensity, integrates `exp` over time per cell,
 * scales by `area_scale`, and draws Poisson counts. Writes `s1·s2` counts
 * and means row-major.
 *
 * # Safety
 * `field` must be a live handle; `counts` and `means` must each point to
 * `len` writable elements.
 */
enum MscoxStatus mscox_sample_counts(const struct MscoxField *field,
                                     double area_scale,
                                     uint64_t seed,
                                     uint64_t *counts,
                                     double *means,
                                     size_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MSCOX_H */
