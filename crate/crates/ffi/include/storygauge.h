#ifndef STORYGAUGE_H
#define STORYGAUGE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Number of metrics in every report.
 */
#define SG_METRIC_COUNT 8

/**
 * Result code of every call.
 */
typedef enum {
  SG_STATUS_OK = 0,
  SG_STATUS_NULL_POINTER = 1,
  SG_STATUS_INVALID_UTF8 = 2,
  SG_STATUS_INVALID_ARGUMENT = 3,
  SG_STATUS_MALFORMED_CSV = 4,
  SG_STATUS_TRAINING_FAILED = 5,
  SG_STATUS_NOT_FOUND = 6,
  SG_STATUS_CORRUPT_BUNDLE = 7,
  SG_STATUS_IO = 8,
  /**
   * The requested value is undefined for this input.
   */
  SG_STATUS_UNAVAILABLE = 9,
  SG_STATUS_PANIC = 10,
} SgStatus;

/**
 * Kappa disagreement weights.
 */
typedef enum {
  SG_WEIGHTING_LINEAR = 0,
  SG_WEIGHTING_QUADRATIC = 1,
} SgWeighting;

/**
 * A trained model bundle.
 */
typedef struct SgBundle SgBundle;

/**
 * The quality report of one scored story.
 */
typedef struct SgReport SgReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL after a
 * successful one. Valid until the next call on the same thread.
 */
const char *sg_last_error(void);

/**
 * Library version as a static string.
 */
const char *sg_version(void);

/**
 * Canonical name of metric `index` (0-based), or NULL when out of range.
 */
const char *sg_metric_name(size_t index);

/**
 * Imports a CSV backlog and trains a bundle.
 *
 * `config_toml` may be NULL for defaults. `out_skipped` and `out_rejected`
 * may be NULL; otherwise they receive the import row counts.
 *
 * # Safety
 * `project_id` and `config_toml` must be NUL-terminated strings or NULL,
 * `csv` must point to `csv_len` readable bytes, `out` must be writable.
 */
SgStatus sg_bundle_train_csv(const char *project_id,
                             const uint8_t *csv,
                             size_t csv_len,
                             const char *config_toml,
                             SgBundle **out,
                             size_t *out_skipped,
                             size_t *out_rejected);

/**
 * Loads the latest stored bundle of a project.
 *
 * # Safety
 * String arguments must be NUL-terminated; `out` must be writable.
 */
SgStatus sg_bundle_load(const char *store_root, const char *project_id, SgBundle **out);

/**
 * Stores the bundle under the next free version and updates its version.
 *
 * # Safety
 * `bundle` must be a live handle; `out_version` may be NULL.
 */
SgStatus sg_bundle_save(SgBundle *bundle, const char *store_root, uint64_t *out_version);

/**
 * Version number of a bundle; a freshly trained bundle reports 1.
 *
 * # Safety
 * `bundle` must be a live handle or NULL.
 */
uint64_t sg_bundle_version(const SgBundle *bundle);

/**
 * Quartiles of every metric over the training backlog, as a JSON object
 * keyed by metric name.
 *
 * # Safety
 * `bundle` must be a live handle; `out` must be writable.
 */
SgStatus sg_bundle_percentiles_json(const SgBundle *bundle, char **out);

/**
 * # Safety
 * `bundle` must come from this library and not be used afterwards.
 */
void sg_bundle_free(SgBundle *bundle);

/**
 * Scores free story text against a bundle.
 *
 * # Safety
 * `bundle` must be a live handle, `text` NUL-terminated, `out` writable.
 */
SgStatus sg_score(const SgBundle *bundle, const char *text, SgReport **out);

/**
 * Value of metric `index` in `[0, 1]`. Returns `Unavailable` when the
 * metric could not be computed for this story.
 *
 * # Safety
 * `report` must be a live handle; `out` must be writable.
 */
SgStatus sg_report_value(const SgReport *report, size_t index, double *out);

/**
 * The full report as JSON.
 *
 * # Safety
 * `report` must be a live handle; `out` must be writable.
 */
SgStatus sg_report_json(const SgReport *report, char **out);

/**
 * # Safety
 * `report` must come from this library and not be used afterwards.
 */
void sg_report_free(SgReport *report);

/**
 * Weighted kappa of two raters on the 1-5 scale. `weighting` is an
 * `SgWeighting` value. Returns `Unavailable` when a rater used a single
 * category.
 *
 * # Safety
 * `a` and `b` must each point to `len` readable bytes; `out` writable.
 */
SgStatus sg_weighted_kappa(const uint8_t *a,
                           const uint8_t *b,
                           size_t len,
                           uint32_t weighting,
                           double *out);

/**
 * # Safety
 * `s` must come from this library and not be used afterwards.
 */
void sg_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* STORYGAUGE_H */
