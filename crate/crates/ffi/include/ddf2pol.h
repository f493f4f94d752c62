/* Generated by cbindgen from src/lib.rs; do not edit. */

#ifndef DDF2POL_H
#define DDF2POL_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Real descriptor channels per pixel.
 */
#define DDF2POL_NUM_DESCRIPTORS 12

/**
 * Complex channels per pixel.
 */
#define DDF2POL_NUM_COMPLEX 6

/**
 * Result of a call.
 */
typedef enum Ddf2polStatus {
  DDF2POL_STATUS_OK = 0,
  DDF2POL_STATUS_NULL_POINTER = 1,
  DDF2POL_STATUS_INVALID_ARGUMENT = 2,
  DDF2POL_STATUS_SHAPE = 3,
  DDF2POL_STATUS_USAGE = 4,
  DDF2POL_STATUS_FORMAT = 5,
  DDF2POL_STATUS_DATA = 6,
  DDF2POL_STATUS_SPEC = 7,
  DDF2POL_STATUS_INCOMPATIBLE = 8,
  DDF2POL_STATUS_IO = 9,
  DDF2POL_STATUS_IMAGE = 10,
  DDF2POL_STATUS_PANIC = 11,
} Ddf2polStatus;

/**
 * Opaque model handle.
 */
typedef struct Ddf2polModel Ddf2polModel;

/**
 * Summary accuracies in [0, 1].
 */
typedef struct Ddf2polMetrics {
  double overall_accuracy;
  double average_accuracy;
  double kappa;
} Ddf2polMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the calling thread's last error message into `buf` (NUL
 * terminated, truncated to `len`) and returns the full message length.
 *
 * # Safety
 * `buf` must be null or valid for `len` bytes.
 */
size_t ddf2pol_last_error(char *buf, size_t len);

/**
 * Creates a freshly initialized model for odd `patch` >= 5 and
 * `num_classes` >= 2.
 *
 * # Safety
 * `out` must be valid for one write.
 */
enum Ddf2polStatus ddf2pol_model_new(size_t patch,
                                     size_t num_classes,
                                     uint64_t seed,
                                     struct Ddf2polModel **out);

/**
 * Reads a checkpoint file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` valid for one write.
 */
enum Ddf2polStatus ddf2pol_model_load(const char *path, struct Ddf2polModel **out);

/**
 * Writes a checkpoint file.
 *
 * # Safety
 * `model` must come from this library; `path` must be NUL-terminated.
 */
enum Ddf2polStatus ddf2pol_model_save(const struct Ddf2polModel *model, const char *path);

/**
 * Releases a model; null is ignored.
 *
 * # Safety
 * `model` must be null or a handle not yet freed.
 */
void ddf2pol_model_free(struct Ddf2polModel *model);

/**
 * Number of stored values, batch-norm running statistics included.
 * Zero for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t ddf2pol_model_param_count(const struct Ddf2polModel *model);

/**
 * Patch side length; zero for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t ddf2pol_model_patch(const struct Ddf2polModel *model);

/**
 * Number of classes; zero for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t ddf2pol_model_num_classes(const struct Ddf2polModel *model);

/**
 * Inference logits for `batch` patches.
 *
 * `real` holds `batch*patch*patch*12` normalized descriptors, `complex_re`
 * and `complex_im` hold `batch*patch*patch*6` values each, and `logits`
 * receives `batch*num_classes` values.
 *
 * # Safety
 * Each buffer must be valid for the lengths above.
 */
enum Ddf2polStatus ddf2pol_model_predict(const struct Ddf2polModel *model,
                                         size_t batch,
                                         const double *real,
                                         const double *complex_re,
                                         const double *complex_im,
                                         double *logits);

/**
 * The 12 real descriptors of one coherency matrix given as
 * `t11, t22, t33, re t12, im t12, re t13, im t13, re t23, im t23`.
 *
 * # Safety
 * `t` must hold 9 values and `out` room for 12.
 */
enum Ddf2polStatus ddf2pol_pixel_descriptors(const double *t, double *out);

/**
 * Accuracy metrics of a `k`x`k` confusion matrix (rows: reference).
 * `per_class` may be null; otherwise it receives `k` recalls.
 *
 * # Safety
 * `counts` must hold `k*k` values, `out` be valid for one write and
 * `per_class` be null or hold `k` values.
 */
enum Ddf2polStatus ddf2pol_metrics(size_t k,
                                   const uint64_t *counts,
                                   struct Ddf2polMetrics *out,
                                   double *per_class);

/**
 * Library version as a static NUL-terminated string.
 */
const char *ddf2pol_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DDF2POL_H */
