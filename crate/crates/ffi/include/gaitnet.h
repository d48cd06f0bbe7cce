/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#ifndef GAITNET_H
#define GAITNET_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Signals per timestep.
#define GAITNET_NUM_CHANNELS 18

typedef enum GaitnetStatus {
  GAITNET_STATUS_OK = 0,
  GAITNET_STATUS_NULL_ARGUMENT = 1,
  GAITNET_STATUS_INVALID_ARGUMENT = 2,
  GAITNET_STATUS_IO = 3,
  GAITNET_STATUS_CHECKPOINT = 4,
  GAITNET_STATUS_DATA = 5,
  GAITNET_STATUS_NO_FULL_WINDOWS = 6,
  GAITNET_STATUS_PANIC = 7,
} GaitnetStatus;

typedef enum GaitnetTask {
  GAITNET_TASK_DETECTION = 0,
  GAITNET_TASK_SEVERITY = 1,
} GaitnetTask;

// A trained network with its input normalization.
typedef struct GaitnetModel GaitnetModel;

// Ratios in [0, 1]; NaN where the denominator is zero.
typedef struct GaitnetDetectionMetrics {
  double sensitivity;
  double specificity;
  double accuracy;
} GaitnetDetectionMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *gaitnet_version(void);

// Message of the last failed call on this thread, or NULL after a
// successful call. Valid until the next gaitnet call on the same thread.
const char *gaitnet_last_error_message(void);

// Loads a checkpoint written by `gaitnet cv`.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum GaitnetStatus gaitnet_model_load(const char *path, struct GaitnetModel **out);

// Releases a model. NULL is ignored.
//
// # Safety
// `model` must come from [`gaitnet_model_load`] and not be used afterwards.
void gaitnet_model_free(struct GaitnetModel *model);

// # Safety
// `model` must be a live handle and `out` a valid pointer.
enum GaitnetStatus gaitnet_model_task(const struct GaitnetModel *model, enum GaitnetTask *out);

// Samples per window the model expects.
//
// # Safety
// `model` must be a live handle and `out` a valid pointer.
enum GaitnetStatus gaitnet_model_window_len(const struct GaitnetModel *model, size_t *out);

// Probabilities per window: 1 for detection, 5 for severity.
//
// # Safety
// `model` must be a live handle and `out` a valid pointer.
enum GaitnetStatus gaitnet_model_output_units(const struct GaitnetModel *model, size_t *out);

// Scores `count` windows of `window_len x 18` raw samples each. Writes
// `count * output_units` probabilities to `out`; `out_len` must match.
//
// # Safety
// `windows` must hold `count * window_len * 18` doubles and `out` must hold
// `out_len` doubles.
enum GaitnetStatus gaitnet_predict_windows(const struct GaitnetModel *model,
                                           const double *windows,
                                           size_t count,
                                           double *out,
                                           size_t out_len);

// Classifies one walk of `timesteps` rows by voting over its windows.
//
// `label` receives 0 (control) or 1 (Parkinson) for detection, or the
// severity class minus one for severity. `votes` receives the window count
// per label and must hold `output_units` entries, or 2 for detection.
// Walks shorter than one window fail with `GAITNET_STATUS_NO_FULL_WINDOWS`.
//
// # Safety
// `samples` must hold `timesteps * 18` doubles, `votes` must hold
// `votes_len` entries and `label` must be valid.
enum GaitnetStatus gaitnet_classify_walk(const struct GaitnetModel *model,
                                         const double *samples,
                                         size_t timesteps,
                                         size_t stride,
                                         size_t *label,
                                         size_t *votes,
                                         size_t votes_len);

// Reads a gaitpdb walk file into a newly allocated `[timesteps][18]`
// buffer. Free it with [`gaitnet_samples_free`].
//
// # Safety
// `path` must be a NUL-terminated string; `out_samples` and
// `out_timesteps` must be valid pointers.
enum GaitnetStatus gaitnet_walk_file_read(const char *path,
                                          double **out_samples,
                                          size_t *out_timesteps);

// Releases a buffer from [`gaitnet_walk_file_read`]. NULL is ignored.
//
// # Safety
// `samples` and `timesteps` must be exactly what the read returned.
void gaitnet_samples_free(double *samples, size_t timesteps);

// Maps a total UPDRS score (0..=176) to severity class 1..=5.
//
// # Safety
// `out` must be a valid pointer.
enum GaitnetStatus gaitnet_updrs_to_class(int64_t updrs_total, uint8_t *out);

// Sensitivity, specificity and accuracy from a binary confusion matrix
// with Parkinson as the positive class.
//
// # Safety
// `out` must be a valid pointer.
enum GaitnetStatus gaitnet_detection_metrics(uint64_t tp,
                                             uint64_t fn_,
                                             uint64_t tn,
                                             uint64_t fp,
                                             struct GaitnetDetectionMetrics *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GAITNET_H */
