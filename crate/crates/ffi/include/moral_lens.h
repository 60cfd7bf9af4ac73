#ifndef MORAL_LENS_H
#define MORAL_LENS_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum MlStatus {
  ML_STATUS_OK = 0,
  ML_STATUS_NULL_POINTER = 1,
  ML_STATUS_INVALID_ARGUMENT = 2,
  ML_STATUS_IO = 3,
  ML_STATUS_FORMAT = 4,
  ML_STATUS_VALIDATION = 5,
  ML_STATUS_NUMERIC = 6,
  ML_STATUS_PANIC = 7,
} MlStatus;

/**
 * A loaded embedding matrix.
 */
typedef struct MlEmbeddings MlEmbeddings;

/**
 * A loaded classifier head.
 */
typedef struct MlHead MlHead;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or NULL. The pointer is
 * valid until the next call into this library from the same thread.
 */
const char *ml_last_error_message(void);

/**
 * Loads a checkpoint. On success `*out` owns a handle to release with
 * `ml_head_free`.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a writable pointer.
 */
enum MlStatus ml_head_load(const char *path, struct MlHead **out);

/**
 * # Safety
 * `head` must be NULL or a handle from `ml_head_load` not yet freed.
 */
void ml_head_free(struct MlHead *head);

/**
 * Input width of the head, or 0 for a NULL handle.
 *
 * # Safety
 * `head` must be NULL or a live handle.
 */
size_t ml_head_input_dim(const struct MlHead *head);

/**
 * Probability that one embedding is immoral.
 *
 * # Safety
 * `x` must point to `len` floats; `out` must be writable.
 */
enum MlStatus ml_head_predict_proba(const struct MlHead *head,
                                    const float *x,
                                    size_t len,
                                    double *out);

/**
 * Scores `rows` row-major embeddings of width `dim` into `out[rows]`.
 *
 * # Safety
 * `data` must point to `rows * dim` floats and `out` to `rows` doubles.
 */
enum MlStatus ml_head_score_batch(const struct MlHead *head,
                                  const float *data,
                                  size_t rows,
                                  size_t dim,
                                  double *out);

/**
 * Loads a CLEM embedding file. On success `*out` owns a handle to release
 * with `ml_embeddings_free`.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a writable pointer.
 */
enum MlStatus ml_embeddings_open(const char *path, struct MlEmbeddings **out);

/**
 * # Safety
 * `embeddings` must be NULL or a live handle.
 */
size_t ml_embeddings_count(const struct MlEmbeddings *embeddings);

/**
 * # Safety
 * `embeddings` must be NULL or a live handle.
 */
size_t ml_embeddings_dim(const struct MlEmbeddings *embeddings);

/**
 * Copies row `index` into `out[len]`; `len` must equal the embedding width.
 *
 * # Safety
 * `out` must point to `len` writable floats.
 */
enum MlStatus ml_embeddings_row(const struct MlEmbeddings *embeddings,
                                size_t index,
                                float *out,
                                size_t len);

/**
 * # Safety
 * `embeddings` must be NULL or a handle from `ml_embeddings_open` not yet freed.
 */
void ml_embeddings_free(struct MlEmbeddings *embeddings);

/**
 * Savitzky-Golay smoothing of `values[n]` into `out[n]`.
 *
 * # Safety
 * `values` and `out` must each point to `n` doubles.
 */
enum MlStatus ml_savgol_smooth(const double *values,
                               size_t n,
                               size_t window,
                               size_t order,
                               double *out);

/**
 * ROC AUC of `scores[n]` against 0/1 `labels[n]` (1 = immoral).
 *
 * # Safety
 * `scores` and `labels` must each point to `n` elements; `out` must be writable.
 */
enum MlStatus ml_roc_auc(const double *scores, const uint8_t *labels, size_t n, double *out);

/**
 * Weighted F-measure `1 / (alpha/P + (1-alpha)/R)`; 0 when P or R is 0.
 *
 * # Safety
 * `out` must be writable.
 */
enum MlStatus ml_f_measure(double precision, double recall, double alpha, double *out);

/**
 * Index of the representative frame among `frame_count` frames.
 *
 * # Safety
 * `out` must be writable.
 */
enum MlStatus ml_select_percentile_frame(size_t frame_count, size_t *out);

/**
 * Clip verdict from per-frame probabilities: writes the mean probability
 * and 1 if it reaches `threshold` (exceeds it when `strict`), else 0.
 *
 * # Safety
 * `probabilities` must point to `n` doubles; the out-pointers must be writable.
 */
enum MlStatus ml_timeline_verdict(const double *probabilities,
                                  size_t n,
                                  double threshold,
                                  bool strict,
                                  double *out_mean,
                                  uint8_t *out_verdict);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MORAL_LENS_H */
