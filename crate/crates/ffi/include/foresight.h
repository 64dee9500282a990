#ifndef FORESIGHT_H
#define FORESIGHT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum FsStatus {
  FS_STATUS_OK = 0,
  FS_STATUS_NULL_POINTER = 1,
  FS_STATUS_INVALID_ARGUMENT = 2,
  FS_STATUS_SHAPE_MISMATCH = 3,
  FS_STATUS_OUT_OF_RANGE = 4,
  FS_STATUS_NON_FINITE = 5,
  FS_STATUS_EMPTY = 6,
  FS_STATUS_FORMAT = 7,
  FS_STATUS_INTEGRITY = 8,
  FS_STATUS_CONFIG = 9,
  FS_STATUS_IO = 10,
  /**
   * A metric is undefined for the given input (for example one class only).
   */
  FS_STATUS_UNDEFINED = 11,
  FS_STATUS_BUFFER_TOO_SMALL = 12,
  FS_STATUS_PANIC = 13,
} FsStatus;

/**
 * Trained centroid table.
 */
typedef struct FsCodebook FsCodebook;

/**
 * Trained next-id predictor.
 */
typedef struct FsPredictor FsPredictor;

/**
 * Author → compressed id sequence. Appends and window reads may come from
 * different threads.
 */
typedef struct FsStore FsStore;

/**
 * Caller-owned buffers receiving one prediction. Any buffer may be null to
 * skip it; a non-null buffer must be at least as long as its `*_len` says
 * and that length must cover the predictor's size.
 */
typedef struct FsPrediction {
  /**
   * Most probable next id.
   */
  uint32_t predicted;
  /**
   * `num_codes` probabilities.
   */
  double *probs;
  size_t probs_len;
  /**
   * `model_dim` values: encoder output pooled over the real positions.
   */
  double *history;
  size_t history_len;
  /**
   * `model_dim` values: decoder output.
   */
  double *foresight;
  size_t foresight_len;
} FsPrediction;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the calling thread's last error message into `buf` as a
 * NUL-terminated string, truncating to `len - 1` bytes. Returns the full
 * message length excluding the terminator; empty after a successful call.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t fs_last_error_message(char *buf, size_t len);

/**
 * Loads a codebook file written by the `quantize` stage.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum FsStatus fs_codebook_load(const char *path, struct FsCodebook **out);

/**
 * Builds a codebook from `size` row-major centroids of dimension `dim`.
 *
 * # Safety
 * `centroids` must point to `size * dim` values; `out` must be writable.
 */
enum FsStatus fs_codebook_from_centroids(const double *centroids,
                                         size_t size,
                                         size_t dim,
                                         struct FsCodebook **out);

/**
 * # Safety
 * `cb` must be null or a handle from this library not yet freed.
 */
void fs_codebook_free(struct FsCodebook *cb);

/**
 * Number of centroids, 0 for a null handle.
 *
 * # Safety
 * `cb` must be null or a live handle.
 */
size_t fs_codebook_size(const struct FsCodebook *cb);

/**
 * Embedding dimension, 0 for a null handle.
 *
 * # Safety
 * `cb` must be null or a live handle.
 */
size_t fs_codebook_dim(const struct FsCodebook *cb);

/**
 * Semantic id of the centroid nearest to `embedding` (lowest id on ties).
 *
 * # Safety
 * `cb` must be a live handle, `embedding` must point to `len` values and
 * `out_sid` must be writable.
 */
enum FsStatus fs_codebook_nearest(const struct FsCodebook *cb,
                                  const double *embedding,
                                  size_t len,
                                  uint32_t *out_sid);

/**
 * Empty store whose windows pad with id `pad`; use the codebook size.
 *
 * # Safety
 * `out` must be writable.
 */
enum FsStatus fs_store_new(uint32_t pad, struct FsStore **out);

/**
 * Rebuilds a store by replaying an append log.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum FsStatus fs_store_replay(uint32_t pad, const char *path, struct FsStore **out);

/**
 * # Safety
 * `store` must be null or a handle from this library not yet freed.
 */
void fs_store_free(struct FsStore *store);

/**
 * Appends one segment id to an author's stream.
 *
 * # Safety
 * `store` must be a live handle.
 */
enum FsStatus fs_store_append(const struct FsStore *store, uint64_t author_id, uint32_t sid);

/**
 * Writes the author's last `l_max` runs, front-padded, into `sids` and
 * `freqs` (each `l_max` long) and the number of real runs into `valid_len`.
 * An unknown author yields a fully padded window.
 *
 * # Safety
 * `store` must be a live handle, `sids` and `freqs` must each point to
 * `l_max` writable values and `valid_len` must be writable.
 */
enum FsStatus fs_store_window(const struct FsStore *store,
                              uint64_t author_id,
                              size_t l_max,
                              uint32_t *sids,
                              uint32_t *freqs,
                              size_t *valid_len);

/**
 * Loads a predictor checkpoint. The load is refused with
 * [`FsStatus::Integrity`] unless the checkpoint was trained against `cb`.
 *
 * # Safety
 * `path` must be a NUL-terminated string, `cb` a live handle and `out`
 * writable.
 */
enum FsStatus fs_predictor_load(const char *path,
                                const struct FsCodebook *cb,
                                struct FsPredictor **out);

/**
 * # Safety
 * `p` must be null or a handle from this library not yet freed.
 */
void fs_predictor_free(struct FsPredictor *p);

/**
 * Number of real ids the predictor distinguishes, 0 for a null handle.
 *
 * # Safety
 * `p` must be null or a live handle.
 */
size_t fs_predictor_num_codes(const struct FsPredictor *p);

/**
 * Width of the history and foresight embeddings, 0 for a null handle.
 *
 * # Safety
 * `p` must be null or a live handle.
 */
size_t fs_predictor_model_dim(const struct FsPredictor *p);

/**
 * Window length the predictor was built for, 0 for a null handle.
 *
 * # Safety
 * `p` must be null or a live handle.
 */
size_t fs_predictor_window_len(const struct FsPredictor *p);

/**
 * Predicts the id following an author's current stream.
 *
 * # Safety
 * `p` and `store` must be live handles; `out` must satisfy the contract of
 * [`FsPrediction`].
 */
enum FsStatus fs_predictor_predict_author(const struct FsPredictor *p,
                                          const struct FsStore *store,
                                          uint64_t author_id,
                                          struct FsPrediction *out);

/**
 * Predicts the id following a raw, uncompressed id sequence of length `len`.
 *
 * # Safety
 * `p` must be a live handle, `sids` must point to `len` values and `out`
 * must satisfy the contract of [`FsPrediction`].
 */
enum FsStatus fs_predictor_predict_raw(const struct FsPredictor *p,
                                       const uint32_t *sids,
                                       size_t len,
                                       struct FsPrediction *out);

/**
 * Area under the ROC curve; ties count one half. Returns
 * [`FsStatus::Undefined`] when either class is absent.
 *
 * # Safety
 * `scores` and `labels` must point to `n` values; `out` must be writable.
 */
enum FsStatus fs_auc(const double *scores, const uint8_t *labels, size_t n, double *out);

/**
 * Per-user AUC averaged with weights equal to each user's example count;
 * users with a single class are left out. Returns [`FsStatus::Undefined`]
 * when no user has both classes.
 *
 * # Safety
 * `users`, `scores` and `labels` must point to `n` values; `out` must be
 * writable.
 */
enum FsStatus fs_gauc(const uint64_t *users,
                      const double *scores,
                      const uint8_t *labels,
                      size_t n,
                      double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FORESIGHT_H */
