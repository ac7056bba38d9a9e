#ifndef MISLC_H
#define MISLC_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum MislcStatus {
  MISLC_STATUS_OK = 0,
  /**
   * A required pointer argument was NULL.
   */
  MISLC_STATUS_NULL_ARGUMENT = 1,
  /**
   * A string argument was not valid UTF-8.
   */
  MISLC_STATUS_INVALID_UTF8 = 2,
  /**
   * Bad parameters or input data (empty corpus, length mismatch, ...).
   */
  MISLC_STATUS_INVALID_INPUT = 3,
  /**
   * Reading or writing files failed.
   */
  MISLC_STATUS_IO = 4,
  /**
   * The computation is undefined for the input (e.g. alpha with no
   * pairable values).
   */
  MISLC_STATUS_UNDEFINED = 5,
  /**
   * A Rust panic was caught at the boundary.
   */
  MISLC_STATUS_PANIC = 6,
} MislcStatus;

/**
 * Opaque ranked result list.
 */
typedef struct MislcHits MislcHits;

/**
 * Opaque BM25 index.
 */
typedef struct MislcIndex MislcIndex;

/**
 * Detection scores, each in [0, 1].
 */
typedef struct MislcScores {
  double bin_f1;
  double ma_f1;
  double mi_f1;
} MislcScores;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. Valid until
 * the next call into this library on the same thread.
 */
const char *mislc_last_error(void);

/**
 * Library version as a static string.
 */
const char *mislc_version(void);

/**
 * Chunks every `.txt` file of `corpus_dir` with the `word-v1` tokenizer
 * and builds an index with k1 = 0.9, b = 0.4. `budget` 0 selects the
 * default chunk budget. Free the result with [`mislc_index_free`].
 *
 * # Safety
 * `corpus_dir` must be a valid C string and `out` a valid pointer.
 */
enum MislcStatus mislc_index_build(const char *corpus_dir, size_t budget, struct MislcIndex **out);

/**
 * Loads an index directory written by [`mislc_index_save`] or the CLI.
 *
 * # Safety
 * `dir` must be a valid C string and `out` a valid pointer.
 */
enum MislcStatus mislc_index_load(const char *dir, struct MislcIndex **out);

/**
 * # Safety
 * `index` must come from this library; `dir` must be a valid C string.
 */
enum MislcStatus mislc_index_save(const struct MislcIndex *index, const char *dir);

/**
 * Number of chunks, or 0 for NULL.
 *
 * # Safety
 * `index` must be NULL or come from this library.
 */
size_t mislc_index_len(const struct MislcIndex *index);

/**
 * # Safety
 * `index` must be NULL or come from this library, and not be used again.
 */
void mislc_index_free(struct MislcIndex *index);

/**
 * Top `top_k` chunks for `query`. Free the result with [`mislc_hits_free`].
 *
 * # Safety
 * `index` must come from this library, `query` must be a valid C string
 * and `out` a valid pointer.
 */
enum MislcStatus mislc_index_query(const struct MislcIndex *index,
                                   const char *query,
                                   size_t top_k,
                                   struct MislcHits **out);

/**
 * # Safety
 * `hits` must be NULL or come from this library.
 */
size_t mislc_hits_len(const struct MislcHits *hits);

/**
 * BM25 score of hit `i`, or NaN when out of range.
 *
 * # Safety
 * `hits` must be NULL or come from this library.
 */
double mislc_hits_score(const struct MislcHits *hits, size_t i);

/**
 * Index ordinal of hit `i`, or `UINT32_MAX` when out of range.
 *
 * # Safety
 * `hits` must be NULL or come from this library.
 */
uint32_t mislc_hits_ordinal(const struct MislcHits *hits, size_t i);

/**
 * Chunk id of hit `i`, or NULL when out of range. Owned by `hits`.
 *
 * # Safety
 * `hits` must be NULL or come from this library.
 */
const char *mislc_hits_chunk_id(const struct MislcHits *hits, size_t i);

/**
 * # Safety
 * `hits` must be NULL or come from this library, and not be used again.
 */
void mislc_hits_free(struct MislcHits *hits);

/**
 * Label codes: 0 = Non-MisLC, 1 = Unclear, 2 = MisLC.
 *
 * # Safety
 * `text` must be a valid C string; `label` and `is_error` valid pointers.
 */
enum MislcStatus mislc_parse_verdict(const char *text,
                                     bool constrained,
                                     uint8_t *label,
                                     bool *is_error);

/**
 * Rule-based label from evidence count, issue count and claim flag.
 */
uint8_t mislc_assign_label(size_t evidence_count, size_t issue_count, bool is_claim);

/**
 * Number of `word-v1` tokens in `text`.
 *
 * # Safety
 * `text` must be a valid C string and `out` a valid pointer.
 */
enum MislcStatus mislc_count_tokens(const char *text, size_t *out);

/**
 * # Safety
 * `preds` and `golds` must point to `n` label codes; `out` must be valid.
 */
enum MislcStatus mislc_scores(const uint8_t *preds,
                              const uint8_t *golds,
                              size_t n,
                              struct MislcScores *out);

/**
 * Nominal Krippendorff's alpha over a row-major `units` x `coders` matrix
 * of category codes; cells equal to `missing` are absent values.
 *
 * # Safety
 * `values` must point to `units * coders` integers; `out` must be valid.
 */
enum MislcStatus mislc_krippendorff_alpha(const uint32_t *values,
                                          size_t units,
                                          size_t coders,
                                          uint32_t missing,
                                          double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MISLC_H */
