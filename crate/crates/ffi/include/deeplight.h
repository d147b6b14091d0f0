#ifndef DEEPLIGHT_H
#define DEEPLIGHT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Bit flags for `dl_dictionary_encode_row`.
 */
#define DL_TRANSFORM_FLOOR 1

#define DL_TRANSFORM_CLAMP_NEGATIVE 2

/**
 * Result codes. `DL_OK` is zero; anything else is an error.
 */
typedef enum DlStatus {
  DL_OK = 0,
  DL_NULL_POINTER = 1,
  DL_INVALID_ARGUMENT = 2,
  DL_IO = 3,
  DL_CHECKPOINT = 4,
  DL_SHAPE = 5,
  DL_INDEX_MISMATCH = 6,
  DL_DICTIONARY_MISMATCH = 7,
  DL_PARSE = 8,
  DL_CONFIG = 9,
  DL_BUFFER_TOO_SMALL = 10,
  DL_INTERNAL = 11,
} DlStatus;

/**
 * A feature dictionary plus the row layout it was built for.
 */
typedef struct DlDictionary DlDictionary;

/**
 * A dense or compiled sparse model.
 */
typedef struct DlModel DlModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. Valid until
 * the next deeplight call on the same thread.
 */
const char *dl_last_error(void);

/**
 * Load a dense or sparse checkpoint.
 *
 * # Safety
 * `path` must be a nul-terminated string; `out` must be writable.
 */
enum DlStatus dl_model_load(const char *path, struct DlModel **out);

/**
 * # Safety
 * `model` must come from this library and not be used afterwards. Null is
 * ignored.
 */
void dl_model_free(struct DlModel *model);

/**
 * 1 for a compiled sparse model, 0 for dense, -1 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
int32_t dl_model_is_sparse(const struct DlModel *model);

/**
 * Number of fields each sample must supply, or 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t dl_model_n_fields(const struct DlModel *model);

/**
 * Click probabilities for `n_samples` row-major samples of `n_fields`
 * (index, value) pairs each.
 *
 * # Safety
 * `indices` and `values` must hold `n_samples * n_fields` elements and
 * `out_probs` room for `n_samples`.
 */
enum DlStatus dl_model_predict(const struct DlModel *model,
                               const uint32_t *indices,
                               const double *values,
                               size_t n_samples,
                               size_t n_fields,
                               double *out_probs);

/**
 * Compile a dense model into a new sparse handle. Compiling a sparse model
 * is an error.
 *
 * # Safety
 * `model` must be a live handle and `out` writable.
 */
enum DlStatus dl_model_compile(const struct DlModel *model, struct DlModel **out);

/**
 * Write the model as a checkpoint. Dense models are saved without
 * optimizer state; sparse ones keep f64 values.
 *
 * # Safety
 * `model` must be a live handle and `path` a nul-terminated string.
 */
enum DlStatus dl_model_save(const struct DlModel *model, const char *path);

/**
 * Load a dictionary written by `deeplight preprocess` for rows with
 * `n_numeric` leading numeric and `n_categorical` categorical columns.
 *
 * # Safety
 * `path` must be a nul-terminated string; `out` must be writable.
 */
enum DlStatus dl_dictionary_load(const char *path,
                                 size_t n_numeric,
                                 size_t n_categorical,
                                 struct DlDictionary **out);

/**
 * # Safety
 * `dict` must come from this library and not be used afterwards. Null is
 * ignored.
 */
void dl_dictionary_free(struct DlDictionary *dict);

/**
 * Fails with `DL_DICTIONARY_MISMATCH` when the model was trained against a
 * different dictionary. Models without a recorded hash pass.
 *
 * # Safety
 * Both handles must be live.
 */
enum DlStatus dl_model_check_dictionary(const struct DlModel *model,
                                        const struct DlDictionary *dict);

/**
 * Encode one tab-separated row (label first) into `capacity`-sized index
 * and value buffers; `*out_n_fields` receives the field count. `flags` is
 * a mask of `DL_TRANSFORM_*`.
 *
 * # Safety
 * `line` must be a nul-terminated string, the buffers must hold
 * `capacity` elements, and `out_n_fields` must be writable.
 */
enum DlStatus dl_dictionary_encode_row(const struct DlDictionary *dict,
                                       const char *line,
                                       uint32_t flags,
                                       uint32_t *indices,
                                       double *values,
                                       size_t capacity,
                                       size_t *out_n_fields);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DEEPLIGHT_H */
