#ifndef CAUEMO_H
#define CAUEMO_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define CAUEMO_OK 0

#define CAUEMO_ERR_NULL_ARG 1

#define CAUEMO_ERR_INVALID_ARGUMENT 2

#define CAUEMO_ERR_IO 3

#define CAUEMO_ERR_FORMAT 4

#define CAUEMO_ERR_NUMERIC 5

#define CAUEMO_ERR_CHEMISTRY 6

#define CAUEMO_ERR_CHECKPOINT 7

#define CAUEMO_ERR_BUFFER_TOO_SMALL 8

#define CAUEMO_ERR_PANIC 99

/**
 * Opaque collection of labeled graphs.
 */
typedef struct CauemoDataset CauemoDataset;

/**
 * Opaque trained model together with its configuration.
 */
typedef struct CauemoModel CauemoModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the most recent failure on this thread, or null.
 * The pointer stays valid until the next failing call on the same thread.
 */
const char *cauemo_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *cauemo_version(void);

/**
 * Loads a records file or a TU directory. Pre-split directories load
 * their test part.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
int32_t cauemo_dataset_load(const char *path, struct CauemoDataset **out);

/**
 * Generates `n` Spurious-Motif graphs with agreement probability `b`.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
int32_t cauemo_dataset_spurious_motif(size_t n,
                                      double b,
                                      uint64_t seed,
                                      struct CauemoDataset **out);

/**
 * Writes the dataset as a records file.
 *
 * # Safety
 * `dataset` must come from this library; `path` must be NUL-terminated.
 */
int32_t cauemo_dataset_save(const struct CauemoDataset *dataset, const char *path);

/**
 * # Safety
 * `dataset` must come from this library and `out` must be valid.
 */
int32_t cauemo_dataset_len(const struct CauemoDataset *dataset, size_t *out);

/**
 * Label of graph `index`, or -1 for an unlabeled graph.
 *
 * # Safety
 * `dataset` must come from this library and `out` must be valid.
 */
int32_t cauemo_dataset_label(const struct CauemoDataset *dataset, size_t index, int64_t *out);

/**
 * # Safety
 * `dataset` must be null or a handle from this library not yet freed.
 */
void cauemo_dataset_free(struct CauemoDataset *dataset);

/**
 * Trains with the configuration text `config` (empty for defaults) on the
 * data at `data_path` and writes a checkpoint to `checkpoint_path`. Test
 * accuracy is stored in `test_accuracy` when it is not null.
 *
 * # Safety
 * String arguments must be NUL-terminated; `test_accuracy` may be null.
 */
int32_t cauemo_train(const char *config,
                     const char *data_path,
                     const char *checkpoint_path,
                     double *test_accuracy);

/**
 * # Safety
 * `path` must be NUL-terminated and `out` valid.
 */
int32_t cauemo_model_load(const char *path, struct CauemoModel **out);

/**
 * # Safety
 * `model` must come from this library and `out` must be valid.
 */
int32_t cauemo_model_num_classes(const struct CauemoModel *model, size_t *out);

/**
 * Copies the model's canonical configuration text into `buf` (NUL
 * terminated) when it fits, and always stores the needed size including
 * the terminator in `needed`.
 *
 * # Safety
 * `buf` must hold `len` bytes or be null with `len == 0`.
 */
int32_t cauemo_model_config(const struct CauemoModel *model, char *buf, size_t len, size_t *needed);

/**
 * Class probabilities, row-major `[graphs, classes]`, into `probs`, which
 * must hold at least `graphs * classes` values.
 *
 * # Safety
 * `probs` must point to `len` writable doubles.
 */
int32_t cauemo_model_predict(const struct CauemoModel *model,
                             const struct CauemoDataset *dataset,
                             double *probs,
                             size_t len);

/**
 * Accuracy and ROC-AUC on a labeled dataset; AUC is NaN when undefined.
 *
 * # Safety
 * Handles must come from this library; out-pointers must be valid.
 */
int32_t cauemo_model_evaluate(const struct CauemoModel *model,
                              const struct CauemoDataset *dataset,
                              double *accuracy,
                              double *auc);

/**
 * Environment probability `p_uv` of every edge of graph `index`, in the
 * graph's edge order. `needed` receives the edge count.
 *
 * # Safety
 * `p` must point to `len` writable doubles.
 */
int32_t cauemo_model_edge_scores(const struct CauemoModel *model,
                                 const struct CauemoDataset *dataset,
                                 size_t index,
                                 double *p,
                                 size_t len,
                                 size_t *needed);

/**
 * # Safety
 * `model` must be null or a handle from this library not yet freed.
 */
void cauemo_model_free(struct CauemoModel *model);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CAUEMO_H */
