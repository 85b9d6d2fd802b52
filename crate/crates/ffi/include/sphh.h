#ifndef SPHH_H
#define SPHH_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SphhStatus {
  SPHH_STATUS_OK = 0,
  SPHH_STATUS_NULL_POINTER = 1,
  SPHH_STATUS_INVALID_ARGUMENT = 2,
  SPHH_STATUS_CONFIG = 3,
  SPHH_STATUS_IO = 4,
  SPHH_STATUS_RUNTIME = 5,
  SPHH_STATUS_BUFFER_TOO_SMALL = 6,
  SPHH_STATUS_PANIC = 7,
} SphhStatus;

// A loaded or generated dataset.
typedef struct SphhDataset SphhDataset;

// A BASE encoder with its weights.
typedef struct SphhModel SphhModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static nul-terminated string.
const char *sphh_version(void);

// Message of the last failed call on this thread; empty after a success.
// The pointer stays valid until the next call on the same thread.
const char *sphh_last_error(void);

// Loads the dataset described by the manifest at `manifest_path`.
//
// # Safety
// `manifest_path` must be a nul-terminated string and `out` writable.
enum SphhStatus sphh_dataset_load(const char *manifest_path, struct SphhDataset **out);

// Generates a planted-community dataset from the spec file at `spec_path`.
//
// # Safety
// `spec_path` must be a nul-terminated string and `out` writable.
enum SphhStatus sphh_dataset_generate(const char *spec_path, struct SphhDataset **out);

// Writes the dataset's files and `manifest.txt` into `dir`.
//
// # Safety
// `dataset` must come from this library; `dir` must be nul-terminated.
enum SphhStatus sphh_dataset_write(const struct SphhDataset *dataset, const char *dir);

// Node, hyperedge and node-type counts. Any output pointer may be null.
//
// # Safety
// `dataset` must come from this library; non-null outputs must be writable.
enum SphhStatus sphh_dataset_counts(const struct SphhDataset *dataset,
                                    size_t *nodes,
                                    size_t *hyperedges,
                                    size_t *node_types);

// Number of hyperedges whose timestamp falls in split `split`
// (0 pretrain, 1 preval, 2 train, 3 valid, 4 test).
//
// # Safety
// `dataset` must come from this library and `out` writable.
enum SphhStatus sphh_dataset_split_size(const struct SphhDataset *dataset,
                                        uint32_t split,
                                        size_t *out);

// Releases a dataset. Null is ignored.
//
// # Safety
// `dataset` must come from this library and not be used afterwards.
void sphh_dataset_free(struct SphhDataset *dataset);

// Loads a pretrained encoder checkpoint.
//
// # Safety
// `checkpoint_path` must be nul-terminated and `out` writable.
enum SphhStatus sphh_model_load(const char *checkpoint_path, struct SphhModel **out);

// Pretrains with the run config at `config_path` (first configured seed)
// and returns the resulting encoder. Nothing is written to disk.
//
// # Safety
// `config_path` must be nul-terminated and `out` writable.
enum SphhStatus sphh_pretrain(const char *config_path, struct SphhModel **out);

// Writes the encoder's checkpoint to `path`.
//
// # Safety
// `model` must come from this library; `path` must be nul-terminated.
enum SphhStatus sphh_model_save(const struct SphhModel *model, const char *path);

// Embedding width of the encoder.
//
// # Safety
// `model` must come from this library and `out` writable.
enum SphhStatus sphh_model_embedding_dim(const struct SphhModel *model, size_t *out);

// Encodes every node of `dataset` over its full clique expansion and
// writes a row-major `nodes x dim` matrix into `out`, rows in ascending
// node id order. `out_len` is the capacity of `out` in doubles; when it is
// too small nothing is written and `BUFFER_TOO_SMALL` is returned.
//
// # Safety
// Handles must come from this library; `out` must hold `out_len` doubles.
enum SphhStatus sphh_model_encode(const struct SphhModel *model,
                                  const struct SphhDataset *dataset,
                                  double *out,
                                  size_t out_len);

// Releases a model. Null is ignored.
//
// # Safety
// `model` must come from this library and not be used afterwards.
void sphh_model_free(struct SphhModel *model);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SPHH_H */
