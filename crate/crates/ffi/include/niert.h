#ifndef NIERT_H
#define NIERT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes. Values 2 to 5 match the command-line exit codes.
typedef enum NiertStatus {
  NIERT_STATUS_OK = 0,
  // A Rust panic was caught at the boundary.
  NIERT_STATUS_INTERNAL = 1,
  // Null pointer or otherwise invalid argument.
  NIERT_STATUS_INVALID_ARGUMENT = 2,
  NIERT_STATUS_IO = 3,
  NIERT_STATUS_NUMERIC = 4,
  NIERT_STATUS_SHAPE = 5,
} NiertStatus;

// A loaded task dataset.
typedef struct NiertDataset NiertDataset;

// A loaded model checkpoint.
typedef struct NiertModel NiertModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the most recent failure on this thread, or an empty string.
// The pointer stays valid until the next call on the same thread.
const char *niert_last_error(void);

// Loads a checkpoint file into `*out`.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a writable pointer.
enum NiertStatus niert_model_load(const char *path, struct NiertModel **out);

// Releases a model. Null is ignored.
//
// # Safety
// `model` must come from [`niert_model_load`] and not be used afterwards.
void niert_model_free(struct NiertModel *model);

// Writes the model's input and output dimensions.
//
// # Safety
// `model` must be a live handle; `d_x` and `d_y` writable pointers.
enum NiertStatus niert_model_dims(const struct NiertModel *model, size_t *d_x, size_t *d_y);

// Predicts values at `m` target positions from `n` observed points.
//
// Arrays are row-major: `observed_x` is `n × d_x`, `observed_y` is
// `n × d_y`, `target_x` is `m × d_x` and `out_y` receives `m × d_y`.
// Predictions for one target do not depend on the other targets.
//
// # Safety
// Every array must hold at least the stated number of doubles.
enum NiertStatus niert_predict(const struct NiertModel *model,
                               size_t n,
                               const double *observed_x,
                               const double *observed_y,
                               size_t m,
                               const double *target_x,
                               double *out_y);

// Loads a JSONL task dataset into `*out`.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a writable pointer.
enum NiertStatus niert_dataset_load(const char *path, struct NiertDataset **out);

// Number of tasks in a dataset; 0 for null.
//
// # Safety
// `dataset` must be null or a live handle.
size_t niert_dataset_len(const struct NiertDataset *dataset);

// Releases a dataset. Null is ignored.
//
// # Safety
// `dataset` must come from [`niert_dataset_load`] and not be used afterwards.
void niert_dataset_free(struct NiertDataset *dataset);

// Target-point MSE and MAE of `model` over every task in `dataset`.
//
// # Safety
// Handles must be live; `mse` and `mae` writable pointers.
enum NiertStatus niert_evaluate(const struct NiertModel *model,
                                const struct NiertDataset *dataset,
                                double *mse,
                                double *mae);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NIERT_H */
