#ifndef RWRS_H
#define RWRS_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RwrsStatus {
  RWRS_STATUS_OK = 0,
  RWRS_STATUS_NULL_POINTER = 1,
  RWRS_STATUS_INVALID_ARGUMENT = 2,
  RWRS_STATUS_INVALID_LAW = 3,
  RWRS_STATUS_NOT_APERIODIC = 4,
  RWRS_STATUS_REGIME_UNDETERMINED = 5,
  RWRS_STATUS_NUMERICAL = 6,
  RWRS_STATUS_IO = 7,
  RWRS_STATUS_MISSING_QUANTILES = 8,
  RWRS_STATUS_BUFFER_TOO_SMALL = 9,
  RWRS_STATUS_PANIC = 10,
} RwrsStatus;

typedef enum RwrsRegime {
  RWRS_REGIME_TRANSIENT = 0,
  RWRS_REGIME_CAUCHY = 1,
  RWRS_REGIME_PLANAR = 2,
} RwrsRegime;

// Walk model handle.
typedef struct RwrsModel RwrsModel;

// Sampled path handle.
typedef struct RwrsPath RwrsPath;

// Pillow-supremum quantile table handle.
typedef struct RwrsQuantiles RwrsQuantiles;

// Outcome of [`rwrs_changepoint_test`].
typedef struct RwrsTestResult {
  double t_n;
  // `T_n / (a_n sqrt(c))`.
  double normalized;
  double critical_value;
  double p_value;
  bool reject;
} RwrsTestResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. The pointer is
// valid until the next failing call on the same thread.
const char *rwrs_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *rwrs_version(void);

// Builds a model from its JSON specification.
//
// # Safety
// `json` must be a NUL-terminated string and `out` a valid pointer.
enum RwrsStatus rwrs_model_from_json(const char *json, struct RwrsModel **out);

// # Safety
// `model` must come from [`rwrs_model_from_json`] and not be used again.
void rwrs_model_free(struct RwrsModel *model);

// # Safety
// `model` and `out` must be valid pointers.
enum RwrsStatus rwrs_model_regime(const struct RwrsModel *model, enum RwrsRegime *out);

// Lattice dimension of the model, 0 for a null handle.
//
// # Safety
// `model` must be null or valid.
size_t rwrs_model_dim(const struct RwrsModel *model);

// Limit constant `c` and its error bound.
//
// # Safety
// All pointers must be valid; `error_bound` may be null.
enum RwrsStatus rwrs_limit_constant(const struct RwrsModel *model, double *c, double *error_bound);

// Samples `S_1..S_n`.
//
// # Safety
// `model` and `out` must be valid pointers.
enum RwrsStatus rwrs_sample_path(const struct RwrsModel *model,
                                 size_t n,
                                 uint64_t seed,
                                 struct RwrsPath **out);

// # Safety
// `path` must come from [`rwrs_sample_path`] and not be used again.
void rwrs_path_free(struct RwrsPath *path);

// Number of steps, 0 for a null handle.
//
// # Safety
// `path` must be null or valid.
size_t rwrs_path_len(const struct RwrsPath *path);

// # Safety
// `path` must be null or valid.
size_t rwrs_path_dim(const struct RwrsPath *path);

// Copies the `len * dim` coordinates, step-major, into `buf`.
//
// # Safety
// `buf` must point to `buf_len` writable elements.
enum RwrsStatus rwrs_path_coords(const struct RwrsPath *path, int64_t *buf, size_t buf_len);

// Uniform scenery marks `ξ_{S_1}, ..., ξ_{S_n}` for `scenery_seed`.
//
// # Safety
// `buf` must point to `buf_len` writable elements.
enum RwrsStatus rwrs_scenery_marks(const struct RwrsPath *path,
                                   uint64_t scenery_seed,
                                   double *buf,
                                   size_t buf_len);

// Change-point statistic `T_n` of `values[0..n]`.
//
// # Safety
// `values` must point to `n` readable elements and `out` be valid.
enum RwrsStatus rwrs_changepoint_statistic(const double *values, size_t n, double *out);

// Simulates pillow-supremum quantiles at resolution `m` with `r`
// replicates.
//
// # Safety
// `out` must be valid.
enum RwrsStatus rwrs_pillow_quantiles(size_t m,
                                      size_t r,
                                      uint64_t seed,
                                      struct RwrsQuantiles **out);

// Loads a `level,sup_value` CSV table.
//
// # Safety
// `csv_path` must be a NUL-terminated string and `out` valid.
enum RwrsStatus rwrs_quantiles_from_csv(const char *csv_path, struct RwrsQuantiles **out);

// # Safety
// `q` and `out` must be valid.
enum RwrsStatus rwrs_quantiles_value(const struct RwrsQuantiles *q, double level, double *out);

// # Safety
// `q` must come from this library and not be used again.
void rwrs_quantiles_free(struct RwrsQuantiles *q);

// Change-point test at level `alpha`.
//
// # Safety
// `values` must point to `n` readable elements; handles and `out` valid.
enum RwrsStatus rwrs_changepoint_test(const double *values,
                                      size_t n,
                                      const struct RwrsModel *model,
                                      double alpha,
                                      const struct RwrsQuantiles *quantiles,
                                      struct RwrsTestResult *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RWRS_H */
