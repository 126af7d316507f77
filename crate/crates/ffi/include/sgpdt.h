/* C API for the sgpdt symbolic-regression engine. */

#ifndef SGPDT_H
#define SGPDT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call. Nonzero codes leave a message
 * retrievable with `sgpdt_last_error`.
 */
typedef enum SgpdtStatus {
  /**
   * Success.
   */
  SgpdtStatus_Ok = 0,
  /**
   * Invalid hyperparameter or option.
   */
  SgpdtStatus_Config = 1,
  /**
   * Malformed or inconsistent input data.
   */
  SgpdtStatus_Data = 2,
  /**
   * Internal invariant violation.
   */
  SgpdtStatus_Contract = 3,
  /**
   * Null pointer, non-UTF-8 string, or zero-sized buffer.
   */
  SgpdtStatus_InvalidArgument = 4,
} SgpdtStatus;

/**
 * Fitness function and function set selector (see the core crate's
 * `Variant`).
 */
typedef enum SgpdtVariant {
  SgpdtVariant_Sgpdt = 0,
  SgpdtVariant_DtEm = 1,
  SgpdtVariant_DtNm = 2,
} SgpdtVariant;

/**
 * Opaque handle to a fitted additive model.
 */
typedef struct SgpdtModel SgpdtModel;

/**
 * Flat mirror of the core crate's `RunConfig`. Obtain defaults with
 * `sgpdt_config_default` and override fields as needed.
 */
typedef struct SgpdtConfig {
  enum SgpdtVariant variant;
  uintptr_t pop_size;
  uintptr_t n_ext;
  uintptr_t n_int;
  uintptr_t init_max_depth;
  uintptr_t mutation_max_depth;
  double leaf_bias;
  uintptr_t tournament_k;
  uintptr_t rolling_window;
  uintptr_t elite_size;
  uint64_t seed;
  double test_fraction;
  double val_fraction_of_train;
} SgpdtConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the most recent failure on this thread, or null if none.
 * The pointer is owned by the library and valid until the next failing
 * call on the same thread.
 */
const char *sgpdt_last_error(void);

/**
 * Default hyperparameters (full-scale configuration, seed 0).
 */
struct SgpdtConfig sgpdt_config_default(void);

/**
 * Fits a model on `rows` x `cols` row-major features with aligned
 * targets. The data is split internally (test/validation fractions come
 * from the config); on success `*out_model` owns the fitted model and, if
 * `out_test_rmse` is non-null, it receives the held-out RMSE.
 *
 * # Safety
 * `features` must point to `rows * cols` doubles, `targets` to `rows`
 * doubles, and `out_model` to a writable pointer slot.
 */
enum SgpdtStatus sgpdt_fit(const double *features,
                           const double *targets,
                           uintptr_t rows,
                           uintptr_t cols,
                           const struct SgpdtConfig *config,
                           struct SgpdtModel **out_model,
                           double *out_test_rmse);

/**
 * Parses a model from its JSON serialization.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out_model` a writable slot.
 */
enum SgpdtStatus sgpdt_model_parse_json(const char *json, struct SgpdtModel **out_model);

/**
 * Serializes a model to JSON. The returned string is freed with
 * `sgpdt_string_free`.
 *
 * # Safety
 * `model` must be a live handle and `out_json` a writable slot.
 */
enum SgpdtStatus sgpdt_model_to_json(const struct SgpdtModel *model, char **out_json);

/**
 * Total node count over all terms of the model, or 0 for null.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
uintptr_t sgpdt_model_size(const struct SgpdtModel *model);

/**
 * Predicts on `rows` x `cols` row-major features, writing `rows` values
 * to `out_predictions`.
 *
 * # Safety
 * `features` must point to `rows * cols` doubles and `out_predictions`
 * to `rows` writable doubles.
 */
enum SgpdtStatus sgpdt_model_predict(const struct SgpdtModel *model,
                                     const double *features,
                                     uintptr_t rows,
                                     uintptr_t cols,
                                     double *out_predictions);

/**
 * Frees a model handle. Null is a no-op.
 *
 * # Safety
 * `model` must be null or a pointer previously returned by this library
 * and not yet freed.
 */
void sgpdt_model_free(struct SgpdtModel *model);

/**
 * Frees a string returned by this library. Null is a no-op.
 *
 * # Safety
 * `s` must be null or a pointer previously returned by this library and
 * not yet freed.
 */
void sgpdt_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SGPDT_H */
