#ifndef LPCANN_H
#define LPCANN_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum LpcannFamily {
  LPCANN_FAMILY_INVARIANT8 = 0,
  LPCANN_FAMILY_STRETCH8 = 1,
  LPCANN_FAMILY_MOONEY_RIVLIN = 2,
} LpcannFamily;

typedef enum LpcannMode {
  LPCANN_MODE_UNIAXIAL_TENSION = 0,
  LPCANN_MODE_UNIAXIAL_COMPRESSION = 1,
  LPCANN_MODE_SIMPLE_SHEAR = 2,
} LpcannMode;

typedef enum LpcannReduction {
  LPCANN_REDUCTION_MEAN = 0,
  LPCANN_REDUCTION_SUM = 1,
} LpcannReduction;

typedef enum LpcannStatus {
  LPCANN_STATUS_OK = 0,
  LPCANN_STATUS_NULL_POINTER = 1,
  LPCANN_STATUS_CONFIG = 2,
  LPCANN_STATUS_DOMAIN = 3,
  LPCANN_STATUS_PARSE = 4,
  LPCANN_STATUS_SCHEMA = 5,
  LPCANN_STATUS_IO = 6,
  LPCANN_STATUS_OVERFLOW = 7,
  LPCANN_STATUS_DIVERGENCE = 8,
  LPCANN_STATUS_PANIC = 9,
} LpcannStatus;

/**
 * Loaded or generated stress-stretch data.
 */
typedef struct LpcannDataset LpcannDataset;

/**
 * Outcome of a single optimizer run.
 */
typedef struct LpcannFit LpcannFit;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread, or null if none.
 * The pointer stays valid until the next failing call on this thread.
 */
const char *lpcann_last_error_message(void);

/**
 * Reads a `mode,control,stress_kpa` CSV file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a writable pointer.
 */
enum LpcannStatus lpcann_dataset_read_csv(const char *path, struct LpcannDataset **out);

/**
 * Noise-free synthetic data over the default tension, compression and shear ranges.
 *
 * # Safety
 * `amplitudes` must point at 8 doubles; `exponents` at 4 doubles or be null.
 */
enum LpcannStatus lpcann_dataset_synthetic(enum LpcannFamily family,
                                           const double *amplitudes,
                                           const double *exponents,
                                           size_t increments,
                                           struct LpcannDataset **out);

/**
 * Number of data points, or 0 for a null handle.
 *
 * # Safety
 * `dataset` must be null or a live handle.
 */
size_t lpcann_dataset_len(const struct LpcannDataset *dataset);

/**
 * # Safety
 * `dataset` must be null or a handle not yet freed.
 */
void lpcann_dataset_free(struct LpcannDataset *dataset);

/**
 * First Piola stress of one load state.
 *
 * # Safety
 * Pointer arguments follow [`lpcann_dataset_synthetic`]; `out` must be writable.
 */
enum LpcannStatus lpcann_stress(enum LpcannFamily family,
                                const double *amplitudes,
                                const double *exponents,
                                enum LpcannMode mode,
                                double control,
                                double *out);

/**
 * Normalized data loss plus `alpha * sum |w|^p`.
 *
 * # Safety
 * Pointer arguments follow [`lpcann_dataset_synthetic`]; `dataset` must be a
 * live handle and `out` writable.
 */
enum LpcannStatus lpcann_loss(enum LpcannFamily family,
                              const double *amplitudes,
                              const double *exponents,
                              const struct LpcannDataset *dataset,
                              enum LpcannReduction reduction,
                              double p,
                              double alpha,
                              double *out);

/**
 * Runs projected Adam from a seeded uniform start.
 *
 * `mask_bits` selects terms with bit `k` for term `k` (zero-based); 0 means
 * every term the family has. `max_epochs` of 0 keeps the default budget.
 *
 * # Safety
 * `dataset` must be a live handle and `out` writable.
 */
enum LpcannStatus lpcann_fit(enum LpcannFamily family,
                             uint8_t mask_bits,
                             const struct LpcannDataset *dataset,
                             enum LpcannReduction reduction,
                             double p,
                             double alpha,
                             size_t max_epochs,
                             uint64_t seed,
                             struct LpcannFit **out);

/**
 * Copies the fitted amplitudes (8) and exponents (4) into caller storage.
 * Either output may be null.
 *
 * # Safety
 * `fit` must be a live handle; non-null outputs must hold 8 and 4 doubles.
 */
enum LpcannStatus lpcann_fit_params(const struct LpcannFit *fit,
                                    double *amplitudes_out,
                                    double *exponents_out);

/**
 * Data loss (without penalty) of the fitted parameters; NaN for a null handle.
 *
 * # Safety
 * `fit` must be null or a live handle.
 */
double lpcann_fit_data_loss(const struct LpcannFit *fit);

/**
 * Penalized loss of the fitted parameters; NaN for a null handle.
 *
 * # Safety
 * `fit` must be null or a live handle.
 */
double lpcann_fit_total_loss(const struct LpcannFit *fit);

/**
 * Number of nonzero amplitudes; 0 for a null handle.
 *
 * # Safety
 * `fit` must be null or a live handle.
 */
size_t lpcann_fit_active_terms(const struct LpcannFit *fit);

/**
 * Full fit result as a JSON string. Release it with [`lpcann_string_free`].
 *
 * # Safety
 * `fit` must be a live handle and `out` writable.
 */
enum LpcannStatus lpcann_fit_to_json(const struct LpcannFit *fit, char **out);

/**
 * # Safety
 * `fit` must be null or a handle not yet freed.
 */
void lpcann_fit_free(struct LpcannFit *fit);

/**
 * # Safety
 * `s` must be null or a string returned by this library and not yet freed.
 */
void lpcann_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LPCANN_H */
