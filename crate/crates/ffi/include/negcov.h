#ifndef NEGCOV_H
#define NEGCOV_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum {
  NEGCOV_STATUS_OK = 0,
  NEGCOV_STATUS_NULL_POINTER = 1,
  NEGCOV_STATUS_INVALID_ARGUMENT = 2,
  NEGCOV_STATUS_INVALID_VALUE = 3,
  NEGCOV_STATUS_PARSE = 4,
  NEGCOV_STATUS_NOT_FOUND = 5,
  NEGCOV_STATUS_DEGENERATE_INPUT = 6,
  NEGCOV_STATUS_BUDGET_EXCEEDED = 7,
  NEGCOV_STATUS_ALL_BATCHES_SKIPPED = 8,
  NEGCOV_STATUS_IO = 9,
  NEGCOV_STATUS_INVALID_UTF8 = 10,
  NEGCOV_STATUS_PANIC = 11,
} NegcovStatus;

typedef enum {
  /**
   * `max(1, ·)` inside the coefficient.
   */
  NEGCOV_COEFFICIENT_MAX = 0,
  /**
   * `⌈·⌉` inside the coefficient.
   */
  NEGCOV_COEFFICIENT_CEILED = 1,
} NegcovCoefficient;

typedef enum {
  NEGCOV_LOSS_KIND_HINGE = 0,
  NEGCOV_LOSS_KIND_LOGISTIC = 1,
} NegcovLossKind;

/**
 * Opaque paired-class example world.
 */
typedef struct NegcovExampleWorld NegcovExampleWorld;

/**
 * Opaque latent class model.
 */
typedef struct NegcovModel NegcovModel;

/**
 * Opaque representation table.
 */
typedef struct NegcovRepresentation NegcovRepresentation;

/**
 * Loss values for one `k`. `stderr` fields are NaN for exact results.
 */
typedef struct {
  uintptr_t k;
  double nce_loss;
  double collision_free_loss;
  double stderr;
  double collision_free_stderr;
} NegcovLoss;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or NULL. The pointer is
 * valid until the next call into this library on the same thread.
 */
const char *negcov_last_error(void);

/**
 * Static, NUL-terminated name of a status code.
 */
const char *negcov_status_name(NegcovStatus status);

/**
 * Collision probability for `num_classes` prior weights and `k` negatives.
 *
 * # Safety
 * `prior` must point to `num_classes` doubles; `out` must be writable.
 */
NegcovStatus negcov_tau(const double *prior, uintptr_t num_classes, uintptr_t k, double *out_tau);

/**
 * Harmonic number `H_t` for `t ≥ 1`.
 *
 * # Safety
 * `out` must be writable.
 */
NegcovStatus negcov_harmonic(uintptr_t t, double *out_value);

/**
 * Transfer coefficient for a uniform prior over `num_classes` classes.
 *
 * # Safety
 * `out` must be writable.
 */
NegcovStatus negcov_alpha_uniform(uintptr_t num_classes, uintptr_t k, double *out_alpha);

/**
 * Transfer coefficient for an arbitrary prior.
 *
 * # Safety
 * `prior` must point to `num_classes` doubles; `out` must be writable.
 */
NegcovStatus negcov_alpha_general(const double *prior,
                                  uintptr_t num_classes,
                                  uintptr_t k,
                                  NegcovCoefficient variant,
                                  double *out_alpha);

/**
 * Predicted minimiser of the uniform transfer coefficient.
 */
double negcov_optimal_k_transfer(uintptr_t num_classes);

/**
 * Predicted minimiser of the refined coefficient.
 */
double negcov_optimal_k_refined(uintptr_t num_classes);

/**
 * Closed-form hinge NCE loss of the collapsed representation in the paired
 * example.
 *
 * # Safety
 * `out` must be writable.
 */
NegcovStatus negcov_example_f1_loss(uintptr_t num_classes, uintptr_t k, double *out_loss);

/**
 * Lower and upper bounds on the hinge NCE loss of the scaled representation
 * in the paired example.
 *
 * # Safety
 * Both out-pointers must be writable.
 */
NegcovStatus negcov_example_f2_bounds(uintptr_t num_classes,
                                      uintptr_t k,
                                      double epsilon,
                                      double *out_lower,
                                      double *out_upper);

/**
 * Parses a model from its text format.
 *
 * # Safety
 * `text` must be a NUL-terminated string; `out_model` must be writable.
 */
NegcovStatus negcov_model_from_text(const char *text_ptr, NegcovModel **out_model);

/**
 * Loads a model file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out_model` must be writable.
 */
NegcovStatus negcov_model_load(const char *path, NegcovModel **out_model);

/**
 * Number of latent classes, or 0 for NULL.
 *
 * # Safety
 * `model` must be NULL or a live handle.
 */
uintptr_t negcov_model_num_classes(const NegcovModel *model);

/**
 * # Safety
 * `model` must be NULL or a handle not yet freed.
 */
void negcov_model_free(NegcovModel *model);

/**
 * Builds a table representation: row `i` of `vectors` (row-major, `count × dim`)
 * belongs to point `ids[i]`.
 *
 * # Safety
 * `ids` must point to `count` ids, `vectors` to `count * dim` doubles.
 */
NegcovStatus negcov_representation_table(uintptr_t dim,
                                         const uint64_t *ids,
                                         const double *vectors,
                                         uintptr_t count,
                                         NegcovRepresentation **out_rep);

/**
 * # Safety
 * `rep` must be NULL or a handle not yet freed.
 */
void negcov_representation_free(NegcovRepresentation *rep);

/**
 * Exact NCE loss by enumeration; `budget` 0 selects the library default.
 *
 * # Safety
 * Handles must be live; `out_loss` must be writable.
 */
NegcovStatus negcov_nce_loss_exact(const NegcovModel *model,
                                   const NegcovRepresentation *rep,
                                   uintptr_t k,
                                   NegcovLossKind loss_kind,
                                   uint64_t budget,
                                   NegcovLoss *out_loss);

/**
 * Monte-Carlo NCE loss; deterministic for a given seed.
 *
 * # Safety
 * Handles must be live; `out_loss` must be writable.
 */
NegcovStatus negcov_nce_loss_mc(const NegcovModel *model,
                                const NegcovRepresentation *rep,
                                uintptr_t k,
                                NegcovLossKind loss_kind,
                                uint64_t num_samples,
                                uint64_t seed,
                                NegcovLoss *out_loss);

/**
 * Paired-class world with `num_classes` (even) classes and scale `epsilon`.
 *
 * # Safety
 * `out_world` must be writable.
 */
NegcovStatus negcov_example_world_new(uintptr_t num_classes,
                                      double epsilon,
                                      NegcovExampleWorld **out_world);

/**
 * Copies the world's model into a new handle owned by the caller.
 *
 * # Safety
 * `world` must be live; `out_model` must be writable.
 */
NegcovStatus negcov_example_world_model(const NegcovExampleWorld *world, NegcovModel **out_model);

/**
 * Copies representation 1 (collapsed) or 2 (scaled) into a new handle.
 *
 * # Safety
 * `world` must be live; `out_rep` must be writable.
 */
NegcovStatus negcov_example_world_representation(const NegcovExampleWorld *world,
                                                 uint32_t which,
                                                 NegcovRepresentation **out_rep);

/**
 * # Safety
 * `world` must be NULL or a handle not yet freed.
 */
void negcov_example_world_free(NegcovExampleWorld *world);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NEGCOV_H */
