#ifndef CBDNK_H
#define CBDNK_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CbdnkStatus {
  CBDNK_STATUS_OK = 0,
  CBDNK_STATUS_NULL_POINTER = 1,
  CBDNK_STATUS_INVALID_ARGUMENT = 2,
  CBDNK_STATUS_INADMISSIBLE_MODEL = 3,
  CBDNK_STATUS_NUMERICAL_FAILURE = 4,
  CBDNK_STATUS_MONITOR_TRIPPED = 5,
  CBDNK_STATUS_BUFFER_TOO_SMALL = 6,
  CBDNK_STATUS_FINISHED = 7,
  CBDNK_STATUS_PANIC = 8,
} CbdnkStatus;

/**
 * Field perturbed by a [`CbdnkMode`].
 */
typedef enum CbdnkField {
  CBDNK_FIELD_EPS = 0,
  CBDNK_FIELD_EPS_DOT = 1,
  CBDNK_FIELD_U1 = 2,
  CBDNK_FIELD_U2 = 3,
  CBDNK_FIELD_U3 = 4,
  CBDNK_FIELD_U_DOT1 = 5,
  CBDNK_FIELD_U_DOT2 = 6,
  CBDNK_FIELD_U_DOT3 = 7,
} CbdnkField;

/**
 * Evolution handle.
 */
typedef struct CbdnkEvolver CbdnkEvolver;

/**
 * Transport model handle.
 */
typedef struct CbdnkModel CbdnkModel;

typedef struct CbdnkCausality {
  bool admissible;
  bool chi_exceeds_four_eta;
  bool lambda_bound_holds;
  double max_speed_ratio;
} CbdnkCausality;

typedef struct CbdnkEvolveOptions {
  /**
   * Points per side, a power of two and at least 8.
   */
  size_t n;
  double cfl;
  double t_end;
  bool dealias;
  /**
   * Background energy density.
   */
  double eps;
  /**
   * Background spatial velocity.
   */
  double u[3];
} CbdnkEvolveOptions;

/**
 * `amplitude * sin(k . x + phase)` added to one field.
 */
typedef struct CbdnkMode {
  enum CbdnkField field;
  int64_t k[3];
  double amplitude;
  double phase;
} CbdnkMode;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread into `buf` with a trailing NUL.
 *
 * Returns the buffer size needed for the full message, or 0 if there is none.
 * The message is truncated when `cap` is too small.
 *
 * # Safety
 * `buf` must be null or point to `cap` writable bytes.
 */
size_t cbdnk_last_error(char *buf, size_t cap);

/**
 * Creates a model with `eta = eta0 * theta^3`. Inadmissible parameters are rejected.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum CbdnkStatus cbdnk_model_new(double eps0,
                                 double eta0,
                                 double a1,
                                 double a2,
                                 struct CbdnkModel **out);

/**
 * # Safety
 * `model` must be null or come from [`cbdnk_model_new`] and not be freed twice.
 */
void cbdnk_model_free(struct CbdnkModel *model);

/**
 * Causality conditions for `(a1, a2)`. Works for inadmissible pairs too.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum CbdnkStatus cbdnk_check_causality(double a1, double a2, struct CbdnkCausality *out);

/**
 * Writes the five distinct rest-frame speeds in ascending order.
 *
 * # Safety
 * `model` must be a live handle and `out` must point to 5 writable doubles.
 */
enum CbdnkStatus cbdnk_rest_frame_speeds(const struct CbdnkModel *model, double *out);

/**
 * Sets up an evolution from a uniform background plus `mode_count` modes.
 *
 * # Safety
 * `model` must be a live handle, `options` and `out` valid pointers, and
 * `modes` must point to `mode_count` entries (or be null when it is 0).
 */
enum CbdnkStatus cbdnk_evolver_new(const struct CbdnkModel *model,
                                   const struct CbdnkEvolveOptions *options,
                                   const struct CbdnkMode *modes,
                                   size_t mode_count,
                                   struct CbdnkEvolver **out);

/**
 * # Safety
 * `ev` must be null or come from [`cbdnk_evolver_new`] and not be freed twice.
 */
void cbdnk_evolver_free(struct CbdnkEvolver *ev);

/**
 * Advances one step. Returns `Finished` once the end time was reached.
 *
 * # Safety
 * `ev` must be a live handle.
 */
enum CbdnkStatus cbdnk_evolver_step(struct CbdnkEvolver *ev);

/**
 * Current time, or NaN for a null handle.
 *
 * # Safety
 * `ev` must be null or a live handle.
 */
double cbdnk_evolver_time(const struct CbdnkEvolver *ev);

/**
 * Step size, or NaN for a null handle.
 *
 * # Safety
 * `ev` must be null or a live handle.
 */
double cbdnk_evolver_dt(const struct CbdnkEvolver *ev);

/**
 * Steps left before `t_end`, or 0 for a null handle.
 *
 * # Safety
 * `ev` must be null or a live handle.
 */
size_t cbdnk_evolver_remaining_steps(const struct CbdnkEvolver *ev);

/**
 * Number of doubles in the state: `30 * n^3`, component-major with `i` fastest.
 *
 * # Safety
 * `ev` must be null or a live handle.
 */
size_t cbdnk_evolver_state_len(const struct CbdnkEvolver *ev);

/**
 * Copies the state into `buf`.
 *
 * # Safety
 * `ev` must be a live handle and `buf` must point to `cap` writable doubles.
 */
enum CbdnkStatus cbdnk_evolver_copy_state(const struct CbdnkEvolver *ev, double *buf, size_t cap);

/**
 * Number of state components per grid point.
 */
size_t cbdnk_components(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CBDNK_H */
