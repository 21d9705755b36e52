#ifndef NASH_MTL_H
#define NASH_MTL_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum NmtlSolveStatus {
  NMTL_SOLVE_STATUS_EXACT = 0,
  NMTL_SOLVE_STATUS_APPROXIMATE = 1,
  // Linearly dependent gradients: the direction is the minimum-norm point
  // and the weights are zero.
  NMTL_SOLVE_STATUS_DEGENERATE = 2,
} NmtlSolveStatus;

typedef enum NmtlStatus {
  NMTL_STATUS_OK = 0,
  NMTL_STATUS_NULL_POINTER = 1,
  NMTL_STATUS_INVALID_ARGUMENT = 2,
  NMTL_STATUS_SOLVER_FAILED = 3,
  NMTL_STATUS_PANIC = 4,
} NmtlStatus;

// Stateful aggregator of any supported kind.
typedef struct NmtlAggregator NmtlAggregator;

// Bargaining solver with its settings and the last weights (used as a warm
// start when `warm_start` is enabled).
typedef struct NmtlSolver NmtlSolver;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copies the calling thread's last error message into `buf` (NUL-terminated,
// truncated to `cap - 1` bytes) and returns the full message length.
//
// # Safety
// `buf` must be null or point to `cap` writable bytes.
size_t nmtl_last_error(char *buf, size_t cap);

// Creates a solver with default settings.
//
// # Safety
// `out` must point to writable storage for one pointer.
enum NmtlStatus nmtl_solver_new(struct NmtlSolver **out);

// Sets the accepted fixed-point residual and the refinement budget.
//
// # Safety
// `solver` must come from [`nmtl_solver_new`].
enum NmtlStatus nmtl_solver_configure(struct NmtlSolver *solver,
                                      double residual_tol,
                                      uint32_t ccp_max_iters,
                                      bool warm_start);

// # Safety
// `solver` must be null or come from [`nmtl_solver_new`], and must not be
// used afterwards.
void nmtl_solver_free(struct NmtlSolver *solver);

// Solves the bargaining problem for the `d x k` gradient matrix `g`.
//
// Writes `k` weights to `alpha_out` and `d` entries to `direction_out`.
// `status_out` and `residual_out` may be null.
//
// # Safety
// Pointers must reference buffers of the stated sizes.
enum NmtlStatus nmtl_solve(struct NmtlSolver *solver,
                           const double *g,
                           size_t d,
                           size_t k,
                           double *alpha_out,
                           double *direction_out,
                           enum NmtlSolveStatus *status_out,
                           double *residual_out);

// Creates an aggregator by name (`ls`, `si`, `rlw`, `dwa`, `mgda`, `pcgrad`,
// `cagrad`, `imtlg`, `nash`). `seed` drives the randomized ones.
//
// # Safety
// `name` must be a NUL-terminated string; `out` must be writable.
enum NmtlStatus nmtl_aggregator_new(const char *name, uint64_t seed, struct NmtlAggregator **out);

// Aggregates one step: `g` is `d x k`, `losses` has `k` entries, and the
// joint direction (to be subtracted from the parameters) goes to
// `direction_out` (`d` entries).
//
// # Safety
// Pointers must reference buffers of the stated sizes.
enum NmtlStatus nmtl_aggregator_step(struct NmtlAggregator *agg,
                                     const double *g,
                                     size_t d,
                                     size_t k,
                                     const double *losses,
                                     double *direction_out);

// Number of bargaining solves performed by `agg` so far (0 for null).
//
// # Safety
// `agg` must be null or come from [`nmtl_aggregator_new`].
uint64_t nmtl_aggregator_solver_calls(const struct NmtlAggregator *agg);

// # Safety
// `agg` must be null or come from [`nmtl_aggregator_new`], and must not be
// used afterwards.
void nmtl_aggregator_free(struct NmtlAggregator *agg);

// Minimum-norm convex combination of the columns of `g`: `k` simplex weights
// and the `d`-vector direction.
//
// # Safety
// Pointers must reference buffers of the stated sizes.
enum NmtlStatus nmtl_mgda(const double *g,
                          size_t d,
                          size_t k,
                          double *weights_out,
                          double *direction_out);

// Two-task toy benchmark losses at `theta` (2 entries) into `out` (2 entries).
//
// # Safety
// Pointers must reference buffers of the stated sizes.
enum NmtlStatus nmtl_toy_losses(const double *theta, double *out);

// Toy gradients at `theta` as a column-major `2 x 2` matrix (4 entries).
//
// # Safety
// Pointers must reference buffers of the stated sizes.
enum NmtlStatus nmtl_toy_gradients(const double *theta, double *out);

// Average relative degradation in percent of `values` against `baseline`
// over `k` metrics; `higher_is_better[i]` flips the sign of metric `i`.
//
// # Safety
// Pointers must reference `k` elements each; `out` one double.
enum NmtlStatus nmtl_delta_m(const double *values,
                             const double *baseline,
                             const bool *higher_is_better,
                             size_t k,
                             double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NASH_MTL_H */
