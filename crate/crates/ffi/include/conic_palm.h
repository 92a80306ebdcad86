/* C interface of the conic-palm solver. Generated; do not edit. */

#pragma once

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Solver variant.
 */
typedef enum cp_method {
  CP_METHOD_PALM = 0,
  CP_METHOD_ALM = 1,
} cp_method;

/**
 * Penalty schedule kind.
 */
typedef enum cp_schedule_kind {
  /**
   * `c_k = penalty`.
   */
  CP_SCHEDULE_CONSTANT = 0,
  /**
   * `c_k = min(penalty * growth^k, penalty_cap)`.
   */
  CP_SCHEDULE_GEOMETRIC = 1,
  /**
   * `c_k = penalty * growth^k`, unbounded.
   */
  CP_SCHEDULE_UNBOUNDED = 2,
} cp_schedule_kind;

/**
 * Status codes returned by every fallible entry point.
 */
typedef enum cp_status {
  CP_OK = 0,
  /**
   * A required pointer argument was null.
   */
  CP_NULL_ARGUMENT = 1,
  CP_INVALID_ARGUMENT = 2,
  CP_UTF8_ERROR = 3,
  CP_PARSE_ERROR = 4,
  CP_UNKNOWN_PROBLEM = 5,
  CP_DIMENSION_MISMATCH = 6,
  CP_NUMERICAL_ERROR = 7,
  /**
   * The inner solve or the step acceptance failed; a partial trace is
   * still returned when available.
   */
  CP_SOLVER_FAILURE = 8,
  /**
   * The outer iteration budget ran out; the trace is valid.
   */
  CP_ITERATION_LIMIT = 9,
  CP_BUFFER_TOO_SMALL = 10,
  CP_INTERNAL_ERROR = 11,
} cp_status;

/**
 * Opaque problem handle.
 */
typedef struct cp_problem cp_problem;

/**
 * Opaque trace handle.
 */
typedef struct cp_trace cp_trace;

/**
 * Options of a solve; obtain defaults from `cp_solve_options_default`.
 */
typedef struct cp_solve_options {
  enum cp_method method;
  enum cp_schedule_kind schedule;
  /**
   * Constant penalty, or the initial penalty of a growing schedule.
   */
  double penalty;
  /**
   * Growth factor of geometric/unbounded schedules (> 1).
   */
  double growth;
  /**
   * Cap of the geometric schedule.
   */
  double penalty_cap;
  /**
   * Inner tolerance rule `eps(r) = min(eps_max, sigma * r^(1 + theta))`.
   */
  double sigma;
  double theta;
  double eps_max;
  /**
   * Step acceptance constant.
   */
  double alpha;
  /**
   * Terminate once the KKT residual falls to this level.
   */
  double stop_tol;
  size_t max_outer;
} cp_solve_options;

/**
 * One trace record in C layout. Distance fields are meaningful only when
 * `has_distances` is true (the problem carried a reference solution).
 */
typedef struct cp_trace_record {
  size_t k;
  double c;
  double eps;
  double r;
  double step_norm;
  bool accepted;
  size_t inner_iterations;
  bool has_distances;
  double dist_primal;
  double dist_dual;
  double dist_pd;
} cp_trace_record;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the message of the most recent error on this thread into `buf`
 * (NUL-terminated, truncated to `cap`). Returns the full message length in
 * bytes, excluding the terminator; call with a null buffer to size it.
 *
 * # Safety
 * `buf` must point to `cap` writable bytes when non-null.
 */
size_t cp_last_error_message(char *buf, size_t cap);

/**
 * Number of registered benchmark problems.
 */
size_t cp_registry_count(void);

/**
 * Copies the registry name at `index` into `buf` (NUL-terminated, truncated
 * to `cap`); returns the name's byte length, or 0 for an out-of-range index.
 *
 * # Safety
 * `buf` must point to `cap` writable bytes when non-null.
 */
size_t cp_registry_name(size_t index, char *buf, size_t cap);

/**
 * Loads a registered benchmark by name into a new problem handle.
 *
 * # Safety
 * `name` must be a NUL-terminated string; `out` must be a valid pointer.
 */
enum cp_status cp_problem_from_registry(const char *name, struct cp_problem **out);

/**
 * Parses a problem JSON document into a new problem handle.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be a valid pointer.
 */
enum cp_status cp_problem_from_json(const char *json, struct cp_problem **out);

/**
 * Releases a problem handle.
 *
 * # Safety
 * `problem` must come from `cp_problem_from_*` and not be freed twice.
 */
void cp_problem_free(struct cp_problem *problem);

/**
 * Primal dimension of the problem, or 0 for a null handle.
 *
 * # Safety
 * `problem` must be null or a live handle.
 */
size_t cp_problem_primal_dim(const struct cp_problem *problem);

/**
 * Constraint-image dimension of the problem, or 0 for a null handle.
 *
 * # Safety
 * `problem` must be null or a live handle.
 */
size_t cp_problem_dual_dim(const struct cp_problem *problem);

/**
 * Whether the problem carries a reference solution (enables the distance
 * columns of the trace).
 *
 * # Safety
 * `problem` must be null or a live handle.
 */
bool cp_problem_has_reference(const struct cp_problem *problem);

/**
 * Fills `out` with the default solve options.
 *
 * # Safety
 * `out` must be null or a valid pointer.
 */
enum cp_status cp_solve_options_default(struct cp_solve_options *out);

/**
 * Runs the solver. Null `x0`/`lam0` select the deterministic default start;
 * null `options` selects the defaults. On `CP_OK` and `CP_ITERATION_LIMIT`
 * the trace handle is always set; on `CP_SOLVER_FAILURE` it carries the
 * partial trace up to the failure when one exists.
 *
 * # Safety
 * `problem` must be a live handle; `x0`/`lam0` must point to `x0_len`/
 * `lam0_len` doubles when non-null; `out` must be a valid pointer.
 */
enum cp_status cp_solve(const struct cp_problem *problem,
                        const double *x0,
                        size_t x0_len,
                        const double *lam0,
                        size_t lam0_len,
                        const struct cp_solve_options *options,
                        struct cp_trace **out);

/**
 * Releases a trace handle.
 *
 * # Safety
 * `trace` must come from `cp_solve` and not be freed twice.
 */
void cp_trace_free(struct cp_trace *trace);

/**
 * Number of records in the trace, or 0 for a null handle.
 *
 * # Safety
 * `trace` must be null or a live handle.
 */
size_t cp_trace_len(const struct cp_trace *trace);

/**
 * Whether the run reached the stopping tolerance.
 *
 * # Safety
 * `trace` must be null or a live handle.
 */
bool cp_trace_converged(const struct cp_trace *trace);

/**
 * KKT residual at the final iterate; NaN for a null handle.
 *
 * # Safety
 * `trace` must be null or a live handle.
 */
double cp_trace_final_residual(const struct cp_trace *trace);

/**
 * Copies the final primal iterate into `buf` (length `cp_problem_primal_dim`).
 *
 * # Safety
 * `trace` must be null or a live handle; `buf` must hold `len` doubles.
 */
enum cp_status cp_trace_final_x(const struct cp_trace *trace, double *buf, size_t len);

/**
 * Copies the final multiplier into `buf` (length `cp_problem_dual_dim`).
 *
 * # Safety
 * `trace` must be null or a live handle; `buf` must hold `len` doubles.
 */
enum cp_status cp_trace_final_multiplier(const struct cp_trace *trace, double *buf, size_t len);

/**
 * Copies the trace record at index `k` into `out`.
 *
 * # Safety
 * `trace` must be null or a live handle; `out` must be a valid pointer.
 */
enum cp_status cp_trace_record_at(const struct cp_trace *trace,
                                  size_t k,
                                  struct cp_trace_record *out);

/**
 * Serializes the trace to the CSV contract of the command-line tool.
 * Copies up to `cap - 1` bytes into `buf` with a NUL terminator and returns
 * the full byte length; call with a null buffer to size it.
 *
 * # Safety
 * `trace` must be null or a live handle; `buf` must hold `cap` bytes when
 * non-null.
 */
size_t cp_trace_to_csv(const struct cp_trace *trace, char *buf, size_t cap);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus
