//! C ABI for the solver: opaque handles, plain error codes, and a
//! thread-local last-error message. The header is generated into
//! `include/conic_palm.h` at build time.
//!
//! Handles returned by `cp_problem_*` and `cp_solve` own their data and must
//! be released with the matching `*_free` function exactly once. All
//! functions are safe to call from multiple threads as long as each handle
//! is used by one thread at a time.

#![allow(non_camel_case_types)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use conic_palm::cli::trace_to_csv;
use conic_palm::drivers::{default_start, run_alm, run_palm, EpsRule, RunConfig, Schedule, Trace};
use conic_palm::model::{parse_problem, registry_get, registry_names, ProblemInstance};
use conic_palm::Error;
use nalgebra::DVector;

/// Status codes returned by every fallible entry point.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum cp_status {
    CP_OK = 0,
    /// A required pointer argument was null.
    CP_NULL_ARGUMENT = 1,
    CP_INVALID_ARGUMENT = 2,
    CP_UTF8_ERROR = 3,
    CP_PARSE_ERROR = 4,
    CP_UNKNOWN_PROBLEM = 5,
    CP_DIMENSION_MISMATCH = 6,
    CP_NUMERICAL_ERROR = 7,
    /// The inner solve or the step acceptance failed; a partial trace is
    /// still returned when available.
    CP_SOLVER_FAILURE = 8,
    /// The outer iteration budget ran out; the trace is valid.
    CP_ITERATION_LIMIT = 9,
    CP_BUFFER_TOO_SMALL = 10,
    CP_INTERNAL_ERROR = 11,
}

/// Solver variant.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum cp_method {
    CP_METHOD_PALM = 0,
    CP_METHOD_ALM = 1,
}

/// Penalty schedule kind.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum cp_schedule_kind {
    /// `c_k = penalty`.
    CP_SCHEDULE_CONSTANT = 0,
    /// `c_k = min(penalty * growth^k, penalty_cap)`.
    CP_SCHEDULE_GEOMETRIC = 1,
    /// `c_k = penalty * growth^k`, unbounded.
    CP_SCHEDULE_UNBOUNDED = 2,
}

/// Options of a solve; obtain defaults from `cp_solve_options_default`.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct cp_solve_options {
    pub method: cp_method,
    pub schedule: cp_schedule_kind,
    /// Constant penalty, or the initial penalty of a growing schedule.
    pub penalty: f64,
    /// Growth factor of geometric/unbounded schedules (> 1).
    pub growth: f64,
    /// Cap of the geometric schedule.
    pub penalty_cap: f64,
    /// Inner tolerance rule `eps(r) = min(eps_max, sigma * r^(1 + theta))`.
    pub sigma: f64,
    pub theta: f64,
    pub eps_max: f64,
    /// Step acceptance constant.
    pub alpha: f64,
    /// Terminate once the KKT residual falls to this level.
    pub stop_tol: f64,
    pub max_outer: usize,
}

impl Default for cp_solve_options {
    fn default() -> Self {
        let config = RunConfig::default();
        let (penalty, growth, penalty_cap) = match config.schedule {
            Schedule::Geometric { c0, rho, c_max } => (c0, rho, c_max),
            _ => unreachable!("default schedule is geometric"),
        };
        cp_solve_options {
            method: cp_method::CP_METHOD_PALM,
            schedule: cp_schedule_kind::CP_SCHEDULE_GEOMETRIC,
            penalty,
            growth,
            penalty_cap,
            sigma: config.eps_rule.sigma,
            theta: config.eps_rule.theta,
            eps_max: config.eps_rule.eps_max,
            alpha: config.alpha,
            stop_tol: config.stop_tol,
            max_outer: config.max_outer,
        }
    }
}

/// One trace record in C layout. Distance fields are meaningful only when
/// `has_distances` is true (the problem carried a reference solution).
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct cp_trace_record {
    pub k: usize,
    pub c: f64,
    pub eps: f64,
    pub r: f64,
    pub step_norm: f64,
    pub accepted: bool,
    pub inner_iterations: usize,
    pub has_distances: bool,
    pub dist_primal: f64,
    pub dist_dual: f64,
    pub dist_pd: f64,
}

/// Opaque problem handle.
pub struct cp_problem {
    inner: ProblemInstance,
}

/// Opaque trace handle.
pub struct cp_trace {
    inner: Trace,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(message: impl Into<String>) {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = message.into());
}

fn status_of(error: &Error) -> cp_status {
    match error {
        Error::DimensionMismatch(_) => cp_status::CP_DIMENSION_MISMATCH,
        Error::InvalidArgument(_) | Error::MissingReference(_) | Error::TraceTooShort(_) => {
            cp_status::CP_INVALID_ARGUMENT
        }
        Error::EigenFailure { .. } => cp_status::CP_NUMERICAL_ERROR,
        Error::UnknownProblem(_) => cp_status::CP_UNKNOWN_PROBLEM,
        Error::RegistryIntegrity { .. } => cp_status::CP_INTERNAL_ERROR,
        Error::Parse { .. } => cp_status::CP_PARSE_ERROR,
        Error::SubproblemFailure { .. } | Error::StepRejected { .. } => {
            cp_status::CP_SOLVER_FAILURE
        }
    }
}

fn fail(error: &Error) -> cp_status {
    set_error(error.to_string());
    status_of(error)
}

/// Runs a closure with panics converted to `CP_INTERNAL_ERROR`.
fn guarded(body: impl FnOnce() -> cp_status) -> cp_status {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic in solver library".to_string());
            set_error(message);
            cp_status::CP_INTERNAL_ERROR
        }
    }
}

/// Copies the message of the most recent error on this thread into `buf`
/// (NUL-terminated, truncated to `cap`). Returns the full message length in
/// bytes, excluding the terminator; call with a null buffer to size it.
///
/// # Safety
/// `buf` must point to `cap` writable bytes when non-null.
#[no_mangle]
pub unsafe extern "C" fn cp_last_error_message(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|slot| {
        let message = slot.borrow();
        let bytes = message.as_bytes();
        if !buf.is_null() && cap > 0 {
            let n = bytes.len().min(cap - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr(), buf as *mut u8, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Number of registered benchmark problems.
#[no_mangle]
pub extern "C" fn cp_registry_count() -> usize {
    registry_names().len()
}

/// Copies the registry name at `index` into `buf` (NUL-terminated, truncated
/// to `cap`); returns the name's byte length, or 0 for an out-of-range index.
///
/// # Safety
/// `buf` must point to `cap` writable bytes when non-null.
#[no_mangle]
pub unsafe extern "C" fn cp_registry_name(index: usize, buf: *mut c_char, cap: usize) -> usize {
    let names = registry_names();
    if index >= names.len() {
        return 0;
    }
    let bytes = names[index].as_bytes();
    if !buf.is_null() && cap > 0 {
        let n = bytes.len().min(cap - 1);
        ptr::copy_nonoverlapping(bytes.as_ptr(), buf as *mut u8, n);
        *buf.add(n) = 0;
    }
    bytes.len()
}

unsafe fn read_c_str<'a>(text: *const c_char) -> Result<&'a str, cp_status> {
    if text.is_null() {
        set_error("null string argument");
        return Err(cp_status::CP_NULL_ARGUMENT);
    }
    CStr::from_ptr(text).to_str().map_err(|e| {
        set_error(format!("invalid UTF-8: {e}"));
        cp_status::CP_UTF8_ERROR
    })
}

fn hand_out_problem(out: *mut *mut cp_problem, instance: ProblemInstance) -> cp_status {
    let handle = Box::new(cp_problem { inner: instance });
    unsafe { *out = Box::into_raw(handle) };
    cp_status::CP_OK
}

/// Loads a registered benchmark by name into a new problem handle.
///
/// # Safety
/// `name` must be a NUL-terminated string; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cp_problem_from_registry(
    name: *const c_char,
    out: *mut *mut cp_problem,
) -> cp_status {
    guarded(|| {
        if out.is_null() {
            set_error("null output pointer");
            return cp_status::CP_NULL_ARGUMENT;
        }
        let name = match read_c_str(name) {
            Ok(name) => name,
            Err(status) => return status,
        };
        match registry_get(name) {
            Ok(instance) => hand_out_problem(out, instance),
            Err(e) => fail(&e),
        }
    })
}

/// Parses a problem JSON document into a new problem handle.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cp_problem_from_json(
    json: *const c_char,
    out: *mut *mut cp_problem,
) -> cp_status {
    guarded(|| {
        if out.is_null() {
            set_error("null output pointer");
            return cp_status::CP_NULL_ARGUMENT;
        }
        let json = match read_c_str(json) {
            Ok(json) => json,
            Err(status) => return status,
        };
        match parse_problem(json) {
            Ok(instance) => hand_out_problem(out, instance),
            Err(e) => fail(&e),
        }
    })
}

/// Releases a problem handle.
///
/// # Safety
/// `problem` must come from `cp_problem_from_*` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn cp_problem_free(problem: *mut cp_problem) {
    if !problem.is_null() {
        drop(Box::from_raw(problem));
    }
}

/// Primal dimension of the problem, or 0 for a null handle.
///
/// # Safety
/// `problem` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cp_problem_primal_dim(problem: *const cp_problem) -> usize {
    problem.as_ref().map_or(0, |p| p.inner.n())
}

/// Constraint-image dimension of the problem, or 0 for a null handle.
///
/// # Safety
/// `problem` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cp_problem_dual_dim(problem: *const cp_problem) -> usize {
    problem.as_ref().map_or(0, |p| p.inner.m())
}

/// Whether the problem carries a reference solution (enables the distance
/// columns of the trace).
///
/// # Safety
/// `problem` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cp_problem_has_reference(problem: *const cp_problem) -> bool {
    problem
        .as_ref()
        .is_some_and(|p| p.inner.reference().is_some())
}

/// Fills `out` with the default solve options.
///
/// # Safety
/// `out` must be null or a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cp_solve_options_default(out: *mut cp_solve_options) -> cp_status {
    if out.is_null() {
        set_error("null output pointer");
        return cp_status::CP_NULL_ARGUMENT;
    }
    *out = cp_solve_options::default();
    cp_status::CP_OK
}

fn config_from(options: &cp_solve_options) -> RunConfig {
    let schedule = match options.schedule {
        cp_schedule_kind::CP_SCHEDULE_CONSTANT => Schedule::Constant(options.penalty),
        cp_schedule_kind::CP_SCHEDULE_GEOMETRIC => Schedule::Geometric {
            c0: options.penalty,
            rho: options.growth,
            c_max: options.penalty_cap,
        },
        cp_schedule_kind::CP_SCHEDULE_UNBOUNDED => Schedule::Unbounded {
            c0: options.penalty,
            rho: options.growth,
        },
    };
    RunConfig {
        schedule,
        eps_rule: EpsRule {
            sigma: options.sigma,
            theta: options.theta,
            eps_max: options.eps_max,
        },
        alpha: options.alpha,
        stop_tol: options.stop_tol,
        max_outer: options.max_outer,
        ..RunConfig::default()
    }
}

unsafe fn read_vector(
    data: *const f64,
    len: usize,
    expected: usize,
    what: &str,
) -> Result<Option<DVector<f64>>, cp_status> {
    if data.is_null() {
        return Ok(None);
    }
    if len != expected {
        set_error(format!("{what}: expected {expected} components, got {len}"));
        return Err(cp_status::CP_DIMENSION_MISMATCH);
    }
    let slice = std::slice::from_raw_parts(data, len);
    Ok(Some(DVector::from_column_slice(slice)))
}

/// Runs the solver. Null `x0`/`lam0` select the deterministic default start;
/// null `options` selects the defaults. On `CP_OK` and `CP_ITERATION_LIMIT`
/// the trace handle is always set; on `CP_SOLVER_FAILURE` it carries the
/// partial trace up to the failure when one exists.
///
/// # Safety
/// `problem` must be a live handle; `x0`/`lam0` must point to `x0_len`/
/// `lam0_len` doubles when non-null; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cp_solve(
    problem: *const cp_problem,
    x0: *const f64,
    x0_len: usize,
    lam0: *const f64,
    lam0_len: usize,
    options: *const cp_solve_options,
    out: *mut *mut cp_trace,
) -> cp_status {
    guarded(|| {
        if out.is_null() {
            set_error("null output pointer");
            return cp_status::CP_NULL_ARGUMENT;
        }
        *out = ptr::null_mut();
        let Some(problem) = problem.as_ref() else {
            set_error("null problem handle");
            return cp_status::CP_NULL_ARGUMENT;
        };
        let problem = &problem.inner;
        let options = options.as_ref().copied().unwrap_or_default();
        let config = config_from(&options);
        if let Err(e) = config.validate() {
            return fail(&e);
        }
        let (default_x0, default_lam0) = default_start(problem);
        let x0 = match read_vector(x0, x0_len, problem.n(), "x0") {
            Ok(v) => v.unwrap_or(default_x0),
            Err(status) => return status,
        };
        let lam0 = match read_vector(lam0, lam0_len, problem.m(), "lam0") {
            Ok(v) => v.unwrap_or(default_lam0),
            Err(status) => return status,
        };
        let result = match options.method {
            cp_method::CP_METHOD_PALM => run_palm(problem, &x0, &lam0, &config),
            cp_method::CP_METHOD_ALM => run_alm(problem, &x0, &lam0, &config),
        };
        match result {
            Ok(trace) => {
                let converged = trace.converged;
                *out = Box::into_raw(Box::new(cp_trace { inner: trace }));
                if converged {
                    cp_status::CP_OK
                } else {
                    set_error("outer iteration budget exhausted");
                    cp_status::CP_ITERATION_LIMIT
                }
            }
            Err(failure) => {
                let status = fail(&failure.source);
                if !failure.trace.is_empty() {
                    *out = Box::into_raw(Box::new(cp_trace {
                        inner: failure.trace,
                    }));
                }
                status
            }
        }
    })
}

/// Releases a trace handle.
///
/// # Safety
/// `trace` must come from `cp_solve` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn cp_trace_free(trace: *mut cp_trace) {
    if !trace.is_null() {
        drop(Box::from_raw(trace));
    }
}

/// Number of records in the trace, or 0 for a null handle.
///
/// # Safety
/// `trace` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cp_trace_len(trace: *const cp_trace) -> usize {
    trace.as_ref().map_or(0, |t| t.inner.len())
}

/// Whether the run reached the stopping tolerance.
///
/// # Safety
/// `trace` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cp_trace_converged(trace: *const cp_trace) -> bool {
    trace.as_ref().is_some_and(|t| t.inner.converged)
}

/// KKT residual at the final iterate; NaN for a null handle.
///
/// # Safety
/// `trace` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cp_trace_final_residual(trace: *const cp_trace) -> f64 {
    trace.as_ref().map_or(f64::NAN, |t| t.inner.final_r())
}

unsafe fn copy_vector(vector: &DVector<f64>, buf: *mut f64, len: usize) -> cp_status {
    if buf.is_null() {
        set_error("null buffer");
        return cp_status::CP_NULL_ARGUMENT;
    }
    if len < vector.len() {
        set_error(format!(
            "buffer holds {len} values, {} required",
            vector.len()
        ));
        return cp_status::CP_BUFFER_TOO_SMALL;
    }
    ptr::copy_nonoverlapping(vector.as_slice().as_ptr(), buf, vector.len());
    cp_status::CP_OK
}

/// Copies the final primal iterate into `buf` (length `cp_problem_primal_dim`).
///
/// # Safety
/// `trace` must be null or a live handle; `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn cp_trace_final_x(
    trace: *const cp_trace,
    buf: *mut f64,
    len: usize,
) -> cp_status {
    let Some(trace) = trace.as_ref() else {
        set_error("null trace handle");
        return cp_status::CP_NULL_ARGUMENT;
    };
    copy_vector(trace.inner.final_x(), buf, len)
}

/// Copies the final multiplier into `buf` (length `cp_problem_dual_dim`).
///
/// # Safety
/// `trace` must be null or a live handle; `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn cp_trace_final_multiplier(
    trace: *const cp_trace,
    buf: *mut f64,
    len: usize,
) -> cp_status {
    let Some(trace) = trace.as_ref() else {
        set_error("null trace handle");
        return cp_status::CP_NULL_ARGUMENT;
    };
    copy_vector(trace.inner.final_lam(), buf, len)
}

/// Copies the trace record at index `k` into `out`.
///
/// # Safety
/// `trace` must be null or a live handle; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cp_trace_record_at(
    trace: *const cp_trace,
    k: usize,
    out: *mut cp_trace_record,
) -> cp_status {
    let Some(trace) = trace.as_ref() else {
        set_error("null trace handle");
        return cp_status::CP_NULL_ARGUMENT;
    };
    if out.is_null() {
        set_error("null output pointer");
        return cp_status::CP_NULL_ARGUMENT;
    }
    let Some(record) = trace.inner.records.get(k) else {
        set_error(format!(
            "record {k} out of range ({} records)",
            trace.inner.len()
        ));
        return cp_status::CP_INVALID_ARGUMENT;
    };
    *out = cp_trace_record {
        k: record.k,
        c: record.c,
        eps: record.eps,
        r: record.r,
        step_norm: record.step_norm,
        accepted: record.accepted,
        inner_iterations: record.inner_iterations,
        has_distances: record.dist_pd.is_some(),
        dist_primal: record.dist_primal.unwrap_or(f64::NAN),
        dist_dual: record.dist_dual.unwrap_or(f64::NAN),
        dist_pd: record.dist_pd.unwrap_or(f64::NAN),
    };
    cp_status::CP_OK
}

/// Serializes the trace to the CSV contract of the command-line tool.
/// Copies up to `cap - 1` bytes into `buf` with a NUL terminator and returns
/// the full byte length; call with a null buffer to size it.
///
/// # Safety
/// `trace` must be null or a live handle; `buf` must hold `cap` bytes when
/// non-null.
#[no_mangle]
pub unsafe extern "C" fn cp_trace_to_csv(
    trace: *const cp_trace,
    buf: *mut c_char,
    cap: usize,
) -> usize {
    let Some(trace) = trace.as_ref() else {
        return 0;
    };
    let csv = trace_to_csv(&trace.inner);
    let bytes = csv.as_bytes();
    if !buf.is_null() && cap > 0 {
        let n = bytes.len().min(cap - 1);
        ptr::copy_nonoverlapping(bytes.as_ptr(), buf as *mut u8, n);
        *buf.add(n) = 0;
    }
    bytes.len()
}
