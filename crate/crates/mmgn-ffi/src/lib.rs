//! C ABI for the `mmgn` one-bit matrix completion library.
//!
//! Design rules:
//! - Opaque handles (`MmgnObservations`, `MmgnReport`) own all Rust-side
//!   memory; each has a matching `*_free` that accepts NULL.
//! - Every fallible call returns an [`MmgnStatus`] code and writes its result
//!   through out-pointers, which are left untouched on failure.
//! - A human-readable message for the most recent failure on the current
//!   thread is available from [`mmgn_last_error_message`].
//! - Panics never unwind across the boundary; they are caught and reported as
//!   [`MmgnStatus::Panic`].
//! - Matrix buffers cross the boundary in column-major order, matching the
//!   library's file formats.

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use libc::{c_char, size_t};

use mmgn::{
    solve, select_rank, Error, InitKind, LinkKind, LinkModel, ObservationSet, SolveReport,
    SolverConfig, StopReason,
};

/// Result code for every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MmgnStatus {
    /// Success.
    Ok = 0,
    /// A required pointer argument was NULL.
    NullArgument = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// A value was outside its mathematical domain (rank, noise scale, ...).
    Domain = 3,
    /// Array or matrix dimensions were inconsistent.
    Dimension = 4,
    /// A file or string could not be parsed.
    Parse = 5,
    /// An operating-system I/O error.
    Io = 6,
    /// An internal panic was caught at the boundary.
    Panic = 7,
}

/// Observation model for the binary responses.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MmgnLink {
    /// Gaussian noise: P(y = 1) is the normal CDF of the entry over sigma.
    Probit = 0,
    /// Logistic noise: P(y = 1) is the logistic CDF of the entry over sigma.
    Logistic = 1,
}

/// Factor initialization strategy.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MmgnInit {
    /// Scaled truncated SVD of the fill-in matrix (recommended).
    Spectral = 0,
    /// Seeded Gaussian factors.
    Random = 1,
}

/// Why the outer loop stopped.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MmgnStopReason {
    /// Relative objective decrease fell below the tolerance.
    TolMet = 0,
    /// The outer iteration cap was reached.
    MaxIter = 1,
    /// Backtracking found no decrease.
    Stalled = 2,
}

/// Solver settings; obtain defaults from [`mmgn_options_default`] and adjust.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct MmgnOptions {
    /// Observation model.
    pub link: MmgnLink,
    /// Noise scale; must be positive and finite.
    pub sigma: f64,
    /// Factorization rank; must lie in 1..=min(m, n).
    pub rank: size_t,
    /// Relative objective-decrease stopping tolerance.
    pub tol: f64,
    /// Cap on outer iterations.
    pub max_outer_iter: size_t,
    /// Inner least-squares stopping tolerance.
    pub inner_tol: f64,
    /// Inner iteration cap; 0 selects an automatic cap.
    pub inner_max_iter: size_t,
    /// Factor initialization strategy.
    pub init: MmgnInit,
    /// Master seed; equal seeds give bitwise-identical runs.
    pub seed: u64,
}

/// Opaque handle to an immutable observation set.
pub struct MmgnObservations {
    inner: ObservationSet,
}

/// Opaque handle to the result of a solve.
pub struct MmgnReport {
    inner: SolveReport,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(message: &str) {
    let sanitized: String = message.chars().filter(|&c| c != '\0').collect();
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn fail(status: MmgnStatus, message: &str) -> MmgnStatus {
    set_last_error(message);
    status
}

fn fail_with(err: &Error) -> MmgnStatus {
    let status = match err {
        Error::Domain(_) => MmgnStatus::Domain,
        Error::Dimension(_) => MmgnStatus::Dimension,
        Error::Parse(_) => MmgnStatus::Parse,
        Error::Io(_) => MmgnStatus::Io,
    };
    fail(status, &err.to_string())
}

/// Run `f` with panics converted into an error status.
fn guarded<F: FnOnce() -> MmgnStatus>(f: F) -> MmgnStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unidentified panic".to_string());
            fail(MmgnStatus::Panic, &format!("internal panic: {msg}"))
        }
    }
}

fn options_to_config(options: &MmgnOptions) -> (SolverConfig, Result<LinkModel, Error>) {
    let config = SolverConfig {
        rank: options.rank,
        tol: options.tol,
        max_outer_iter: options.max_outer_iter,
        inner_tol: options.inner_tol,
        inner_max_iter: if options.inner_max_iter == 0 {
            None
        } else {
            Some(options.inner_max_iter)
        },
        init: match options.init {
            MmgnInit::Spectral => InitKind::Spectral,
            MmgnInit::Random => InitKind::Random,
        },
        seed: options.seed,
        ..SolverConfig::default()
    };
    let kind = match options.link {
        MmgnLink::Probit => LinkKind::Probit,
        MmgnLink::Logistic => LinkKind::Logistic,
    };
    (config, LinkModel::new(kind, options.sigma))
}

/// Message for the most recent failure on the calling thread.
///
/// The pointer stays valid until the next failing call on the same thread.
/// Returns an empty string when no failure has been recorded.
#[no_mangle]
pub extern "C" fn mmgn_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mmgn_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Default solver options: probit link with unit noise, rank 1, tolerance
/// 1e-4, 300 outer iterations, spectral initialization, seed 0.
#[no_mangle]
pub extern "C" fn mmgn_options_default() -> MmgnOptions {
    let defaults = SolverConfig::default();
    MmgnOptions {
        link: MmgnLink::Probit,
        sigma: 1.0,
        rank: defaults.rank,
        tol: defaults.tol,
        max_outer_iter: defaults.max_outer_iter,
        inner_tol: defaults.inner_tol,
        inner_max_iter: 0,
        init: MmgnInit::Spectral,
        seed: defaults.seed,
    }
}

/// Build an observation set from parallel arrays of coordinates and labels.
///
/// Indices are 0-based; `labels[k]` must be +1 or -1. Duplicate coordinates
/// with equal labels collapse; conflicting duplicates are rejected. On success
/// writes a handle to `out`; free it with [`mmgn_observations_free`].
///
/// # Safety
/// `rows`, `cols`, and `labels` must point to `len` readable elements, and
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mmgn_observations_new(
    m: u32,
    n: u32,
    rows: *const u32,
    cols: *const u32,
    labels: *const i8,
    len: size_t,
    out: *mut *mut MmgnObservations,
) -> MmgnStatus {
    if out.is_null() || (len > 0 && (rows.is_null() || cols.is_null() || labels.is_null())) {
        return fail(MmgnStatus::NullArgument, "mmgn_observations_new: NULL argument");
    }
    let rows = if len == 0 { &[][..] } else { std::slice::from_raw_parts(rows, len) };
    let cols = if len == 0 { &[][..] } else { std::slice::from_raw_parts(cols, len) };
    let labels = if len == 0 { &[][..] } else { std::slice::from_raw_parts(labels, len) };
    guarded(|| {
        let triplets: Vec<(u32, u32, i8)> = rows
            .iter()
            .zip(cols)
            .zip(labels)
            .map(|((&i, &j), &y)| (i, j, y))
            .collect();
        match ObservationSet::from_triplets(m as usize, n as usize, &triplets) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(MmgnObservations { inner }));
                MmgnStatus::Ok
            }
            Err(err) => fail_with(&err),
        }
    })
}

/// Read observations from a triplet CSV file (header `i,j,y`, 1-based
/// indices, labels +1/-1). Pass 0 for `m` or `n` to infer that dimension
/// from the largest index present.
///
/// # Safety
/// `path` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mmgn_observations_from_csv(
    path: *const c_char,
    m: u32,
    n: u32,
    out: *mut *mut MmgnObservations,
) -> MmgnStatus {
    if path.is_null() || out.is_null() {
        return fail(MmgnStatus::NullArgument, "mmgn_observations_from_csv: NULL argument");
    }
    let path = match CStr::from_ptr(path).to_str() {
        Ok(s) => s.to_string(),
        Err(_) => {
            return fail(
                MmgnStatus::InvalidUtf8,
                "mmgn_observations_from_csv: path is not valid UTF-8",
            )
        }
    };
    guarded(|| {
        let rows = if m == 0 { None } else { Some(m as usize) };
        let cols = if n == 0 { None } else { Some(n as usize) };
        match mmgn::io::read_observations_csv(Path::new(&path), rows, cols) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(MmgnObservations { inner }));
                MmgnStatus::Ok
            }
            Err(err) => fail_with(&err),
        }
    })
}

/// Number of observed entries; 0 for NULL.
#[no_mangle]
pub extern "C" fn mmgn_observations_len(obs: *const MmgnObservations) -> size_t {
    unsafe { obs.as_ref() }.map_or(0, |o| o.inner.len())
}

/// Number of matrix rows; 0 for NULL.
#[no_mangle]
pub extern "C" fn mmgn_observations_rows(obs: *const MmgnObservations) -> u32 {
    unsafe { obs.as_ref() }.map_or(0, |o| o.inner.m() as u32)
}

/// Number of matrix columns; 0 for NULL.
#[no_mangle]
pub extern "C" fn mmgn_observations_cols(obs: *const MmgnObservations) -> u32 {
    unsafe { obs.as_ref() }.map_or(0, |o| o.inner.n() as u32)
}

/// Release an observation set. NULL is a no-op.
#[no_mangle]
pub extern "C" fn mmgn_observations_free(obs: *mut MmgnObservations) {
    if !obs.is_null() {
        drop(unsafe { Box::from_raw(obs) });
    }
}

/// Fit a low-rank factorization to the observations.
///
/// On success writes a report handle to `out`; free it with
/// [`mmgn_report_free`]. Equal inputs and options give bitwise-identical
/// results.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn mmgn_solve(
    obs: *const MmgnObservations,
    options: *const MmgnOptions,
    out: *mut *mut MmgnReport,
) -> MmgnStatus {
    let (Some(obs), Some(options)) = (obs.as_ref(), options.as_ref()) else {
        return fail(MmgnStatus::NullArgument, "mmgn_solve: NULL argument");
    };
    if out.is_null() {
        return fail(MmgnStatus::NullArgument, "mmgn_solve: NULL argument");
    }
    guarded(|| {
        let (config, model) = options_to_config(options);
        let model = match model {
            Ok(model) => model,
            Err(err) => return fail_with(&err),
        };
        match solve(&obs.inner, &model, &config) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(MmgnReport { inner }));
                MmgnStatus::Ok
            }
            Err(err) => fail_with(&err),
        }
    })
}

/// Choose a rank from `ranks` by held-out likelihood on an internal
/// validation split. `options.rank` is ignored. Writes the winner to
/// `out_rank`; refitting at that rank is the caller's move.
///
/// # Safety
/// `ranks` must point to `n_ranks` readable elements; all pointers must be
/// valid.
#[no_mangle]
pub unsafe extern "C" fn mmgn_select_rank(
    obs: *const MmgnObservations,
    options: *const MmgnOptions,
    ranks: *const size_t,
    n_ranks: size_t,
    out_rank: *mut size_t,
) -> MmgnStatus {
    let (Some(obs), Some(options)) = (obs.as_ref(), options.as_ref()) else {
        return fail(MmgnStatus::NullArgument, "mmgn_select_rank: NULL argument");
    };
    if ranks.is_null() || out_rank.is_null() {
        return fail(MmgnStatus::NullArgument, "mmgn_select_rank: NULL argument");
    }
    let candidates: Vec<usize> = std::slice::from_raw_parts(ranks, n_ranks).to_vec();
    guarded(|| {
        let (config, model) = options_to_config(options);
        let model = match model {
            Ok(model) => model,
            Err(err) => return fail_with(&err),
        };
        match select_rank(&obs.inner, &model, &candidates, &config) {
            Ok(selection) => {
                *out_rank = selection.chosen_rank;
                MmgnStatus::Ok
            }
            Err(err) => fail_with(&err),
        }
    })
}

/// Number of matrix rows in the fitted factorization; 0 for NULL.
#[no_mangle]
pub extern "C" fn mmgn_report_rows(report: *const MmgnReport) -> size_t {
    unsafe { report.as_ref() }.map_or(0, |r| r.inner.factors.m())
}

/// Number of matrix columns in the fitted factorization; 0 for NULL.
#[no_mangle]
pub extern "C" fn mmgn_report_cols(report: *const MmgnReport) -> size_t {
    unsafe { report.as_ref() }.map_or(0, |r| r.inner.factors.n())
}

/// Factorization rank; 0 for NULL.
#[no_mangle]
pub extern "C" fn mmgn_report_rank(report: *const MmgnReport) -> size_t {
    unsafe { report.as_ref() }.map_or(0, |r| r.inner.factors.rank())
}

/// Copy the fitted factors out, column-major: `u` receives rows x rank
/// doubles, `v` receives cols x rank doubles. The estimated matrix is
/// `U * V^T`.
///
/// # Safety
/// `u` and `v` must point to writable buffers of the stated sizes.
#[no_mangle]
pub unsafe extern "C" fn mmgn_report_copy_factors(
    report: *const MmgnReport,
    u: *mut f64,
    v: *mut f64,
) -> MmgnStatus {
    let Some(report) = report.as_ref() else {
        return fail(MmgnStatus::NullArgument, "mmgn_report_copy_factors: NULL argument");
    };
    if u.is_null() || v.is_null() {
        return fail(MmgnStatus::NullArgument, "mmgn_report_copy_factors: NULL argument");
    }
    let factors = &report.inner.factors;
    std::ptr::copy_nonoverlapping(factors.u().as_slice().as_ptr(), u, factors.u().len());
    std::ptr::copy_nonoverlapping(factors.v().as_slice().as_ptr(), v, factors.v().len());
    MmgnStatus::Ok
}

/// Predicted entry `(U V^T)[i, j]` (0-based); NaN for NULL or out-of-range
/// indices.
#[no_mangle]
pub extern "C" fn mmgn_report_predict(report: *const MmgnReport, i: u32, j: u32) -> f64 {
    match unsafe { report.as_ref() } {
        Some(r)
            if (i as usize) < r.inner.factors.m() && (j as usize) < r.inner.factors.n() =>
        {
            r.inner.factors.predict(i as usize, j as usize)
        }
        _ => f64::NAN,
    }
}

/// Final objective value (negative log-likelihood); NaN for NULL.
#[no_mangle]
pub extern "C" fn mmgn_report_final_objective(report: *const MmgnReport) -> f64 {
    unsafe { report.as_ref() }.map_or(f64::NAN, |r| *r.inner.ll_trace.last().unwrap())
}

/// Number of accepted outer iterations; 0 for NULL.
#[no_mangle]
pub extern "C" fn mmgn_report_outer_iterations(report: *const MmgnReport) -> size_t {
    unsafe { report.as_ref() }.map_or(0, |r| r.inner.outer_iterations)
}

/// Why the solve stopped; NULL maps to the iteration-cap reason.
#[no_mangle]
pub extern "C" fn mmgn_report_stop_reason(report: *const MmgnReport) -> MmgnStopReason {
    match unsafe { report.as_ref() }.map(|r| r.inner.stop_reason) {
        Some(StopReason::TolMet) => MmgnStopReason::TolMet,
        Some(StopReason::Stalled) => MmgnStopReason::Stalled,
        Some(StopReason::MaxIter) | None => MmgnStopReason::MaxIter,
    }
}

/// Wall-clock seconds spent inside the solve; NaN for NULL.
#[no_mangle]
pub extern "C" fn mmgn_report_runtime_seconds(report: *const MmgnReport) -> f64 {
    unsafe { report.as_ref() }.map_or(f64::NAN, |r| r.inner.runtime_seconds)
}

/// Length of the objective trace (initial value plus one per accepted step);
/// 0 for NULL.
#[no_mangle]
pub extern "C" fn mmgn_report_trace_len(report: *const MmgnReport) -> size_t {
    unsafe { report.as_ref() }.map_or(0, |r| r.inner.ll_trace.len())
}

/// Copy the objective trace into `out`, which must hold `cap` doubles;
/// `cap` must be at least [`mmgn_report_trace_len`].
///
/// # Safety
/// `out` must point to `cap` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn mmgn_report_copy_trace(
    report: *const MmgnReport,
    out: *mut f64,
    cap: size_t,
) -> MmgnStatus {
    let Some(report) = report.as_ref() else {
        return fail(MmgnStatus::NullArgument, "mmgn_report_copy_trace: NULL argument");
    };
    if out.is_null() {
        return fail(MmgnStatus::NullArgument, "mmgn_report_copy_trace: NULL argument");
    }
    let trace = &report.inner.ll_trace;
    if cap < trace.len() {
        return fail(
            MmgnStatus::Dimension,
            &format!("mmgn_report_copy_trace: need capacity {}, got {cap}", trace.len()),
        );
    }
    std::ptr::copy_nonoverlapping(trace.as_ptr(), out, trace.len());
    MmgnStatus::Ok
}

/// Release a report. NULL is a no-op.
#[no_mangle]
pub extern "C" fn mmgn_report_free(report: *mut MmgnReport) {
    if !report.is_null() {
        drop(unsafe { Box::from_raw(report) });
    }
}
