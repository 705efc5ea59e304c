//! C ABI over `blindcal`.
//!
//! Instances and results are opaque heap handles owned by the caller and
//! released with the matching `*_free` function. Every fallible call
//! returns a [`BcStatus`]; on failure a message is available from
//! [`bc_last_error`] on the same thread. Matrices cross the boundary as
//! column-major `double` buffers.

use blindcal::model::{decalibration_db, make_instance};
use blindcal::{normalized_cross_correlation, Dimensions, Error, MeasurementMatrix, ProblemInstance, SolveResult, SolverConfig};
use nalgebra::DMatrix;
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, UnwindSafe};
use std::ptr;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ShapeMismatch = 3,
    ParseError = 4,
    SolverFailure = 5,
    BufferTooSmall = 6,
    Internal = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BcMode {
    Calibrated = 0,
    Uncalibrated = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BcSolveStatus {
    Converged = 0,
    IterationLimit = 1,
    Infeasible = 2,
}

/// Opaque problem instance.
pub struct BcInstance(ProblemInstance);

/// Opaque solver result.
pub struct BcResult(SolveResult);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn fail(status: BcStatus, msg: impl Into<String>) -> BcStatus {
    set_error(msg);
    status
}

fn from_error(e: Error) -> BcStatus {
    let status = match e {
        Error::InvalidDimensions(_) | Error::InvalidParameter { .. } | Error::ZeroInput(_) => BcStatus::InvalidArgument,
        Error::ShapeMismatch { .. } => BcStatus::ShapeMismatch,
        Error::Parse(_) | Error::Json(_) => BcStatus::ParseError,
        Error::RankDeficient { .. } | Error::Unidentifiable(_) | Error::Lp(_) | Error::SizeGuard { .. } => {
            BcStatus::SolverFailure
        }
        _ => BcStatus::Internal,
    };
    fail(status, e.to_string())
}

/// Run `f`, turning panics into [`BcStatus::Internal`].
fn guard<F: FnOnce() -> BcStatus + UnwindSafe>(f: F) -> BcStatus {
    match catch_unwind(f) {
        Ok(s) => {
            if s == BcStatus::Ok {
                LAST_ERROR.with(|e| *e.borrow_mut() = None);
            }
            s
        }
        Err(_) => fail(BcStatus::Internal, "panic inside blindcal"),
    }
}

macro_rules! non_null {
    ($($p:expr),+) => {
        $(if $p.is_null() {
            return fail(BcStatus::NullPointer, concat!("`", stringify!($p), "` is null"));
        })+
    };
}

fn copy_out(src: &[f64], buf: *mut f64, len: usize) -> BcStatus {
    if len < src.len() {
        return fail(
            BcStatus::BufferTooSmall,
            format!("buffer holds {len} values, {} needed", src.len()),
        );
    }
    // SAFETY: caller guarantees `buf` points to `len` writable doubles
    unsafe { ptr::copy_nonoverlapping(src.as_ptr(), buf, src.len()) };
    BcStatus::Ok
}

fn give_string(s: String, out: *mut *mut c_char) -> BcStatus {
    match CString::new(s) {
        Ok(c) => {
            // SAFETY: `out` checked non-null by the caller of this helper
            unsafe { *out = c.into_raw() };
            BcStatus::Ok
        }
        Err(_) => fail(BcStatus::Internal, "string contains NUL"),
    }
}

/// Message of the last failed call on this thread, or NULL. The pointer
/// stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn bc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Release a string returned by this library.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn bc_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Generate a random instance `Y = diag(d)M₀X₀`.
///
/// # Safety
/// `out` must be a valid pointer to a handle slot.
#[no_mangle]
pub unsafe extern "C" fn bc_instance_generate(
    n: usize,
    m: usize,
    k: usize,
    l: usize,
    sigma: f64,
    seed: u64,
    out: *mut *mut BcInstance,
) -> BcStatus {
    non_null!(out);
    guard(|| {
        let dims = match Dimensions::new(n, m, k, l) {
            Ok(d) => d,
            Err(e) => return from_error(e),
        };
        match make_instance(dims, sigma, seed) {
            Ok(inst) => {
                *out = Box::into_raw(Box::new(BcInstance(inst)));
                BcStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Parse an instance from the JSON written by `blindcal gen`.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn bc_instance_from_json(json: *const c_char, out: *mut *mut BcInstance) -> BcStatus {
    non_null!(json, out);
    guard(|| {
        let text = match CStr::from_ptr(json).to_str() {
            Ok(t) => t,
            Err(e) => return fail(BcStatus::ParseError, format!("not UTF-8: {e}")),
        };
        match ProblemInstance::from_json(text) {
            Ok(inst) => {
                *out = Box::into_raw(Box::new(BcInstance(inst)));
                BcStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Serialize an instance; free the string with [`bc_string_free`].
///
/// # Safety
/// `inst` must be a live handle; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bc_instance_to_json(inst: *const BcInstance, out: *mut *mut c_char) -> BcStatus {
    non_null!(inst, out);
    guard(|| match (*inst).0.to_json() {
        Ok(s) => give_string(s, out),
        Err(e) => from_error(e),
    })
}

/// # Safety
/// `inst` must be a live handle; the outputs valid pointers.
#[no_mangle]
pub unsafe extern "C" fn bc_instance_dims(
    inst: *const BcInstance,
    n: *mut usize,
    m: *mut usize,
    k: *mut usize,
    l: *mut usize,
) -> BcStatus {
    non_null!(inst, n, m, k, l);
    let d = (*inst).0.dims;
    *n = d.n;
    *m = d.m;
    *k = d.k;
    *l = d.l;
    BcStatus::Ok
}

/// Observations `Y` (m × L, column-major).
///
/// # Safety
/// `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn bc_instance_observations(inst: *const BcInstance, buf: *mut f64, len: usize) -> BcStatus {
    non_null!(inst, buf);
    copy_out((*inst).0.observations.as_slice(), buf, len)
}

/// Planted signals `X₀` (N × L, column-major).
///
/// # Safety
/// `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn bc_instance_signals(inst: *const BcInstance, buf: *mut f64, len: usize) -> BcStatus {
    non_null!(inst, buf);
    copy_out((*inst).0.signals.entries.as_slice(), buf, len)
}

/// Measurement matrix `M₀` (m × N, column-major).
///
/// # Safety
/// `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn bc_instance_matrix(inst: *const BcInstance, buf: *mut f64, len: usize) -> BcStatus {
    non_null!(inst, buf);
    copy_out((*inst).0.m0.entries().as_slice(), buf, len)
}

/// `α = m / Σ(1/dᵢ)`, the scale relating the planted signals to the calibrated optimum.
///
/// # Safety
/// `inst` must be a live handle; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bc_instance_scale_factor(inst: *const BcInstance, out: *mut f64) -> BcStatus {
    non_null!(inst, out);
    *out = (*inst).0.scale_factor();
    BcStatus::Ok
}

/// # Safety
/// `inst` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn bc_instance_free(inst: *mut BcInstance) {
    if !inst.is_null() {
        drop(Box::from_raw(inst));
    }
}

fn solve_with(y: &DMatrix<f64>, m0: &MeasurementMatrix, mode: BcMode, out: *mut *mut BcResult) -> BcStatus {
    let mode = match mode {
        BcMode::Calibrated => blindcal::Mode::Calibrated,
        BcMode::Uncalibrated => blindcal::Mode::Uncalibrated,
    };
    match blindcal::solver::solve(mode, y, m0, &SolverConfig::default()) {
        Ok(r) => {
            // SAFETY: `out` checked non-null by the callers
            unsafe { *out = Box::into_raw(Box::new(BcResult(r))) };
            BcStatus::Ok
        }
        Err(e) => from_error(e),
    }
}

/// Solve an instance with default settings. A result is produced even when
/// the solver stops early; check [`bc_result_status`].
///
/// # Safety
/// `inst` must be a live handle; `out` a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn bc_solve(inst: *const BcInstance, mode: BcMode, out: *mut *mut BcResult) -> BcStatus {
    non_null!(inst, out);
    let inst = &(*inst).0;
    guard(|| solve_with(&inst.observations, &inst.m0, mode, out))
}

/// Solve from raw data: `m0` is m × N and `y` is m × L, both column-major.
///
/// # Safety
/// `m0` must hold `m·n` doubles, `y` `m·l` doubles; `out` a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn bc_solve_data(
    m0: *const f64,
    m: usize,
    n: usize,
    y: *const f64,
    l: usize,
    mode: BcMode,
    out: *mut *mut BcResult,
) -> BcStatus {
    non_null!(m0, y, out);
    if m == 0 || n == 0 || l == 0 {
        return fail(BcStatus::InvalidArgument, "dimensions must be positive");
    }
    let a = DMatrix::from_column_slice(m, n, std::slice::from_raw_parts(m0, m * n));
    let y = DMatrix::from_column_slice(m, l, std::slice::from_raw_parts(y, m * l));
    guard(|| match MeasurementMatrix::new(a) {
        Ok(m0) => solve_with(&y, &m0, mode, out),
        Err(e) => from_error(e),
    })
}

/// # Safety
/// `res` must be a live handle; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bc_result_status(res: *const BcResult, out: *mut BcSolveStatus) -> BcStatus {
    non_null!(res, out);
    *out = match (*res).0.status {
        blindcal::Status::Converged => BcSolveStatus::Converged,
        blindcal::Status::IterationLimit => BcSolveStatus::IterationLimit,
        blindcal::Status::Infeasible => BcSolveStatus::Infeasible,
    };
    BcStatus::Ok
}

/// `‖X̂‖₁`.
///
/// # Safety
/// `res` must be a live handle; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bc_result_objective(res: *const BcResult, out: *mut f64) -> BcStatus {
    non_null!(res, out);
    *out = (*res).0.objective;
    BcStatus::Ok
}

/// # Safety
/// `res` must be a live handle; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bc_result_iterations(res: *const BcResult, out: *mut usize) -> BcStatus {
    non_null!(res, out);
    *out = (*res).0.iterations;
    BcStatus::Ok
}

/// Estimated signals `X̂` (N × L, column-major).
///
/// # Safety
/// `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn bc_result_signals(res: *const BcResult, buf: *mut f64, len: usize) -> BcStatus {
    non_null!(res, buf);
    copy_out((*res).0.x_hat.as_slice(), buf, len)
}

/// Estimated inverse gains `δ̂` (length m); fails for uncalibrated results.
///
/// # Safety
/// `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn bc_result_inverse_gains(res: *const BcResult, buf: *mut f64, len: usize) -> BcStatus {
    non_null!(res, buf);
    match &(*res).0.delta_hat {
        Some(d) => copy_out(d.as_slice(), buf, len),
        None => fail(BcStatus::InvalidArgument, "uncalibrated results carry no gains"),
    }
}

/// Serialize a result; free the string with [`bc_string_free`].
///
/// # Safety
/// `res` must be a live handle; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bc_result_to_json(res: *const BcResult, out: *mut *mut c_char) -> BcStatus {
    non_null!(res, out);
    guard(|| match serde_json::to_string(&(*res).0) {
        Ok(s) => give_string(s, out),
        Err(e) => fail(BcStatus::Internal, e.to_string()),
    })
}

/// # Safety
/// `res` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn bc_result_free(res: *mut BcResult) {
    if !res.is_null() {
        drop(Box::from_raw(res));
    }
}

/// Normalized cross-correlation of two `rows × cols` column-major matrices.
///
/// # Safety
/// `a` and `b` must hold `rows·cols` doubles; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bc_ncc(a: *const f64, b: *const f64, rows: usize, cols: usize, out: *mut f64) -> BcStatus {
    non_null!(a, b, out);
    let a = DMatrix::from_column_slice(rows, cols, std::slice::from_raw_parts(a, rows * cols));
    let b = DMatrix::from_column_slice(rows, cols, std::slice::from_raw_parts(b, rows * cols));
    guard(|| match normalized_cross_correlation(&a, &b) {
        Ok(c) => {
            *out = c;
            BcStatus::Ok
        }
        Err(e) => from_error(e),
    })
}

/// Gain spread in dB for a given σ (`20σ / ln 10`).
#[no_mangle]
pub extern "C" fn bc_decalibration_db(sigma: f64) -> f64 {
    decalibration_db(sigma)
}
