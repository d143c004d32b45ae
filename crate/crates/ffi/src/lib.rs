//! C ABI for the robust mean estimator.
//!
//! Objects cross the boundary as opaque handles that the caller frees with the
//! matching `*_free` function. Every fallible call returns an [`RmStatus`];
//! the message of the last failure on the calling thread is available through
//! [`rm_last_error_message`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use robust_mean::bench::read_points_file;
use robust_mean::{run_algorithm1, AlgoConfig, AlgoTrace, Error, PointSet, Termination};

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    /// Mismatched shapes or other broken preconditions.
    Contract = 3,
    /// A numeric parameter is out of range.
    Parameter = 4,
    /// A file could not be read or parsed.
    Data = 5,
    BufferTooSmall = 6,
    Panic = 7,
}

/// A dataset of `n` points in dimension `d`.
pub struct RmPointSet(PointSet);

/// Estimator settings, initialized to the library defaults.
pub struct RmConfig(AlgoConfig);

/// The result of one estimation run.
pub struct RmTrace(AlgoTrace);

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn fail(status: RmStatus, msg: impl Into<String>) -> RmStatus {
    set_error(msg);
    status
}

fn from_error(e: Error) -> RmStatus {
    let status = match e {
        Error::Contract(_) => RmStatus::Contract,
        Error::Parameter(_) => RmStatus::Parameter,
        Error::Io { .. } | Error::Parse { .. } => RmStatus::Data,
        Error::Config(_) | Error::Usage(_) => RmStatus::InvalidArgument,
    };
    fail(status, e.to_string())
}

fn guard(f: impl FnOnce() -> RmStatus) -> RmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(RmStatus::Panic, "internal panic"),
    }
}

/// Copies the last error message of this thread into `buf` as a
/// NUL-terminated string, truncating if needed. Returns the full message
/// length plus one, so a caller can size a buffer by passing `len = 0`.
///
/// # Safety
/// `buf` must be valid for `len` bytes, or null when `len` is 0.
#[no_mangle]
pub unsafe extern "C" fn rm_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr(), buf as *mut u8, n);
            *buf.add(n) = 0;
        }
        bytes.len() + 1
    })
}

/// Builds a point set from `n * d` row-major values.
///
/// # Safety
/// `data` must point to `n * d` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rm_points_new(
    data: *const f64,
    n: usize,
    d: usize,
    out: *mut *mut RmPointSet,
) -> RmStatus {
    guard(|| {
        if data.is_null() || out.is_null() {
            return fail(RmStatus::NullPointer, "null pointer argument");
        }
        let Some(len) = n.checked_mul(d) else {
            return fail(RmStatus::InvalidArgument, "n * d overflows");
        };
        let values = std::slice::from_raw_parts(data, len).to_vec();
        match PointSet::new(values, n, d) {
            Ok(p) => {
                *out = Box::into_raw(Box::new(RmPointSet(p)));
                RmStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Reads a CSV file with one point per row.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rm_points_from_csv(
    path: *const c_char,
    header: bool,
    out: *mut *mut RmPointSet,
) -> RmStatus {
    guard(|| {
        if path.is_null() || out.is_null() {
            return fail(RmStatus::NullPointer, "null pointer argument");
        }
        let Ok(path) = CStr::from_ptr(path).to_str() else {
            return fail(RmStatus::InvalidArgument, "path is not valid UTF-8");
        };
        match read_points_file(Path::new(path), header) {
            Ok(p) => {
                *out = Box::into_raw(Box::new(RmPointSet(p)));
                RmStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `points` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rm_points_free(points: *mut RmPointSet) {
    if !points.is_null() {
        drop(Box::from_raw(points));
    }
}

/// Number of points, or 0 for a null handle.
///
/// # Safety
/// `points` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rm_points_n(points: *const RmPointSet) -> usize {
    points.as_ref().map_or(0, |p| p.0.n())
}

/// Dimension, or 0 for a null handle.
///
/// # Safety
/// `points` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rm_points_d(points: *const RmPointSet) -> usize {
    points.as_ref().map_or(0, |p| p.0.d())
}

/// A config with the library defaults. Never returns null.
#[no_mangle]
pub extern "C" fn rm_config_new() -> *mut RmConfig {
    Box::into_raw(Box::new(RmConfig(AlgoConfig::default())))
}

/// # Safety
/// `cfg` must be null or a handle from [`rm_config_new`], not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rm_config_free(cfg: *mut RmConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Sets one numeric field by name. Keys: `p`, `tau`, `c1`, `sigma`,
/// `eps_check`, `final_threshold`, `c2_init`, `tol_feas`, `max_sweeps`,
/// `polish_rounds`, `eta`, `rw_delta`, `rw_rounds`, `spectral_tol`, `spectral_max_iters`,
/// `allow_breakdown_violation` (nonzero is true). Ranges are checked when the
/// config is used.
///
/// # Safety
/// `cfg` must be a live handle and `key` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn rm_config_set(
    cfg: *mut RmConfig,
    key: *const c_char,
    value: f64,
) -> RmStatus {
    guard(|| {
        let (Some(cfg), false) = (cfg.as_mut(), key.is_null()) else {
            return fail(RmStatus::NullPointer, "null pointer argument");
        };
        let Ok(key) = CStr::from_ptr(key).to_str() else {
            return fail(RmStatus::InvalidArgument, "key is not valid UTF-8");
        };
        let count = || {
            if value >= 0.0 && value.fract() == 0.0 && value <= usize::MAX as f64 {
                Some(value as usize)
            } else {
                None
            }
        };
        let c = &mut cfg.0;
        match key {
            "p" => c.p = value,
            "tau" => c.tau = value,
            "c1" => c.c1 = value,
            "sigma" => c.sigma = value,
            "eps_check" => c.eps_check = Some(value),
            "final_threshold" => c.final_threshold = Some(value),
            "c2_init" => c.c2_init = Some(value),
            "tol_feas" => c.solver.tol_feas = value,
            "eta" => c.solver.eta = value,
            "rw_delta" => c.rw_delta = value,
            "spectral_tol" => c.solver.spectral.tol = value,
            "allow_breakdown_violation" => c.allow_breakdown_violation = value != 0.0,
            "max_sweeps" | "polish_rounds" | "rw_rounds" | "spectral_max_iters" => {
                let Some(v) = count() else {
                    return fail(
                        RmStatus::InvalidArgument,
                        format!("{key} must be a non-negative integer"),
                    );
                };
                match key {
                    "max_sweeps" => c.solver.max_sweeps = v,
                    "polish_rounds" => c.solver.polish_rounds = v,
                    "rw_rounds" => c.rw_rounds = v,
                    _ => c.solver.spectral.max_iters = v,
                }
            }
            _ => {
                return fail(
                    RmStatus::InvalidArgument,
                    format!("unknown config key {key:?}"),
                )
            }
        }
        RmStatus::Ok
    })
}

/// Runs the estimator.
///
/// # Safety
/// `points` and `cfg` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rm_estimate(
    points: *const RmPointSet,
    cfg: *const RmConfig,
    out: *mut *mut RmTrace,
) -> RmStatus {
    guard(|| {
        let (Some(points), Some(cfg), false) = (points.as_ref(), cfg.as_ref(), out.is_null())
        else {
            return fail(RmStatus::NullPointer, "null pointer argument");
        };
        match run_algorithm1(&points.0, &cfg.0) {
            Ok(t) => {
                *out = Box::into_raw(Box::new(RmTrace(t)));
                RmStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `trace` must be null or a handle from [`rm_estimate`], not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rm_trace_free(trace: *mut RmTrace) {
    if !trace.is_null() {
        drop(Box::from_raw(trace));
    }
}

unsafe fn copy_out(src: &[f64], out: *mut f64, len: usize) -> RmStatus {
    if out.is_null() {
        return fail(RmStatus::NullPointer, "null output buffer");
    }
    if len < src.len() {
        return fail(
            RmStatus::BufferTooSmall,
            format!("buffer holds {len} values, {} needed", src.len()),
        );
    }
    ptr::copy_nonoverlapping(src.as_ptr(), out, src.len());
    RmStatus::Ok
}

/// Copies the estimate (`d` values) into `out`.
///
/// # Safety
/// `trace` must be a live handle and `out` valid for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn rm_trace_estimate(
    trace: *const RmTrace,
    out: *mut f64,
    len: usize,
) -> RmStatus {
    guard(|| match trace.as_ref() {
        Some(t) => copy_out(&t.0.final_x, out, len),
        None => fail(RmStatus::NullPointer, "null trace"),
    })
}

/// Copies the final outlier indicator (`n` values) into `out`.
///
/// # Safety
/// `trace` must be a live handle and `out` valid for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn rm_trace_outlier_indicator(
    trace: *const RmTrace,
    out: *mut f64,
    len: usize,
) -> RmStatus {
    guard(|| match trace.as_ref() {
        Some(t) => copy_out(t.0.final_h.as_slice(), out, len),
        None => fail(RmStatus::NullPointer, "null trace"),
    })
}

/// Number of outer iterations run, or 0 for a null handle.
///
/// # Safety
/// `trace` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rm_trace_iterations(trace: *const RmTrace) -> usize {
    trace.as_ref().map_or(0, |t| t.0.iterates.len())
}

/// Why the iteration stopped: 0 iteration budget reached, 1 radius stopped
/// shrinking, 2 solver failure, 3 empty support; -1 for a null handle.
///
/// # Safety
/// `trace` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rm_trace_termination(trace: *const RmTrace) -> i32 {
    match trace.as_ref().map(|t| t.0.terminated_by) {
        Some(Termination::MaxT) => 0,
        Some(Termination::C2NonDecrease) => 1,
        Some(Termination::SolverFailure) => 2,
        Some(Termination::EmptySupport) => 3,
        None => -1,
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn rm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}
