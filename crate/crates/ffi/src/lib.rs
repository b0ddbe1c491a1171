//! C ABI over the gpbandit posterior and experiment runner.
//!
//! Every fallible call returns a [`GpbStatus`]. On failure the message is
//! available from [`gpb_last_error_message`] on the same thread until the
//! next failing call.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use gpbandit::{harness, Error, GpPosterior, KernelSpec};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GpbStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    InvalidConfig = 3,
    Numerical = 4,
    Io = 5,
    /// The batch finished but at least one (policy, seed) cell failed.
    PartialFailure = 6,
    Panic = 7,
}

/// Opaque posterior handle.
pub struct GpbPosterior {
    inner: GpPosterior,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl Into<String>) {
    let text = message.into().replace('\0', " ");
    let c = CString::new(text).expect("interior NULs replaced");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> GpbStatus {
    match e {
        Error::Input(_) => GpbStatus::InvalidInput,
        Error::Config(_) => GpbStatus::InvalidConfig,
        Error::Numerical(_) => GpbStatus::Numerical,
        Error::Parse { .. } => GpbStatus::InvalidConfig,
        Error::Io { .. } => GpbStatus::Io,
    }
}

fn fail(e: Error) -> GpbStatus {
    set_error(e.to_string());
    status_of(&e)
}

fn guard(f: impl FnOnce() -> GpbStatus) -> GpbStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => {
            set_error("internal panic");
            GpbStatus::Panic
        }
    }
}

macro_rules! non_null {
    ($($p:ident),+) => {
        $(if $p.is_null() {
            set_error(concat!("`", stringify!($p), "` is null"));
            return GpbStatus::NullPointer;
        })+
    };
}

/// # Safety
/// `x` must point to `dim` readable doubles.
unsafe fn point<'a>(x: *const f64, dim: usize) -> &'a [f64] {
    std::slice::from_raw_parts(x, dim)
}

/// Message for the most recent failure on this thread, or NULL. The pointer
/// stays valid until the next failing call on this thread.
#[no_mangle]
pub extern "C" fn gpb_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Variance level above which the entropy test admits a point.
#[no_mangle]
pub extern "C" fn gpb_variance_threshold(epsilon: f64, noise_variance: f64) -> f64 {
    gpbandit::gp::variance_threshold(epsilon, noise_variance)
}

/// Creates an empty posterior with a squared-exponential kernel.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for a handle.
#[no_mangle]
pub unsafe extern "C" fn gpb_posterior_new(
    lengthscale: f64,
    output_scale: f64,
    noise_variance: f64,
    out: *mut *mut GpbPosterior,
) -> GpbStatus {
    non_null!(out);
    guard(|| {
        let built = KernelSpec::squared_exponential(lengthscale)
            .and_then(|k| k.with_output_scale(output_scale))
            .and_then(|k| GpPosterior::new(k, noise_variance));
        match built {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(GpbPosterior { inner }));
                GpbStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// # Safety
/// `handle` must come from [`gpb_posterior_new`] and not be freed twice. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn gpb_posterior_free(handle: *mut GpbPosterior) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// Appends the observation `(x, y)`.
///
/// # Safety
/// `handle` must be live; `x` must point to `dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn gpb_posterior_append(
    handle: *mut GpbPosterior,
    x: *const f64,
    dim: usize,
    y: f64,
) -> GpbStatus {
    non_null!(handle, x);
    guard(|| match (*handle).inner.append_point(point(x, dim), y) {
        Ok(_) => GpbStatus::Ok,
        Err(e) => fail(e),
    })
}

/// Posterior mean and variance at `x`.
///
/// # Safety
/// `handle` must be live; `x` must point to `dim` doubles; outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn gpb_posterior_predict(
    handle: *const GpbPosterior,
    x: *const f64,
    dim: usize,
    mean: *mut f64,
    variance: *mut f64,
) -> GpbStatus {
    non_null!(handle, x, mean, variance);
    guard(|| match (*handle).inner.predict(point(x, dim)) {
        Ok(p) => {
            *mean = p.mean;
            *variance = p.variance;
            GpbStatus::Ok
        }
        Err(e) => fail(e),
    })
}

/// Conditional entropy ½ ln(2πe(σ² + σ²(x))) of an observation at `x`.
///
/// # Safety
/// `handle` must be live; `x` must point to `dim` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gpb_posterior_conditional_entropy(
    handle: *const GpbPosterior,
    x: *const f64,
    dim: usize,
    out: *mut f64,
) -> GpbStatus {
    non_null!(handle, x, out);
    guard(|| match (*handle).inner.conditional_entropy(point(x, dim)) {
        Ok(h) => {
            *out = h;
            GpbStatus::Ok
        }
        Err(e) => fail(e),
    })
}

/// Writes 1 to `admitted` if an observation at `x` passes the entropy test, else 0.
///
/// # Safety
/// `handle` must be live; `x` must point to `dim` doubles; `admitted` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gpb_posterior_admission_test(
    handle: *const GpbPosterior,
    x: *const f64,
    dim: usize,
    epsilon: f64,
    admitted: *mut i32,
) -> GpbStatus {
    non_null!(handle, x, admitted);
    guard(|| match (*handle).inner.admission_test(point(x, dim), epsilon) {
        Ok(d) => {
            *admitted = i32::from(d.admitted);
            GpbStatus::Ok
        }
        Err(e) => fail(e),
    })
}

/// ½ ln det(I + σ⁻²K) over the current dictionary.
///
/// # Safety
/// `handle` must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gpb_posterior_information_gain(handle: *const GpbPosterior, out: *mut f64) -> GpbStatus {
    non_null!(handle, out);
    *out = (*handle).inner.information_gain();
    GpbStatus::Ok
}

/// # Safety
/// `handle` must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gpb_posterior_model_order(handle: *const GpbPosterior, out: *mut usize) -> GpbStatus {
    non_null!(handle, out);
    *out = (*handle).inner.model_order();
    GpbStatus::Ok
}

/// Runs the experiment described by a config file and writes its outputs.
/// `out_dir` may be NULL to use the directory named in the config.
///
/// # Safety
/// `config_path` must be a NUL-terminated string; `out_dir` NULL or NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn gpb_run_experiment(config_path: *const c_char, out_dir: *const c_char) -> GpbStatus {
    non_null!(config_path);
    guard(|| {
        let to_path = |p: *const c_char| -> Result<PathBuf, GpbStatus> {
            CStr::from_ptr(p).to_str().map(PathBuf::from).map_err(|_| {
                set_error("path is not valid UTF-8");
                GpbStatus::InvalidInput
            })
        };
        let config = match to_path(config_path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        let mut spec = match harness::parse_config(&config) {
            Ok(s) => s,
            Err(e) => return fail(e),
        };
        if !out_dir.is_null() {
            match to_path(out_dir) {
                Ok(p) => spec.output_dir = p,
                Err(s) => return s,
            }
        }
        match harness::run_experiment(&spec) {
            Ok(r) if r.failed_cells() > 0 => {
                set_error(format!("{} run(s) failed", r.failed_cells()));
                GpbStatus::PartialFailure
            }
            Ok(_) => GpbStatus::Ok,
            Err(e) => fail(e),
        }
    })
}
