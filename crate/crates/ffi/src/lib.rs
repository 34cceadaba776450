//! C ABI over `trontide`.
//!
//! Every fallible call returns a [`TrontideStatus`]; on failure the message is available
//! from [`trontide_last_error_message`] on the same thread. Strings handed out by the
//! library are owned by the caller and released with [`trontide_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use trontide::harness::config::{Experiment, ExperimentConfig};
use trontide::mathcore::log_gamma;
use trontide::theory;
use trontide::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrontideStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Config = 3,
    Infeasible = 4,
    Domain = 5,
    Numeric = 6,
    Divergence = 7,
    Shape = 8,
    Unsupported = 9,
    Io = 10,
    Panic = 11,
}

impl From<&Error> for TrontideStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Config { .. } => TrontideStatus::Config,
            Error::Infeasible { .. } => TrontideStatus::Infeasible,
            Error::Domain(_) | Error::InvalidDimension(_) => TrontideStatus::Domain,
            Error::Numeric(_) => TrontideStatus::Numeric,
            Error::Divergence { .. } => TrontideStatus::Divergence,
            Error::Shape { .. } => TrontideStatus::Shape,
            Error::UnsupportedDistribution(_) => TrontideStatus::Unsupported,
            Error::Io(_) => TrontideStatus::Io,
        }
    }
}

/// Opaque handle to a built experiment.
pub struct TrontideExperiment {
    inner: Experiment,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = CString::new(msg).ok());
}

fn clear_error() {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
}

/// Runs `f`, mapping errors and panics to status codes.
fn guard<F>(f: F) -> TrontideStatus
where
    F: FnOnce() -> Result<(), (TrontideStatus, String)>,
{
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => TrontideStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            TrontideStatus::Panic
        }
    }
}

fn lib_err(e: Error) -> (TrontideStatus, String) {
    (TrontideStatus::from(&e), e.to_string())
}

fn null_err(what: &str) -> (TrontideStatus, String) {
    (TrontideStatus::NullPointer, format!("{what} is null"))
}

unsafe fn out_ref<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, (TrontideStatus, String)> {
    p.as_mut().ok_or_else(|| null_err(what))
}

fn into_c_string(s: String) -> Result<*mut c_char, (TrontideStatus, String)> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| (TrontideStatus::InvalidUtf8, "output contains an interior NUL".to_string()))
}

/// Message of the last failed call on this thread, or null. Valid until the next call.
#[no_mangle]
pub extern "C" fn trontide_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn trontide_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parses a JSON experiment config and builds it. `seed_override` may be null to use the
/// config's seed.
///
/// # Safety
/// `json` must be a NUL-terminated string; `seed_override` null or valid; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn trontide_experiment_new_from_json(
    json: *const c_char,
    seed_override: *const u64,
    out: *mut *mut TrontideExperiment,
) -> TrontideStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = ptr::null_mut();
        if json.is_null() {
            return Err(null_err("json"));
        }
        let text = CStr::from_ptr(json)
            .to_str()
            .map_err(|_| (TrontideStatus::InvalidUtf8, "config is not valid UTF-8".to_string()))?;
        let cfg = ExperimentConfig::from_json(text).map_err(lib_err)?;
        let seed = seed_override.as_ref().copied().unwrap_or(cfg.seed);
        let inner = Experiment::build(cfg, seed).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(TrontideExperiment { inner }));
        Ok(())
    })
}

/// # Safety
/// `exp` must come from [`trontide_experiment_new_from_json`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn trontide_experiment_free(exp: *mut TrontideExperiment) {
    if !exp.is_null() {
        drop(Box::from_raw(exp));
    }
}

/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn trontide_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

unsafe fn with_experiment<F>(exp: *const TrontideExperiment, out: *mut *mut c_char, f: F) -> TrontideStatus
where
    F: FnOnce(&Experiment) -> trontide::Result<String>,
{
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = ptr::null_mut();
        let exp = exp.as_ref().ok_or_else(|| null_err("experiment"))?;
        let text = f(&exp.inner).map_err(lib_err)?;
        *out = into_c_string(text)?;
        Ok(())
    })
}

fn to_json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("report serializes")
}

/// Theory report as JSON. Infeasible settings are reported in the JSON, not as an error.
///
/// # Safety
/// `exp` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn trontide_experiment_theory_json(
    exp: *const TrontideExperiment,
    out: *mut *mut c_char,
) -> TrontideStatus {
    with_experiment(exp, out, |e| e.theory_report().map(|r| to_json(&r)))
}

/// Trial summary as JSON; `trials == 0` uses the config's `R`.
///
/// # Safety
/// `exp` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn trontide_experiment_run_trials(
    exp: *const TrontideExperiment,
    trials: usize,
    out: *mut *mut c_char,
) -> TrontideStatus {
    with_experiment(exp, out, |e| e.run_trials((trials > 0).then_some(trials)).map(|s| to_json(&s)))
}

/// One training run as a `t,dist_sq,grad_norm` CSV trace.
///
/// # Safety
/// `exp` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn trontide_experiment_train_csv(
    exp: *const TrontideExperiment,
    out: *mut *mut c_char,
) -> TrontideStatus {
    with_experiment(exp, out, |e| e.train().map(|(_, t)| t.to_csv()))
}

/// ln Γ(x) for x > 0.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn trontide_log_gamma(x: f64, out: *mut f64) -> TrontideStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = log_gamma(x).map_err(lib_err)?;
        Ok(())
    })
}

/// Closed-form trade-off constant for a single ReLU gate with Gaussian inputs.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn trontide_gaussian_tradeoff(sigma: f64, beta: f64, n: usize, out: *mut f64) -> TrontideStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = theory::gaussian_tradeoff_closed_form(sigma, beta, n).map_err(lib_err)?;
        Ok(())
    })
}

/// Smallest `T` with `κ^(T−1)·Δ1 ≤ ε²δ`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn trontide_horizon_case1(
    delta1: f64,
    eps: f64,
    delta: f64,
    kappa: f64,
    out: *mut u64,
) -> TrontideStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = theory::horizon_case1(delta1, eps, delta, kappa).map_err(lib_err)? as u64;
        Ok(())
    })
}
