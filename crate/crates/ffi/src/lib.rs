//! C ABI for the selftune toolkit.
//!
//! Scenarios and simulation runs are opaque handles created and destroyed
//! through this API. Fallible functions return an [`StStatus`]; on failure the
//! message is available from [`st_last_error`] on the same thread.
//!
//! Strings returned by the library are freed with [`st_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use selftune::analysis::{
    floquet_from_coefficients, kyp_storage, positive_real_margin, sector_identity,
};
use selftune::scenario::{simulate, Run, Scenario};
use selftune::Error;

/// Result code of a fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Validation = 3,
    DomainViolation = 4,
    Integration = 5,
    Infeasible = 6,
    Hypothesis = 7,
    BufferTooSmall = 8,
    Io = 9,
    Panic = 10,
}

/// Parsed and validated scenario.
pub struct StScenario {
    inner: Scenario,
}

/// Completed simulation: trajectory and report.
pub struct StRun {
    inner: Run,
}

/// Floquet multipliers of the averaged-coefficient periodic system.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StFloquet {
    pub multipliers_re: [f64; 2],
    pub multipliers_im: [f64; 2],
    pub spectral_radius: f64,
    pub det: f64,
    pub liouville_det: f64,
    pub period: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior NUL");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> StStatus {
    match err {
        Error::DomainViolation { .. } => StStatus::DomainViolation,
        Error::NonFiniteState { .. }
        | Error::StepUnderflow { .. }
        | Error::MaxStepsExceeded { .. } => StStatus::Integration,
        Error::Infeasible { .. } => StStatus::Infeasible,
        Error::HypothesisViolation(_) => StStatus::Hypothesis,
        _ => StStatus::Validation,
    }
}

fn fail(status: StStatus, msg: impl Into<String>) -> StStatus {
    set_error(msg.into());
    status
}

fn from_error(err: Error) -> StStatus {
    fail(status_of(&err), format!("{}: {err}", err.kind()))
}

/// Run `f`, converting panics into [`StStatus::Panic`].
fn guarded(f: impl FnOnce() -> StStatus) -> StStatus {
    catch_unwind(AssertUnwindSafe(f))
        .unwrap_or_else(|_| fail(StStatus::Panic, "panic inside selftune"))
}

unsafe fn read_str<'a>(s: *const c_char) -> Result<&'a str, StStatus> {
    if s.is_null() {
        return Err(fail(StStatus::NullPointer, "null string argument"));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| fail(StStatus::InvalidUtf8, "argument is not valid UTF-8"))
}

/// Message of the last failed call on this thread, or NULL. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn st_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Free a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn st_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parse and validate a TOML scenario.
///
/// # Safety
/// `toml` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn st_scenario_from_toml(
    toml: *const c_char,
    out: *mut *mut StScenario,
) -> StStatus {
    guarded(|| {
        if out.is_null() {
            return fail(StStatus::NullPointer, "null output pointer");
        }
        *out = ptr::null_mut();
        let src = match read_str(toml) {
            Ok(s) => s,
            Err(status) => return status,
        };
        match Scenario::from_toml(src) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(StScenario { inner }));
                StStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `scenario` must come from [`st_scenario_from_toml`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn st_scenario_free(scenario: *mut StScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// # Safety
/// `scenario` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn st_scenario_set_seed(scenario: *mut StScenario, seed: u64) -> StStatus {
    match scenario.as_mut() {
        Some(s) => {
            s.inner.seed = seed;
            StStatus::Ok
        }
        None => fail(StStatus::NullPointer, "null scenario"),
    }
}

/// Integrate a scenario.
///
/// # Safety
/// `scenario` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn st_simulate(
    scenario: *const StScenario,
    out: *mut *mut StRun,
) -> StStatus {
    guarded(|| {
        if out.is_null() {
            return fail(StStatus::NullPointer, "null output pointer");
        }
        *out = ptr::null_mut();
        let Some(s) = scenario.as_ref() else {
            return fail(StStatus::NullPointer, "null scenario");
        };
        match simulate(&s.inner) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(StRun { inner }));
                StStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `run` must come from [`st_simulate`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn st_run_free(run: *mut StRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// Number of samples; 0 for NULL.
///
/// # Safety
/// `run` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn st_run_len(run: *const StRun) -> usize {
    run.as_ref().map_or(0, |r| r.inner.trajectory.len())
}

/// State dimension (2 first-order, 3 oscillator); 0 for NULL.
///
/// # Safety
/// `run` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn st_run_dim(run: *const StRun) -> usize {
    run.as_ref().map_or(0, |r| r.inner.trajectory.dim())
}

/// `|mu(T) - mu0|`; NaN for NULL.
///
/// # Safety
/// `run` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn st_run_final_mu_error(run: *const StRun) -> f64 {
    run.as_ref()
        .map_or(f64::NAN, |r| r.inner.report.final_mu_error)
}

/// Copy the sample times into `buf` (`len >= st_run_len`).
///
/// # Safety
/// `buf` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn st_run_copy_times(
    run: *const StRun,
    buf: *mut f64,
    len: usize,
) -> StStatus {
    let Some(r) = run.as_ref() else {
        return fail(StStatus::NullPointer, "null run");
    };
    let times = &r.inner.trajectory.times;
    copy_out(times.iter().copied(), times.len(), buf, len)
}

/// Copy the states row-major into `buf` (`len >= st_run_len * st_run_dim`).
///
/// # Safety
/// `buf` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn st_run_copy_states(
    run: *const StRun,
    buf: *mut f64,
    len: usize,
) -> StStatus {
    let Some(r) = run.as_ref() else {
        return fail(StStatus::NullPointer, "null run");
    };
    let traj = &r.inner.trajectory;
    copy_out(
        traj.states.iter().flatten().copied(),
        traj.len() * traj.dim(),
        buf,
        len,
    )
}

unsafe fn copy_out(
    values: impl Iterator<Item = f64>,
    n: usize,
    buf: *mut f64,
    len: usize,
) -> StStatus {
    if buf.is_null() {
        return fail(StStatus::NullPointer, "null buffer");
    }
    if len < n {
        return fail(
            StStatus::BufferTooSmall,
            format!("buffer holds {len} values, {n} needed"),
        );
    }
    let out = std::slice::from_raw_parts_mut(buf, n);
    for (slot, v) in out.iter_mut().zip(values) {
        *slot = v;
    }
    StStatus::Ok
}

/// Run report as JSON; free with [`st_string_free`]. NULL for a NULL run.
///
/// # Safety
/// `run` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn st_run_report_json(run: *const StRun) -> *mut c_char {
    match run.as_ref() {
        Some(r) => CString::new(r.inner.report_json()).map_or(ptr::null_mut(), CString::into_raw),
        None => ptr::null_mut(),
    }
}

/// Write the trajectory CSV to `path`.
///
/// # Safety
/// `run` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn st_run_write_csv(run: *const StRun, path: *const c_char) -> StStatus {
    guarded(|| {
        let Some(r) = run.as_ref() else {
            return fail(StStatus::NullPointer, "null run");
        };
        let path = match read_str(path) {
            Ok(p) => p,
            Err(status) => return status,
        };
        let csv = match r.inner.to_csv() {
            Ok(c) => c,
            Err(e) => return from_error(e),
        };
        match std::fs::write(path, csv) {
            Ok(()) => StStatus::Ok,
            Err(e) => fail(StStatus::Io, format!("cannot write {path}: {e}")),
        }
    })
}

/// `1 - a/b^2`.
#[no_mangle]
pub extern "C" fn st_positive_real_margin(a: f64, b: f64) -> f64 {
    positive_real_margin(a, b)
}

/// Both sides of `u p + u^2 = -(sin phi cos phi p)^2` with `u = -sin^2(phi) p`.
///
/// # Safety
/// `lhs` and `rhs` must be writable.
#[no_mangle]
pub unsafe extern "C" fn st_sector_identity(
    phi: f64,
    p: f64,
    lhs: *mut f64,
    rhs: *mut f64,
) -> StStatus {
    if lhs.is_null() || rhs.is_null() {
        return fail(StStatus::NullPointer, "null output pointer");
    }
    let (l, r) = sector_identity(phi, p);
    *lhs = l;
    *rhs = r;
    StStatus::Ok
}

/// Floquet multipliers of `q' = sin^2(omega t) p, p' = -a q - b p`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn st_floquet(
    a_eff: f64,
    b_eff: f64,
    omega: f64,
    out: *mut StFloquet,
) -> StStatus {
    guarded(|| {
        if out.is_null() {
            return fail(StStatus::NullPointer, "null output pointer");
        }
        match floquet_from_coefficients(a_eff, b_eff, omega) {
            Ok(r) => {
                *out = StFloquet {
                    multipliers_re: [r.multipliers[0][0], r.multipliers[1][0]],
                    multipliers_im: [r.multipliers[0][1], r.multipliers[1][1]],
                    spectral_radius: r.spectral_radius,
                    det: r.det(),
                    liouville_det: r.liouville_det,
                    period: r.period,
                };
                StStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Quadratic storage `P = [[p[0], p[1]], [p[1], p[2]]]` certifying
/// `V' <= u p + u^2` for `q' = -u, p' = -a q - b p`.
///
/// # Safety
/// `p_out` must point to 3 writable doubles.
#[no_mangle]
pub unsafe extern "C" fn st_kyp_storage(a: f64, b: f64, seed: u64, p_out: *mut f64) -> StStatus {
    guarded(|| {
        if p_out.is_null() {
            return fail(StStatus::NullPointer, "null output pointer");
        }
        match kyp_storage(a, b, seed) {
            Ok(cert) => {
                let p = cert.storage.p;
                std::slice::from_raw_parts_mut(p_out, 3)
                    .copy_from_slice(&[p[0][0], p[0][1], p[1][1]]);
                StStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}
