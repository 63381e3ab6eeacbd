//! C ABI over `regret-dissect`.
//!
//! Every function returns an [`RdStatus`]. On failure the message is kept per
//! thread and can be read with [`rd_last_error_message`]. Handles and strings
//! handed out by the library must be released with [`rd_instance_free`] and
//! [`rd_string_free`].

use nalgebra::DVector;
use regret_dissect::asymptotics::{mixture_tail, summarize, AsymptoticSummary, ChiSqMixture};
use regret_dissect::config::RunConfig;
use regret_dissect::decision::Instance;
use regret_dissect::Error;
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::OnceLock;

/// Status codes. Codes 1 to 4 match the command-line exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RdStatus {
    Ok = 0,
    Io = 1,
    Config = 2,
    Solver = 3,
    Experiment = 4,
    Region = 5,
    InvalidArgument = 6,
    Panic = 7,
}

/// Opaque handle to a validated problem instance.
pub struct RdInstance {
    config: RunConfig,
    instance: Instance,
    summary: OnceLock<AsymptoticSummary>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> RdStatus {
    match e {
        Error::Region(_) => RdStatus::Region,
        Error::Io(_) => RdStatus::Io,
        other => match other.exit_code() {
            2 => RdStatus::Config,
            3 => RdStatus::Solver,
            4 => RdStatus::Experiment,
            _ => RdStatus::Io,
        },
    }
}

struct Failure(RdStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(RdStatus::InvalidArgument, msg.into())
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> RdStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => RdStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            RdStatus::Panic
        }
    }
}

unsafe fn handle<'a>(h: *const RdInstance) -> Result<&'a RdInstance, Failure> {
    h.as_ref().ok_or_else(|| invalid("null instance handle"))
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(invalid(format!("null {what} pointer")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| invalid(format!("null {what} output pointer")))
}

fn check_len(got: usize, want: usize, what: &str) -> Result<(), Failure> {
    if got != want {
        return Err(invalid(format!("{what} has length {got}, expected {want}")));
    }
    Ok(())
}

impl RdInstance {
    fn summary(&self) -> Result<&AsymptoticSummary, Failure> {
        if let Some(s) = self.summary.get() {
            return Ok(s);
        }
        let s = summarize(&self.instance, &self.config.theory)?;
        Ok(self.summary.get_or_init(|| s))
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn rd_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL.
///
/// The pointer stays valid until the next library call on the same thread.
#[no_mangle]
pub extern "C" fn rd_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Builds an instance from a run configuration in JSON.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out_handle` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn rd_instance_from_json(json: *const c_char, out_handle: *mut *mut RdInstance) -> RdStatus {
    guard(|| {
        let slot = out(out_handle, "handle")?;
        *slot = ptr::null_mut();
        if json.is_null() {
            return Err(invalid("null config string"));
        }
        let text = CStr::from_ptr(json).to_str().map_err(|e| invalid(format!("config is not UTF-8: {e}")))?;
        let config = RunConfig::from_json(text)?;
        config.validate()?;
        let instance = config.instance()?;
        *slot = Box::into_raw(Box::new(RdInstance {
            config,
            instance,
            summary: OnceLock::new(),
        }));
        Ok(())
    })
}

/// Releases an instance. NULL is ignored.
///
/// # Safety
/// `h` must come from [`rd_instance_from_json`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn rd_instance_free(h: *mut RdInstance) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// Parameter dimension, data dimension and decision dimension.
///
/// # Safety
/// `h` must be a live handle and the outputs writable.
#[no_mangle]
pub unsafe extern "C" fn rd_instance_dims(h: *const RdInstance, dim_q: *mut usize, dim_d: *mut usize, dim_p: *mut usize) -> RdStatus {
    guard(|| {
        let inst = &handle(h)?.instance;
        *out(dim_q, "dim_q")? = inst.family.dim_q();
        *out(dim_d, "dim_d")? = inst.family.dim_d();
        *out(dim_p, "dim_p")? = inst.model.dim_p();
        Ok(())
    })
}

/// Population asymptotic summary as a JSON string.
///
/// The summary is computed on first use and cached in the handle. Free the
/// string with [`rd_string_free`].
///
/// # Safety
/// `h` must be a live handle and `out_json` writable.
#[no_mangle]
pub unsafe extern "C" fn rd_theory_summary_json(h: *const RdInstance, out_json: *mut *mut c_char) -> RdStatus {
    guard(|| {
        let slot = out(out_json, "json")?;
        *slot = ptr::null_mut();
        let text = handle(h)?.summary()?.to_json()?;
        *slot = CString::new(text).map_err(|e| invalid(e.to_string()))?.into_raw();
        Ok(())
    })
}

/// Releases a string returned by the library. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn rd_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Oracle decision for parameter `theta`, written to `omega_out`.
///
/// # Safety
/// `theta` must hold `theta_len` values and `omega_out` room for `omega_len`.
#[no_mangle]
pub unsafe extern "C" fn rd_oracle_decision(
    h: *const RdInstance,
    theta: *const f64,
    theta_len: usize,
    omega_out: *mut f64,
    omega_len: usize,
) -> RdStatus {
    guard(|| {
        let inst = &handle(h)?.instance;
        let theta = slice(theta, theta_len, "theta")?;
        check_len(theta_len, inst.family.dim_q(), "theta")?;
        check_len(omega_len, inst.model.dim_p(), "omega")?;
        if omega_out.is_null() {
            return Err(invalid("null omega output pointer"));
        }
        let sol = inst.oracle(&DVector::from_column_slice(theta))?;
        std::slice::from_raw_parts_mut(omega_out, omega_len).copy_from_slice(sol.omega.as_slice());
        Ok(())
    })
}

/// Regret of decision `omega` under the true distribution.
///
/// # Safety
/// `omega` must hold `omega_len` values and `regret_out` be writable.
#[no_mangle]
pub unsafe extern "C" fn rd_regret(h: *const RdInstance, omega: *const f64, omega_len: usize, regret_out: *mut f64) -> RdStatus {
    guard(|| {
        let inst = &handle(h)?.instance;
        let omega = slice(omega, omega_len, "omega")?;
        check_len(omega_len, inst.model.dim_p(), "omega")?;
        if omega.iter().any(|x| !x.is_finite()) {
            return Err(invalid("omega must be finite"));
        }
        *out(regret_out, "regret")? = inst.regret(&DVector::from_column_slice(omega));
        Ok(())
    })
}

/// Tail probability `P(Σ wᵢ Yᵢ² > t)` with its Monte Carlo standard error.
///
/// # Safety
/// `weights` must hold `len` values and the outputs be writable.
#[no_mangle]
pub unsafe extern "C" fn rd_mixture_tail(
    weights: *const f64,
    len: usize,
    t: f64,
    prob_out: *mut f64,
    std_error_out: *mut f64,
) -> RdStatus {
    guard(|| {
        let w = slice(weights, len, "weights")?;
        if t.is_nan() {
            return Err(invalid("t is NaN"));
        }
        let mix = ChiSqMixture::new(w.to_vec())?;
        let est = mixture_tail(&mix, t);
        *out(prob_out, "prob")? = est.prob;
        *out(std_error_out, "std_error")? = est.std_error;
        Ok(())
    })
}
