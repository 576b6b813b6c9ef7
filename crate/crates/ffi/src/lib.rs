//! C ABI over `rwpf-core`.
//!
//! Every entry point returns an [`RwpfStatus`]; results are written through
//! out-pointers. On failure a human-readable message is available from
//! [`rwpf_last_error_message`] on the same thread. Models are opaque handles
//! created by [`rwpf_model_new`] and released with [`rwpf_model_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::slice;

use rwpf_core::bridge::LazyBridge;
use rwpf_core::lowdisc::{self, Randomization};
use rwpf_core::models::{self, DriftModel};
use rwpf_core::oracles;
use rwpf_core::psi::{self, PsiConfig, PsiMode};
use rwpf_core::rng;
use rwpf_core::smc::{self, FilterConfig, Observation};
use rwpf_core::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RwpfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Unsupported = 3,
    Numeric = 4,
    Degeneracy = 5,
    BufferTooSmall = 6,
    Panic = 7,
    Internal = 8,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RwpfPsiMode {
    Mc = 0,
    RqmcTimes = 1,
    RqmcTimesValues = 2,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RwpfRandomization {
    None = 0,
    DigitalShift = 1,
    OwenScramble = 2,
}

/// Opaque drift model handle.
pub struct RwpfModel(DriftModel);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

struct Failure(RwpfStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Unsupported(_) => RwpfStatus::Unsupported,
            Error::Numeric(_) | Error::Invariant(_) | Error::RejectionCap(_) => RwpfStatus::Numeric,
            Error::Degeneracy { .. } => RwpfStatus::Degeneracy,
            Error::Io { .. } | Error::Json(_) => RwpfStatus::Internal,
            _ => RwpfStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(RwpfStatus::NullPointer, format!("`{what}` is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> RwpfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error("");
            RwpfStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(_) => {
            set_last_error("panic inside rwpf");
            RwpfStatus::Panic
        }
    }
}

unsafe fn model_ref<'a>(m: *const RwpfModel) -> Result<&'a DriftModel, Failure> {
    m.as_ref().map(|m| &m.0).ok_or_else(|| null("model"))
}

unsafe fn write<T>(out: *mut T, v: T, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(v);
    Ok(())
}

unsafe fn observations(
    times: *const f64,
    values: *const f64,
    n_obs: usize,
) -> Result<Vec<Observation>, Failure> {
    if n_obs == 0 {
        return Ok(Vec::new());
    }
    if times.is_null() {
        return Err(null("times"));
    }
    if values.is_null() {
        return Err(null("values"));
    }
    let t = slice::from_raw_parts(times, n_obs);
    let v = slice::from_raw_parts(values, n_obs);
    Ok(t.iter()
        .zip(v)
        .map(|(&time, &value)| Observation { time, value })
        .collect())
}

fn psi_mode(mode: RwpfPsiMode) -> PsiMode {
    match mode {
        RwpfPsiMode::Mc => PsiMode::Mc,
        RwpfPsiMode::RqmcTimes => PsiMode::RqmcTimes,
        RwpfPsiMode::RqmcTimesValues => PsiMode::RqmcTimesValues,
    }
}

/// Message describing the last failure on this thread; empty after a
/// successful call. Valid until the next rwpf call on the same thread.
#[no_mangle]
pub extern "C" fn rwpf_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn rwpf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds a built-in model (`zero`, `tanh`, `sine`, `scaled-sine`).
/// Pass NaN for `theta` when the model takes no parameter.
///
/// # Safety
/// `name` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rwpf_model_new(
    name: *const c_char,
    theta: f64,
    out: *mut *mut RwpfModel,
) -> RwpfStatus {
    guard(|| {
        if name.is_null() {
            return Err(null("name"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let name = CStr::from_ptr(name)
            .to_str()
            .map_err(|_| Failure(RwpfStatus::InvalidArgument, "name is not UTF-8".into()))?;
        let theta = (!theta.is_nan()).then_some(theta);
        let model = models::builtin(name, theta)?;
        out.write(Box::into_raw(Box::new(RwpfModel(model))));
        Ok(())
    })
}

/// Releases a model handle. Null is ignored.
///
/// # Safety
/// `model` must come from [`rwpf_model_new`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn rwpf_model_free(model: *mut RwpfModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rwpf_model_phi(
    model: *const RwpfModel,
    x: f64,
    out: *mut f64,
) -> RwpfStatus {
    guard(|| write(out, model_ref(model)?.phi(x), "out"))
}

/// # Safety
/// `model` must be a live handle; `lower` and `upper` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rwpf_model_phi_bounds(
    model: *const RwpfModel,
    lower: *mut f64,
    upper: *mut f64,
) -> RwpfStatus {
    guard(|| {
        let (l, u) = model_ref(model)?.phi_bounds();
        write(lower, l, "lower")?;
        write(upper, u, "upper")
    })
}

/// Closed-form log transition density; `Unsupported` for models without one.
///
/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rwpf_model_log_transition_density(
    model: *const RwpfModel,
    x_a: f64,
    x_b: f64,
    t: f64,
    out: *mut f64,
) -> RwpfStatus {
    guard(|| {
        let v = model_ref(model)?.log_exact_transition_density(x_a, x_b, t)?;
        write(out, v, "out")
    })
}

/// One unbiased estimate of ψ on a fresh bridge from `(a, x_a)` to `(b, x_b)`.
/// Randomness comes from stream `stream` of `seed`. `out_kappa` may be null.
///
/// # Safety
/// `model` must be a live handle; `out_value` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rwpf_psi_estimate(
    model: *const RwpfModel,
    x_a: f64,
    x_b: f64,
    a: f64,
    b: f64,
    mode: RwpfPsiMode,
    inner_points: usize,
    seed: u64,
    stream: u64,
    out_value: *mut f64,
    out_kappa: *mut u64,
) -> RwpfStatus {
    guard(|| {
        let model = model_ref(model)?;
        if out_value.is_null() {
            return Err(null("out_value"));
        }
        let mut bridge = LazyBridge::new(a, x_a, b, x_b)?;
        let cfg = PsiConfig::new(psi_mode(mode), inner_points);
        let mut rng = rng::stream(seed, stream);
        let est = psi::estimate(model, &mut bridge, &cfg, &mut rng)?;
        out_value.write(est.value);
        if !out_kappa.is_null() {
            out_kappa.write(est.kappa);
        }
        Ok(())
    })
}

/// Writes `count` Sobol points of dimension `dimension` row-major into `out`,
/// which must hold at least `count * dimension` doubles (`out_len`).
///
/// # Safety
/// `out` must point to `out_len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn rwpf_sobol_points(
    dimension: usize,
    count: usize,
    randomization: RwpfRandomization,
    seed: u64,
    out: *mut f64,
    out_len: usize,
) -> RwpfStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let need = dimension.checked_mul(count).ok_or_else(|| {
            Failure(RwpfStatus::InvalidArgument, "dimension * count overflows".into())
        })?;
        if out_len < need {
            return Err(Failure(
                RwpfStatus::BufferTooSmall,
                format!("buffer holds {out_len} doubles, {need} needed"),
            ));
        }
        let base = lowdisc::generate_base(dimension, count)?;
        let ps = match randomization {
            RwpfRandomization::None => base,
            RwpfRandomization::DigitalShift => {
                lowdisc::randomize(&base, Randomization::DigitalShift, seed)?
            }
            RwpfRandomization::OwenScramble => {
                lowdisc::randomize(&base, Randomization::OwenScramble, seed)?
            }
        };
        let dst = slice::from_raw_parts_mut(out, need);
        for (chunk, row) in dst.chunks_exact_mut(dimension).zip(ps.rows()) {
            chunk.copy_from_slice(row);
        }
        Ok(())
    })
}

/// Runs the particle filter (Gaussian proposal, systematic resampling) and
/// returns the log-likelihood estimate.
///
/// # Safety
/// `times` and `values` must each point to `n_obs` doubles; `out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn rwpf_filter_loglik(
    model: *const RwpfModel,
    times: *const f64,
    values: *const f64,
    n_obs: usize,
    particles: usize,
    x0: f64,
    sigma: f64,
    mode: RwpfPsiMode,
    inner_points: usize,
    seed: u64,
    out: *mut f64,
) -> RwpfStatus {
    guard(|| {
        let model = model_ref(model)?;
        let obs = observations(times, values, n_obs)?;
        let mut cfg = FilterConfig::new(particles, x0, sigma, seed);
        cfg.psi = PsiConfig::new(psi_mode(mode), inner_points);
        let run = smc::run_filter(model, &obs, &cfg)?;
        write(out, run.total_log_likelihood, "out")
    })
}

/// Exact log-likelihood of the zero-drift model under Gaussian noise.
///
/// # Safety
/// `times` and `values` must each point to `n_obs` doubles; `out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn rwpf_kalman_loglik(
    x0: f64,
    times: *const f64,
    values: *const f64,
    n_obs: usize,
    sigma: f64,
    out: *mut f64,
) -> RwpfStatus {
    guard(|| {
        let obs = observations(times, values, n_obs)?;
        let res = oracles::kalman_filter(x0, &obs, sigma)?;
        write(out, res.total_log_likelihood, "out")
    })
}
