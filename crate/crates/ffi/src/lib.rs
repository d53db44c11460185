//! C ABI over the `ttsa` library.
//!
//! Every entry point returns a [`TtsaStatus`]; on failure the message is kept in a
//! thread-local slot readable through [`ttsa_last_error_message`]. Handles are opaque
//! and must be released with the matching `*_free`. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use ttsa::cli::{run_experiment, ExperimentConfig};
use ttsa::hypergrad::neumann_hypergradient;
use ttsa::linalg::{DenseMatrix, DenseVector};
use ttsa::nac::{check_pdl, ttnac_run, FeatureMap, NacReference, NacStepRule, Policy, TabularMdp};
use ttsa::problems::{make_quadratic, QuadraticBilevel, QuadraticRegime, QuadraticSpec};
use ttsa::rng::stream;
use ttsa::schedule::{schedule_cvx, schedule_sc, schedule_wc};
use ttsa::ttsa::{ttsa_run, MetricsConfig, Probes};
use ttsa::{Error, ExactOracle, StochasticBilevelOracle};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TtsaStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    /// Non-finite values, singular systems, divergence or non-convergence.
    Numerical = 4,
    Config = 5,
    Io = 6,
    Panic = 7,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn status_of(e: &Error) -> TtsaStatus {
    match e {
        Error::DimensionMismatch { .. } => TtsaStatus::DimensionMismatch,
        Error::InvalidArgument(_) | Error::InvalidConstants(_) | Error::ScheduleViolation { .. } => {
            TtsaStatus::InvalidArgument
        }
        Error::Config(_) | Error::Json(_) | Error::Data(_) => TtsaStatus::Config,
        Error::Io(_) | Error::Csv(_) => TtsaStatus::Io,
        _ => TtsaStatus::Numerical,
    }
}

struct Fail(TtsaStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> TtsaStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            TtsaStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
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
            TtsaStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(TtsaStatus::NullPointer, format!("{what} is null"))
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(unsafe { std::slice::from_raw_parts(p, len) })
}

unsafe fn slice_mut<'a>(p: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], Fail> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(unsafe { std::slice::from_raw_parts_mut(p, len) })
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    unsafe { CStr::from_ptr(p) }
        .to_str()
        .map_err(|_| Fail(TtsaStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

fn check_len(len: usize, expected: usize, what: &str) -> Result<(), Fail> {
    if len != expected {
        return Err(Fail(TtsaStatus::DimensionMismatch, format!("{what}: expected length {expected}, got {len}")));
    }
    Ok(())
}

unsafe fn write<T>(out: *mut T, value: T, what: &str) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null(what));
    }
    unsafe { out.write(value) };
    Ok(())
}

/// Message of the last failed call on this thread, or null. Valid until the next call.
#[unsafe(no_mangle)]
pub extern "C" fn ttsa_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[unsafe(no_mangle)]
pub extern "C" fn ttsa_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Quadratic bilevel instance.
pub struct TtsaQuadratic {
    problem: QuadraticBilevel,
    regime: QuadraticRegime,
}

/// `regime`: 0 strongly convex, 1 convex, 2 weakly convex. Noise is `sigma` on every oracle.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle pointer.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn ttsa_quadratic_new(
    regime: u32,
    d1: usize,
    d2: usize,
    condition_number: f64,
    sigma: f64,
    seed: u64,
    out: *mut *mut TtsaQuadratic,
) -> TtsaStatus {
    guard(|| {
        let regime = match regime {
            0 => QuadraticRegime::StronglyConvex,
            1 => QuadraticRegime::Convex,
            2 => QuadraticRegime::WeaklyConvex,
            r => return Err(Fail(TtsaStatus::InvalidArgument, format!("unknown regime {r}"))),
        };
        let mut spec = QuadraticSpec::new(regime, d1, d2, condition_number);
        spec.noise = ttsa::problems::NoiseLevels::uniform(sigma);
        spec.seed = seed;
        let problem = make_quadratic(&spec)?;
        unsafe { write(out, Box::into_raw(Box::new(TtsaQuadratic { problem, regime })), "out") }
    })
}

/// Builds an instance from a JSON quadratic spec (the `[problem]` fields of a config).
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` as in [`ttsa_quadratic_new`].
#[unsafe(no_mangle)]
pub unsafe extern "C" fn ttsa_quadratic_from_json(json: *const c_char, out: *mut *mut TtsaQuadratic) -> TtsaStatus {
    guard(|| {
        let spec: QuadraticSpec = serde_json::from_str(unsafe { text(json, "json")? }).map_err(Error::from)?;
        let problem = make_quadratic(&spec)?;
        let regime = spec.regime;
        unsafe { write(out, Box::into_raw(Box::new(TtsaQuadratic { problem, regime })), "out") }
    })
}

/// # Safety
/// `handle` must come from a constructor above and not be used afterwards. Null is ignored.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn ttsa_quadratic_free(handle: *mut TtsaQuadratic) {
    if !handle.is_null() {
        drop(unsafe { Box::from_raw(handle) });
    }
}

unsafe fn quad<'a>(h: *const TtsaQuadratic) -> Result<&'a TtsaQuadratic, Fail> {
    unsafe { h.as_ref() }.ok_or_else(|| null("handle"))
}

/// # Safety
/// `handle` must be live; `d1`, `d2` writable.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn ttsa_quadratic_dims(handle: *const TtsaQuadratic, d1: *mut usize, d2: *mut usize) -> TtsaStatus {
    guard(|| {
        let (a, b) = unsafe { quad(handle)? }.problem.dims();
        unsafe {
            write(d1, a, "d1")?;
            write(d2, b, "d2")
        }
    })
}

/// Outer objective `ell(x)`.
///
/// # Safety
/// `x` must point to `x_len` doubles; `out` writable.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn ttsa_quadratic_ell(
    handle: *const TtsaQuadratic,
    x: *const f64,
    x_len: usize,
    out: *mut f64,
) -> TtsaStatus {
    guard(|| {
        let q = unsafe { quad(handle)? };
        check_len(x_len, q.problem.dims().0, "x")?;
        let x = DenseVector::from_column_slice(unsafe { slice(x, x_len, "x")? });
        unsafe { write(out, q.problem.ell(&x), "out") }
    })
}

/// Exact `grad ell(x)` into `out` (length d1).
///
/// # Safety
/// `x` and `out` must point to `len` doubles each.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn ttsa_quadratic_grad_ell(
    handle: *const TtsaQuadratic,
    x: *const f64,
    out: *mut f64,
    len: usize,
) -> TtsaStatus {
    guard(|| {
        let q = unsafe { quad(handle)? };
        check_len(len, q.problem.dims().0, "x")?;
        let x = DenseVector::from_column_slice(unsafe { slice(x, len, "x")? });
        unsafe { slice_mut(out, len, "out")? }.copy_from_slice(q.problem.grad_ell(&x).as_slice());
        Ok(())
    })
}

/// One randomized Neumann hypergradient draw at `(x, y)` into `out` (length d1).
///
/// # Safety
/// `x`/`out` hold d1 doubles, `y` holds d2.
#[unsafe(no_mangle)]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn ttsa_quadratic_hypergradient(
    handle: *const TtsaQuadratic,
    x: *const f64,
    d1: usize,
    y: *const f64,
    d2: usize,
    tmax: usize,
    c_h: f64,
    seed: u64,
    out: *mut f64,
) -> TtsaStatus {
    guard(|| {
        let q = unsafe { quad(handle)? };
        let (e1, e2) = q.problem.dims();
        check_len(d1, e1, "x")?;
        check_len(d2, e2, "y")?;
        let x = DenseVector::from_column_slice(unsafe { slice(x, d1, "x")? });
        let y = DenseVector::from_column_slice(unsafe { slice(y, d2, "y")? });
        let h = neumann_hypergradient(&q.problem, &x, &y, tmax, c_h, &mut stream(seed))?;
        unsafe { slice_mut(out, d1, "out")? }.copy_from_slice(h.value.as_slice());
        Ok(())
    })
}

/// TTSA with the regime's default schedule from `x0` (d1) and `y = 0`; final iterates into
/// `x_out` (d1) and `y_out` (d2), final `|x - x*|^2` into `delta_x` when known (NaN otherwise).
///
/// # Safety
/// Buffers must hold the stated number of doubles; `delta_x` may be null.
#[unsafe(no_mangle)]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn ttsa_quadratic_run(
    handle: *const TtsaQuadratic,
    k_max: u64,
    seed: u64,
    x0: *const f64,
    x_out: *mut f64,
    d1: usize,
    y_out: *mut f64,
    d2: usize,
    delta_x: *mut f64,
) -> TtsaStatus {
    guard(|| {
        let q = unsafe { quad(handle)? };
        let (e1, e2) = q.problem.dims();
        check_len(d1, e1, "x")?;
        check_len(d2, e2, "y")?;
        let x0 = DenseVector::from_column_slice(unsafe { slice(x0, d1, "x0")? });
        let c = q.problem.constants();
        let d = c.derived()?;
        let s = match q.regime {
            QuadraticRegime::StronglyConvex => schedule_sc(c, &d, true)?,
            QuadraticRegime::Convex => schedule_cvx(c, &d, k_max)?,
            QuadraticRegime::WeaklyConvex => schedule_wc(c, &d, k_max)?,
        };
        let cfg = MetricsConfig {
            points: 2,
            ..Default::default()
        };
        let trace = ttsa_run(&q.problem, Probes::exact(&q.problem), &s, &x0, &DenseVector::zeros(d2), k_max, &cfg, seed)?;
        unsafe {
            slice_mut(x_out, d1, "x_out")?.copy_from_slice(&trace.final_x);
            slice_mut(y_out, d2, "y_out")?.copy_from_slice(&trace.final_y);
            if !delta_x.is_null() {
                delta_x.write(trace.points.last().and_then(|p| p.delta_x).unwrap_or(f64::NAN));
            }
        }
        Ok(())
    })
}

/// Tabular MDP.
pub struct TtsaMdp {
    mdp: TabularMdp,
}

/// # Safety
/// `out` must be writable.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn ttsa_mdp_random(
    n_states: usize,
    n_actions: usize,
    gamma: f64,
    seed: u64,
    out: *mut *mut TtsaMdp,
) -> TtsaStatus {
    guard(|| {
        let mdp = TabularMdp::random(n_states, n_actions, gamma, seed)?;
        unsafe { write(out, Box::into_raw(Box::new(TtsaMdp { mdp })), "out") }
    })
}

/// JSON with fields `n_states`, `n_actions`, `P`, `r`, `gamma`, `rho0`.
///
/// # Safety
/// `json` must be NUL-terminated; `out` writable.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn ttsa_mdp_from_json(json: *const c_char, out: *mut *mut TtsaMdp) -> TtsaStatus {
    guard(|| {
        let mdp = TabularMdp::from_json(unsafe { text(json, "json")? })?;
        unsafe { write(out, Box::into_raw(Box::new(TtsaMdp { mdp })), "out") }
    })
}

/// # Safety
/// `handle` must come from a constructor above and not be used afterwards. Null is ignored.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn ttsa_mdp_free(handle: *mut TtsaMdp) {
    if !handle.is_null() {
        drop(unsafe { Box::from_raw(handle) });
    }
}

unsafe fn mdp<'a>(h: *const TtsaMdp) -> Result<&'a TabularMdp, Fail> {
    unsafe { h.as_ref() }.map(|m| &m.mdp).ok_or_else(|| null("handle"))
}

unsafe fn policy(m: &TabularMdp, probs: *const f64, len: usize) -> Result<Policy, Fail> {
    let (s, a) = (m.n_states(), m.n_actions());
    check_len(len, s * a, "policy")?;
    let p = unsafe { slice(probs, len, "policy")? };
    Policy::new(&DenseMatrix::from_row_slice(s, a, p)).map_err(|e| Fail(TtsaStatus::InvalidArgument, e.to_string()))
}

/// # Safety
/// `handle` live; outputs writable.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn ttsa_mdp_shape(handle: *const TtsaMdp, n_states: *mut usize, n_actions: *mut usize) -> TtsaStatus {
    guard(|| {
        let m = unsafe { mdp(handle)? };
        unsafe {
            write(n_states, m.n_states(), "n_states")?;
            write(n_actions, m.n_actions(), "n_actions")
        }
    })
}

/// Exact `V^pi` (length S) for a row-major `S x A` policy.
///
/// # Safety
/// `probs` holds `len = S*A` doubles, `v_out` holds S.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn ttsa_mdp_value(
    handle: *const TtsaMdp,
    probs: *const f64,
    len: usize,
    v_out: *mut f64,
    n_states: usize,
) -> TtsaStatus {
    guard(|| {
        let m = unsafe { mdp(handle)? };
        check_len(n_states, m.n_states(), "v_out")?;
        let pi = unsafe { policy(m, probs, len)? };
        let (_, v) = m.exact_q(&pi)?;
        unsafe { slice_mut(v_out, n_states, "v_out")? }.copy_from_slice(v.as_slice());
        Ok(())
    })
}

/// Residual of the performance-difference identity between `probs` and the optimal policy.
///
/// # Safety
/// `probs` holds `len = S*A` doubles; `residual` writable.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn ttsa_mdp_pdl_residual(
    handle: *const TtsaMdp,
    probs: *const f64,
    len: usize,
    residual: *mut f64,
) -> TtsaStatus {
    guard(|| {
        let m = unsafe { mdp(handle)? };
        let pi = unsafe { policy(m, probs, len)? };
        let r = check_pdl(m, &pi, &m.optimal_policy()?)?;
        unsafe { write(residual, r.residual, "residual") }
    })
}

/// Tabular actor-critic from the uniform policy with `alpha = alpha_scale K^{-3/4}` and
/// `beta = min(beta_cap, beta_scale K^{-1/2})` (`beta_cap <= 0` means uncapped).
///
/// # Safety
/// `opt0` and `final_opt` writable.
#[unsafe(no_mangle)]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn ttsa_mdp_run_nac(
    handle: *const TtsaMdp,
    k_max: u64,
    seed: u64,
    alpha_scale: f64,
    beta_scale: f64,
    beta_cap: f64,
    opt0: *mut f64,
    final_opt: *mut f64,
) -> TtsaStatus {
    guard(|| {
        let m = unsafe { mdp(handle)? };
        let (s, a) = (m.n_states(), m.n_actions());
        let steps = NacStepRule::power_law(alpha_scale, beta_scale, (beta_cap > 0.0).then_some(beta_cap));
        let features = FeatureMap::tabular(s, a);
        let cfg = MetricsConfig {
            points: 2,
            ..Default::default()
        };
        let t = ttnac_run(
            m,
            &features,
            &NacReference::new(m)?,
            &steps,
            &Policy::uniform(s, a),
            &DenseVector::zeros(s * a),
            k_max,
            &cfg,
            seed,
        )?;
        unsafe {
            write(opt0, t.opt0, "opt0")?;
            write(final_opt, t.final_opt, "final_opt")
        }
    })
}

/// Runs a TOML experiment config (as `ttsa run` does), writing artifacts under its output
/// directory. `pass` receives 1 when every configured rate target holds.
///
/// # Safety
/// `config_toml` must be NUL-terminated; `pass` may be null.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn ttsa_run_config(config_toml: *const c_char, jobs: usize, pass: *mut i32) -> TtsaStatus {
    guard(|| {
        let cfg = ExperimentConfig::from_toml(unsafe { text(config_toml, "config")? })?;
        let artifacts = run_experiment(&cfg, (jobs > 0).then_some(jobs))?;
        if !pass.is_null() {
            unsafe { pass.write(i32::from(artifacts.summary.pass)) };
        }
        Ok(())
    })
}
