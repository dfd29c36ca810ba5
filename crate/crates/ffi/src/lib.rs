//! C ABI over `wfstein`. Every fallible call returns a [`WfStatus`]; the
//! message of the most recent failure on the calling thread is available
//! through [`wf_last_error`]. Models are opaque handles released with
//! [`wf_model_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;
use std::sync::Arc;

use wfstein::dirichlet::DirichletLaw;
use wfstein::interp::{standard_kernel, MAX_ORDER, STENCIL};
use wfstein::stein::solve_stein;
use wfstein::{stationary_distribution, Error, GridFunction, ModelParams, SimplexLattice, StationaryDistribution, TransitionKernel};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Capacity = 3,
    Singular = 4,
    Domain = 5,
    Panic = 6,
}

/// A Wright-Fisher model: lattice, transition kernel and (once computed) its stationary law.
pub struct WfModel {
    kernel: TransitionKernel,
    pi: Option<StationaryDistribution>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> WfStatus {
    match e {
        Error::Capacity { .. } => WfStatus::Capacity,
        Error::Singular(_) => WfStatus::Singular,
        Error::Domain(_) => WfStatus::Domain,
        Error::AtN { source, .. } => status_of(source),
        _ => WfStatus::InvalidArgument,
    }
}

fn guard(f: impl FnOnce() -> Result<(), WfStatus>) -> WfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => WfStatus::Ok,
        Ok(Err(s)) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {msg}"));
            WfStatus::Panic
        }
    }
}

fn fail(e: Error) -> WfStatus {
    let s = status_of(&e);
    set_error(e.to_string());
    s
}

fn invalid(msg: impl Into<String>) -> WfStatus {
    set_error(msg.into());
    WfStatus::InvalidArgument
}

fn null(what: &str) -> WfStatus {
    set_error(format!("{what} is null"));
    WfStatus::NullPointer
}

unsafe fn input<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], WfStatus> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn output<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], WfStatus> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts_mut(p, len))
}

fn ensure_pi(model: &mut WfModel) -> Result<&StationaryDistribution, WfStatus> {
    if model.pi.is_none() {
        model.pi = Some(stationary_distribution(&model.kernel).map_err(fail)?);
    }
    Ok(model.pi.as_ref().expect("just set"))
}

/// Builds the model for population size `n` and the `k` mutation parameters
/// `beta`, storing the handle in `*out`.
///
/// # Safety
/// `beta` must point to `k` readable doubles and `out` to a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn wf_model_new(n: usize, beta: *const f64, k: usize, out: *mut *mut WfModel) -> WfStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let beta = input(beta, k, "beta")?.to_vec();
        let params = ModelParams::new(n, beta).map_err(fail)?;
        let lattice = Arc::new(SimplexLattice::new(params).map_err(fail)?);
        let model = WfModel { kernel: TransitionKernel::new(lattice), pi: None };
        *out = Box::into_raw(Box::new(model));
        Ok(())
    })
}

/// Releases a handle from [`wf_model_new`]. Null is ignored.
///
/// # Safety
/// `model` must be null or a live handle, not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn wf_model_free(model: *mut WfModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of lattice states.
///
/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn wf_model_num_states(model: *const WfModel, out: *mut usize) -> WfStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let o = out.as_mut().ok_or_else(|| null("out"))?;
        *o = m.kernel.len();
        Ok(())
    })
}

/// Writes the `K − 1` type counts of state `index` into `counts`.
///
/// # Safety
/// `model` must be a live handle and `counts` must hold `len` writable entries.
#[no_mangle]
pub unsafe extern "C" fn wf_model_state_counts(model: *const WfModel, index: usize, counts: *mut usize, len: usize) -> WfStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let lattice = m.kernel.lattice();
        if index >= lattice.len() {
            return Err(invalid(format!("state index {index} out of range (0..{})", lattice.len())));
        }
        if len != lattice.dim() {
            return Err(invalid(format!("counts buffer must have {} entries", lattice.dim())));
        }
        output(counts, len, "counts")?.copy_from_slice(lattice.state(index).counts());
        Ok(())
    })
}

/// Stationary law in state order; `residual` (may be null) receives `‖πP − π‖₁`.
///
/// # Safety
/// `model` must be a live handle, `pi` must hold `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn wf_model_stationary(model: *mut WfModel, pi: *mut f64, len: usize, residual: *mut f64) -> WfStatus {
    guard(|| {
        let m = model.as_mut().ok_or_else(|| null("model"))?;
        if len != m.kernel.len() {
            return Err(invalid(format!("pi buffer must have {} entries", m.kernel.len())));
        }
        let out = output(pi, len, "pi")?;
        let st = ensure_pi(m)?;
        out.copy_from_slice(st.pi());
        if let Some(r) = residual.as_mut() {
            *r = st.residual();
        }
        Ok(())
    })
}

/// Solves `G_U f = h − πh` with `πf = 0`. `factors` (may be null) receives
/// `B_1..B_4`, `residual` (may be null) the maximum equation residual.
///
/// # Safety
/// `model` must be a live handle; `h` and `f` must hold `len` doubles;
/// `factors`, when non-null, four writable doubles.
#[no_mangle]
pub unsafe extern "C" fn wf_model_solve_stein(
    model: *mut WfModel,
    h: *const f64,
    f: *mut f64,
    len: usize,
    factors: *mut f64,
    residual: *mut f64,
) -> WfStatus {
    guard(|| {
        let m = model.as_mut().ok_or_else(|| null("model"))?;
        if len != m.kernel.len() {
            return Err(invalid(format!("buffers must have {} entries", m.kernel.len())));
        }
        let h = input(h, len, "h")?;
        let out = output(f, len, "f")?;
        let lattice = m.kernel.lattice().clone();
        let grid = GridFunction::from_values(lattice, h.to_vec()).map_err(fail)?;
        ensure_pi(m)?;
        let sol = solve_stein(&m.kernel, m.pi.as_ref().expect("computed"), &grid).map_err(fail)?;
        out.copy_from_slice(sol.f.values());
        if !factors.is_null() {
            output(factors, 4, "factors")?.copy_from_slice(&sol.factors);
        }
        if let Some(r) = residual.as_mut() {
            *r = sol.residual;
        }
        Ok(())
    })
}

/// The five interpolation weights (or their `order`-th derivatives in the
/// local coordinate) at `t ∈ [0, 1]`.
///
/// # Safety
/// `out` must hold five writable doubles.
#[no_mangle]
pub unsafe extern "C" fn wf_interp_weights(t: f64, order: u32, out: *mut f64) -> WfStatus {
    guard(|| {
        if !(0.0..=1.0).contains(&t) {
            return Err(invalid(format!("t = {t} outside [0, 1]")));
        }
        if order as usize > MAX_ORDER {
            return Err(invalid(format!("order {order} above {MAX_ORDER}")));
        }
        output(out, STENCIL, "out")?.copy_from_slice(&standard_kernel().eval(t, order as usize));
        Ok(())
    })
}

/// `P(Z_K ≤ t)` for `Z ~ Dirichlet(beta)`.
///
/// # Safety
/// `beta` must point to `k` readable doubles and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn wf_dirichlet_beta_tail(beta: *const f64, k: usize, t: f64, out: *mut f64) -> WfStatus {
    guard(|| {
        let beta = input(beta, k, "beta")?.to_vec();
        let o = out.as_mut().ok_or_else(|| null("out"))?;
        let law = DirichletLaw::new(beta).map_err(fail)?;
        *o = law.beta_tail(t).map_err(fail)?;
        Ok(())
    })
}

/// Copies the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len`) and returns the full message length plus one. Returns
/// zero when there is no error.
///
/// # Safety
/// `buf` must be null or hold `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn wf_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref() else { return 0 };
        let bytes = msg.as_bytes_with_nul();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len);
            ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, n);
            *buf.add(n - 1) = 0;
        }
        bytes.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn wf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}
