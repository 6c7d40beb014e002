//! C ABI for the hjprox library.
//!
//! Conventions: every function returns an [`HjproxStatus`] code; outputs go
//! through pointers. Handles are opaque and must be released with the
//! matching `_free` function. On any non-OK status a thread-local message is
//! available via [`hjprox_last_error_message`] until the next call on the
//! same thread. Pointers must be non-null and arrays must match the stated
//! lengths; passing anything else is undefined behavior as usual for C.

use hjprox::hj::{JbvsTruth, NumericJbvs};
use hjprox::icnn::IcnnModel;
use hjprox::minorants::MinorantModel;
use hjprox::priors::{Prior, PriorConfig};
use hjprox::recover;
use hjprox::{Error, TimeParam};
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

/// Status codes mirrored into the generated header.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HjproxStatus {
    Ok = 0,
    InvalidArgument = 2,
    NumericFailure = 3,
    MissingDependency = 4,
    Unsupported = 5,
    Nondifferentiable = 6,
    OutOfRange = 7,
    Panic = 8,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> HjproxStatus {
    match e {
        Error::InvalidArgument(_)
        | Error::DimensionMismatch { .. }
        | Error::Config(_)
        | Error::Io(_) => HjproxStatus::InvalidArgument,
        Error::NumericFailure { .. }
        | Error::TrainingDiverged { .. }
        | Error::UnboundedConjugate { .. } => HjproxStatus::NumericFailure,
        Error::DependencyMissing(_) => HjproxStatus::MissingDependency,
        Error::Unsupported(_) => HjproxStatus::Unsupported,
        Error::Nondifferentiable(_) => HjproxStatus::Nondifferentiable,
        Error::OutOfRange(_) => HjproxStatus::OutOfRange,
    }
}

fn guard<F: FnOnce() -> Result<HjproxStatus, Error>>(f: F) -> HjproxStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(s)) => s,
        Ok(Err(e)) => {
            set_error(&e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic");
            HjproxStatus::Panic
        }
    }
}

/// Message describing the most recent error on this thread. Valid until the
/// next hjprox call on the same thread.
#[no_mangle]
pub extern "C" fn hjprox_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Static library version string.
#[no_mangle]
pub extern "C" fn hjprox_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Opaque analytic-prior handle.
pub struct HjproxPrior {
    prior: Prior,
}

/// Opaque trained-network handle.
pub struct HjproxIcnn {
    model: IcnnModel,
}

/// Opaque minorant-model handle.
pub struct HjproxMinorant {
    model: MinorantModel,
}

/// Opaque backward-viscosity evaluator (memoizing).
pub struct HjproxBackward {
    solver: OwnedBackward,
}

struct OwnedBackward {
    // The solver borrows `prior` through a raw pointer; the Box keeps the
    // address stable for the handle's lifetime.
    _prior: Box<Prior>,
    solver: Option<NumericJbvs<'static>>,
}

impl OwnedBackward {
    fn new(prior: Prior, t: TimeParam, a: f64) -> Result<Self, Error> {
        let boxed = Box::new(prior);
        let raw: &'static Prior = unsafe { &*(boxed.as_ref() as *const Prior) };
        let solver = NumericJbvs::new(raw, t, a)?;
        Ok(OwnedBackward {
            _prior: boxed,
            solver: Some(solver),
        })
    }

    fn eval(&self, y: &[f64]) -> Result<f64, Error> {
        self.solver.as_ref().expect("solver present").eval(y)
    }
}

impl Drop for OwnedBackward {
    fn drop(&mut self) {
        // Drop the borrower before the owner.
        self.solver = None;
    }
}

unsafe fn slice_arg<'a>(ptr: *const f64, len: usize) -> Result<&'a [f64], Error> {
    if ptr.is_null() {
        return Err(Error::invalid("null array pointer"));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

fn time_arg(t: f64) -> Result<TimeParam, Error> {
    TimeParam::new(t)
}

/// Creates a prior from a JSON config (same schema as the experiment files,
/// e.g. `{"kind":"l1"}` or
/// `{"kind":"min_plus_quadratics","centers":[[1,0],[0.7,0.7]],"sigmas":[1,1]}`)
/// instantiated at dimension `dim`.
///
/// # Safety
/// `config_json` must be a valid NUL-terminated string and `out` a valid
/// pointer; the returned handle must be freed with [`hjprox_prior_free`].
#[no_mangle]
pub unsafe extern "C" fn hjprox_prior_new(
    config_json: *const c_char,
    dim: usize,
    out: *mut *mut HjproxPrior,
) -> HjproxStatus {
    guard(|| {
        if config_json.is_null() || out.is_null() {
            return Err(Error::invalid("null pointer"));
        }
        let text = CStr::from_ptr(config_json)
            .to_str()
            .map_err(|_| Error::invalid("config is not UTF-8"))?;
        let cfg: PriorConfig = serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("bad prior config: {e}")))?;
        let prior = cfg.build(dim)?;
        *out = Box::into_raw(Box::new(HjproxPrior { prior }));
        Ok(HjproxStatus::Ok)
    })
}

/// # Safety
/// `handle` must come from [`hjprox_prior_new`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn hjprox_prior_free(handle: *mut HjproxPrior) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// J(y).
///
/// # Safety
/// `y` must point to `dim` doubles matching the handle's dimension.
#[no_mangle]
pub unsafe extern "C" fn hjprox_prior_eval_j(
    handle: *const HjproxPrior,
    y: *const f64,
    dim: usize,
    out: *mut f64,
) -> HjproxStatus {
    guard(|| {
        let h = handle
            .as_ref()
            .ok_or_else(|| Error::invalid("null handle"))?;
        let y = slice_arg(y, dim)?;
        let v = h.prior.eval_j(y)?;
        *out = v;
        Ok(HjproxStatus::Ok)
    })
}

/// Closed-form S(x,t).
///
/// # Safety
/// As for [`hjprox_prior_eval_j`].
#[no_mangle]
pub unsafe extern "C" fn hjprox_prior_eval_s(
    handle: *const HjproxPrior,
    x: *const f64,
    dim: usize,
    t: f64,
    out: *mut f64,
) -> HjproxStatus {
    guard(|| {
        let h = handle
            .as_ref()
            .ok_or_else(|| Error::invalid("null handle"))?;
        let x = slice_arg(x, dim)?;
        *out = h.prior.eval_s_closed(x, time_arg(t)?)?;
        Ok(HjproxStatus::Ok)
    })
}

/// psi(x,t) = ||x||^2/2 - t S(x,t).
///
/// # Safety
/// As for [`hjprox_prior_eval_j`].
#[no_mangle]
pub unsafe extern "C" fn hjprox_prior_eval_psi(
    handle: *const HjproxPrior,
    x: *const f64,
    dim: usize,
    t: f64,
    out: *mut f64,
) -> HjproxStatus {
    guard(|| {
        let h = handle
            .as_ref()
            .ok_or_else(|| Error::invalid("null handle"))?;
        let x = slice_arg(x, dim)?;
        *out = h.prior.eval_psi(x, time_arg(t)?)?;
        Ok(HjproxStatus::Ok)
    })
}

/// Unique proximal point, writing `dim` doubles to `out_y`. Fails with
/// `Unsupported` when the argmin set is multivalued at `x`.
///
/// # Safety
/// `out_y` must have room for `dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn hjprox_prior_prox_unique(
    handle: *const HjproxPrior,
    x: *const f64,
    dim: usize,
    t: f64,
    out_y: *mut f64,
) -> HjproxStatus {
    guard(|| {
        let h = handle
            .as_ref()
            .ok_or_else(|| Error::invalid("null handle"))?;
        let x = slice_arg(x, dim)?;
        let set = h.prior.eval_prox_closed(x, time_arg(t)?)?;
        let y = set
            .unique()
            .ok_or_else(|| Error::Unsupported("proximal set is multivalued here".into()))?;
        std::ptr::copy_nonoverlapping(y.as_ptr(), out_y, dim);
        Ok(HjproxStatus::Ok)
    })
}

/// Forward Lax-Oleinik solve: writes S(x,t) to `out_value` and the selected
/// minimizer to `out_minimizer` (`dim` doubles, may be NULL).
///
/// # Safety
/// As for [`hjprox_prior_prox_unique`].
#[no_mangle]
pub unsafe extern "C" fn hjprox_forward_solve(
    handle: *const HjproxPrior,
    x: *const f64,
    dim: usize,
    t: f64,
    out_value: *mut f64,
    out_minimizer: *mut f64,
) -> HjproxStatus {
    guard(|| {
        let h = handle
            .as_ref()
            .ok_or_else(|| Error::invalid("null handle"))?;
        let x = slice_arg(x, dim)?;
        let r = hjprox::hj::forward_solve(&h.prior, x, time_arg(t)?)?;
        *out_value = r.value;
        if !out_minimizer.is_null() {
            std::ptr::copy_nonoverlapping(r.minimizer.as_ptr(), out_minimizer, dim);
        }
        Ok(HjproxStatus::Ok)
    })
}

/// Ground-truth J_BVS evaluation (closed form when the family has one,
/// numeric backward sup otherwise).
///
/// # Safety
/// As for [`hjprox_prior_eval_j`].
#[no_mangle]
pub unsafe extern "C" fn hjprox_prior_jbvs(
    handle: *const HjproxPrior,
    y: *const f64,
    dim: usize,
    t: f64,
    box_halfwidth: f64,
    out: *mut f64,
) -> HjproxStatus {
    guard(|| {
        let h = handle
            .as_ref()
            .ok_or_else(|| Error::invalid("null handle"))?;
        let y = slice_arg(y, dim)?;
        let truth = JbvsTruth::for_prior(&h.prior, time_arg(t)?, box_halfwidth)?;
        *out = truth.eval(y)?;
        Ok(HjproxStatus::Ok)
    })
}

/// Creates a memoizing numeric backward-viscosity evaluator for the prior.
///
/// # Safety
/// `out` must be valid; free the handle with [`hjprox_backward_free`].
#[no_mangle]
pub unsafe extern "C" fn hjprox_backward_new(
    handle: *const HjproxPrior,
    t: f64,
    box_halfwidth: f64,
    out: *mut *mut HjproxBackward,
) -> HjproxStatus {
    guard(|| {
        let h = handle
            .as_ref()
            .ok_or_else(|| Error::invalid("null handle"))?;
        let solver = OwnedBackward::new(h.prior.clone(), time_arg(t)?, box_halfwidth)?;
        *out = Box::into_raw(Box::new(HjproxBackward { solver }));
        Ok(HjproxStatus::Ok)
    })
}

/// # Safety
/// `handle` must come from [`hjprox_backward_new`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn hjprox_backward_free(handle: *mut HjproxBackward) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// Numeric J_BVS(y) via the backward sup.
///
/// # Safety
/// As for [`hjprox_prior_eval_j`].
#[no_mangle]
pub unsafe extern "C" fn hjprox_backward_eval(
    handle: *const HjproxBackward,
    y: *const f64,
    dim: usize,
    out: *mut f64,
) -> HjproxStatus {
    guard(|| {
        let h = handle
            .as_ref()
            .ok_or_else(|| Error::invalid("null handle"))?;
        let y = slice_arg(y, dim)?;
        *out = h.solver.eval(y)?;
        Ok(HjproxStatus::Ok)
    })
}

/// Loads a trained network checkpoint.
///
/// # Safety
/// `path` must be a valid NUL-terminated string; free the handle with
/// [`hjprox_icnn_free`].
#[no_mangle]
pub unsafe extern "C" fn hjprox_icnn_load(
    path: *const c_char,
    out: *mut *mut HjproxIcnn,
) -> HjproxStatus {
    guard(|| {
        if path.is_null() || out.is_null() {
            return Err(Error::invalid("null pointer"));
        }
        let p = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| Error::invalid("path is not UTF-8"))?;
        let model = IcnnModel::load_file(Path::new(p))?;
        *out = Box::into_raw(Box::new(HjproxIcnn { model }));
        Ok(HjproxStatus::Ok)
    })
}

/// # Safety
/// `handle` must come from [`hjprox_icnn_load`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn hjprox_icnn_free(handle: *mut HjproxIcnn) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// Input dimension of a loaded network.
///
/// # Safety
/// `handle` must be a live handle from [`hjprox_icnn_load`].
#[no_mangle]
pub unsafe extern "C" fn hjprox_icnn_input_dim(
    handle: *const HjproxIcnn,
    out: *mut usize,
) -> HjproxStatus {
    guard(|| {
        let h = handle
            .as_ref()
            .ok_or_else(|| Error::invalid("null handle"))?;
        *out = h.model.input_dim();
        Ok(HjproxStatus::Ok)
    })
}

/// Network output at `y`.
///
/// # Safety
/// As for [`hjprox_prior_eval_j`].
#[no_mangle]
pub unsafe extern "C" fn hjprox_icnn_forward(
    handle: *const HjproxIcnn,
    y: *const f64,
    dim: usize,
    out: *mut f64,
) -> HjproxStatus {
    guard(|| {
        let h = handle
            .as_ref()
            .ok_or_else(|| Error::invalid("null handle"))?;
        let y = slice_arg(y, dim)?;
        *out = h.model.forward(y)?;
        Ok(HjproxStatus::Ok)
    })
}

/// Exact input gradient (the learned proximal map when the model plays the
/// psi role); writes `dim` doubles.
///
/// # Safety
/// As for [`hjprox_prior_prox_unique`].
#[no_mangle]
pub unsafe extern "C" fn hjprox_icnn_input_gradient(
    handle: *const HjproxIcnn,
    y: *const f64,
    dim: usize,
    out_grad: *mut f64,
) -> HjproxStatus {
    guard(|| {
        let h = handle
            .as_ref()
            .ok_or_else(|| Error::invalid("null handle"))?;
        let y = slice_arg(y, dim)?;
        let g = h.model.input_gradient(y)?;
        std::ptr::copy_nonoverlapping(g.as_ptr(), out_grad, dim);
        Ok(HjproxStatus::Ok)
    })
}

/// Direct prior recovery from a conjugate-network checkpoint:
/// phi_G(x) - ||x||^2/2, divided by t when `general_t` is nonzero.
///
/// # Safety
/// As for [`hjprox_prior_eval_j`].
#[no_mangle]
pub unsafe extern "C" fn hjprox_recover_direct(
    handle: *const HjproxIcnn,
    x: *const f64,
    dim: usize,
    t: f64,
    general_t: i32,
    out: *mut f64,
) -> HjproxStatus {
    guard(|| {
        let h = handle
            .as_ref()
            .ok_or_else(|| Error::invalid("null handle"))?;
        let x = slice_arg(x, dim)?;
        *out = recover::eval_direct(&h.model, x, time_arg(t)?, general_t != 0)?;
        Ok(HjproxStatus::Ok)
    })
}

/// Invert-method recovery from a potential checkpoint.
///
/// # Safety
/// As for [`hjprox_prior_eval_j`].
#[no_mangle]
pub unsafe extern "C" fn hjprox_recover_invert(
    handle: *const HjproxIcnn,
    y: *const f64,
    dim: usize,
    t: f64,
    search_halfwidth: f64,
    out: *mut f64,
) -> HjproxStatus {
    guard(|| {
        let h = handle
            .as_ref()
            .ok_or_else(|| Error::invalid("null handle"))?;
        let y = slice_arg(y, dim)?;
        *out = recover::eval_invert(&h.model, y, time_arg(t)?, search_halfwidth)?;
        Ok(HjproxStatus::Ok)
    })
}

/// Loads a minorant model file.
///
/// # Safety
/// As for [`hjprox_icnn_load`]; free with [`hjprox_minorant_free`].
#[no_mangle]
pub unsafe extern "C" fn hjprox_minorant_load(
    path: *const c_char,
    out: *mut *mut HjproxMinorant,
) -> HjproxStatus {
    guard(|| {
        if path.is_null() || out.is_null() {
            return Err(Error::invalid("null pointer"));
        }
        let p = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| Error::invalid("path is not UTF-8"))?;
        let model = MinorantModel::from_file(Path::new(p))?;
        *out = Box::into_raw(Box::new(HjproxMinorant { model }));
        Ok(HjproxStatus::Ok)
    })
}

/// # Safety
/// `handle` must come from [`hjprox_minorant_load`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn hjprox_minorant_free(handle: *mut HjproxMinorant) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// Minorant value at `y`.
///
/// # Safety
/// As for [`hjprox_prior_eval_j`].
#[no_mangle]
pub unsafe extern "C" fn hjprox_minorant_eval(
    handle: *const HjproxMinorant,
    y: *const f64,
    dim: usize,
    out: *mut f64,
) -> HjproxStatus {
    guard(|| {
        let h = handle
            .as_ref()
            .ok_or_else(|| Error::invalid("null handle"))?;
        let y = slice_arg(y, dim)?;
        *out = h.model.eval(y)?;
        Ok(HjproxStatus::Ok)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prior_roundtrip_through_c_abi() {
        let cfg = CString::new(r#"{"kind":"neg_abs_1d"}"#).unwrap();
        let mut handle: *mut HjproxPrior = std::ptr::null_mut();
        unsafe {
            assert_eq!(
                hjprox_prior_new(cfg.as_ptr(), 1, &mut handle),
                HjproxStatus::Ok
            );
            let x = [0.7f64];
            let mut s = 0.0;
            assert_eq!(
                hjprox_prior_eval_s(handle, x.as_ptr(), 1, 1.0, &mut s),
                HjproxStatus::Ok
            );
            assert!((s - (-1.2)).abs() < 1e-12);
            let mut psi = 0.0;
            let one = [1.0f64];
            assert_eq!(
                hjprox_prior_eval_psi(handle, one.as_ptr(), 1, 1.0, &mut psi),
                HjproxStatus::Ok
            );
            assert!((psi - 2.0).abs() < 1e-12);
            let mut jbvs = 0.0;
            let zero = [0.0f64];
            assert_eq!(
                hjprox_prior_jbvs(handle, zero.as_ptr(), 1, 1.0, 4.0, &mut jbvs),
                HjproxStatus::Ok
            );
            assert!((jbvs - (-0.5)).abs() < 1e-12);
            // Multivalued prox at the origin must refuse.
            let mut y = [0.0f64];
            assert_eq!(
                hjprox_prior_prox_unique(handle, zero.as_ptr(), 1, 1.0, y.as_mut_ptr()),
                HjproxStatus::Unsupported
            );
            hjprox_prior_free(handle);
        }
    }

    #[test]
    fn bad_config_sets_message() {
        let cfg = CString::new("not json").unwrap();
        let mut handle: *mut HjproxPrior = std::ptr::null_mut();
        unsafe {
            let st = hjprox_prior_new(cfg.as_ptr(), 1, &mut handle);
            assert_eq!(st, HjproxStatus::InvalidArgument);
            let msg = CStr::from_ptr(hjprox_last_error_message());
            assert!(!msg.to_bytes().is_empty());
        }
    }

    #[test]
    fn forward_solve_through_c_abi() {
        let cfg = CString::new(r#"{"kind":"l1"}"#).unwrap();
        let mut handle: *mut HjproxPrior = std::ptr::null_mut();
        unsafe {
            assert_eq!(
                hjprox_prior_new(cfg.as_ptr(), 2, &mut handle),
                HjproxStatus::Ok
            );
            let x = [2.0f64, -0.5];
            let mut value = 0.0;
            let mut argmin = [0.0f64; 2];
            assert_eq!(
                hjprox_forward_solve(handle, x.as_ptr(), 2, 1.0, &mut value, argmin.as_mut_ptr()),
                HjproxStatus::Ok
            );
            assert!((value - 1.625).abs() < 1e-7, "value {value}");
            assert!((argmin[0] - 1.0).abs() < 1e-5);
            assert!(argmin[1].abs() < 1e-5);
            hjprox_prior_free(handle);
        }
    }

    #[test]
    fn backward_handle_lifecycle() {
        let cfg = CString::new(r#"{"kind":"min_plus_default"}"#).unwrap();
        let mut prior: *mut HjproxPrior = std::ptr::null_mut();
        let mut bw: *mut HjproxBackward = std::ptr::null_mut();
        unsafe {
            assert_eq!(
                hjprox_prior_new(cfg.as_ptr(), 2, &mut prior),
                HjproxStatus::Ok
            );
            assert_eq!(
                hjprox_backward_new(prior, 1.0, 4.0, &mut bw),
                HjproxStatus::Ok
            );
            let y = [1.0f64, 0.0];
            let mut v = 0.0;
            assert_eq!(
                hjprox_backward_eval(bw, y.as_ptr(), 2, &mut v),
                HjproxStatus::Ok
            );
            // J_BVS <= J, and J(mu_1) = 0.
            assert!(v <= 1e-6, "J_BVS at mu_1 should be <= 0, got {v}");
            hjprox_backward_free(bw);
            hjprox_prior_free(prior);
        }
    }
}
