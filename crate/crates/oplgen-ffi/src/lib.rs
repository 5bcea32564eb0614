//! C ABI for the oplgen policy-learning library.
//!
//! Conventions:
//!
//! - Datasets are opaque handles created by `oplgen_dataset_from_arrays` or
//!   `oplgen_dataset_load_csv` and released with `oplgen_dataset_free`.
//! - Every fallible function returns an [`OplStatus`] code; outputs go
//!   through pointers. On failure a thread-local message is set and can be
//!   fetched with `oplgen_last_error_message` (valid until the next failing
//!   call on the same thread).
//! - Matrices are row-major `f64` buffers.

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::os::raw::{c_char, c_int};
use std::ptr;

use oplgen::dataset::{load_csv, CsvSchema, TrialDataset};
use oplgen::dcopt::{mmccp, DcObjective, MmccpConfig};
use oplgen::nuisance::{build_scores, fit_nuisance, BehaviorMode, NuisanceOptions, ScoreMethod};
use oplgen::policy::{policy_prob, PolicyKind, PolicySpec};
use oplgen::worstcase::{bounds, worst_case_value};

/// Status codes returned by every fallible entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OplStatus {
    Ok = 0,
    /// A required pointer was null.
    NullPointer = 1,
    /// Invalid argument or malformed input data.
    InvalidArgument = 2,
    /// Numerical failure (fitting or optimization).
    NumericalFailure = 3,
}

/// Score estimator selector for the C surface.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OplMethod {
    Dm = 0,
    Nipw = 1,
    Dr = 2,
}

impl From<OplMethod> for ScoreMethod {
    fn from(m: OplMethod) -> Self {
        match m {
            OplMethod::Dm => ScoreMethod::Dm,
            OplMethod::Nipw => ScoreMethod::Nipw,
            OplMethod::Dr => ScoreMethod::Dr,
        }
    }
}

/// Policy class selector for the C surface.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OplPolicyKind {
    Logistic = 0,
    Linear = 1,
}

impl From<OplPolicyKind> for PolicyKind {
    fn from(k: OplPolicyKind) -> Self {
        match k {
            OplPolicyKind::Logistic => PolicyKind::Logistic,
            OplPolicyKind::Linear => PolicyKind::Linear,
        }
    }
}

/// Opaque dataset handle.
pub struct OplDataset {
    inner: TrialDataset,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let cstring = CString::new(message)
        .unwrap_or_else(|_| CString::new("error message contained NUL").unwrap());
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(cstring));
}

fn fail(status: OplStatus, message: impl Into<String>) -> OplStatus {
    set_error(message.into());
    status
}

/// Message of the last failure on this thread, or null when none occurred.
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn oplgen_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| {
        slot.borrow()
            .as_ref()
            .map_or(ptr::null(), |msg| msg.as_ptr())
    })
}

/// Library version as a static C string.
#[no_mangle]
pub extern "C" fn oplgen_version() -> *const c_char {
    static VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    VERSION.as_ptr() as *const c_char
}

/// Builds a dataset from row-major covariates.
///
/// `behavior_probs` may be null when unknown. Returns a handle or null on
/// failure (check `oplgen_last_error_message`).
///
/// # Safety
/// `covariates` must point to `n*d` doubles, `treatments` to `n` ints in
/// {0,1}, `outcomes` to `n` doubles, `behavior_probs` to `n` doubles or null.
#[no_mangle]
pub unsafe extern "C" fn oplgen_dataset_from_arrays(
    covariates: *const f64,
    n: usize,
    d: usize,
    treatments: *const c_int,
    outcomes: *const f64,
    behavior_probs: *const f64,
) -> *mut OplDataset {
    if covariates.is_null() || treatments.is_null() || outcomes.is_null() {
        set_error("null input pointer".into());
        return ptr::null_mut();
    }
    let cov = std::slice::from_raw_parts(covariates, n * d).to_vec();
    let t_raw = std::slice::from_raw_parts(treatments, n);
    let mut t = Vec::with_capacity(n);
    for &v in t_raw {
        if v != 0 && v != 1 {
            set_error(format!("treatment must be 0 or 1, got {v}"));
            return ptr::null_mut();
        }
        t.push(v as u8);
    }
    let y = std::slice::from_raw_parts(outcomes, n).to_vec();
    let pb = if behavior_probs.is_null() {
        None
    } else {
        Some(std::slice::from_raw_parts(behavior_probs, n).to_vec())
    };
    match TrialDataset::new(cov, d, t, y, pb) {
        Ok(inner) => Box::into_raw(Box::new(OplDataset { inner })),
        Err(e) => {
            set_error(e.to_string());
            ptr::null_mut()
        }
    }
}

/// Loads a dataset from a CSV file with the default schema (columns `t`,
/// `y`, optional `pb`; all other non-oracle columns are covariates).
///
/// # Safety
/// `path` must be a valid NUL-terminated UTF-8 string.
#[no_mangle]
pub unsafe extern "C" fn oplgen_dataset_load_csv(path: *const c_char) -> *mut OplDataset {
    if path.is_null() {
        set_error("null path".into());
        return ptr::null_mut();
    }
    let path = match CStr::from_ptr(path).to_str() {
        Ok(s) => s,
        Err(_) => {
            set_error("path is not valid UTF-8".into());
            return ptr::null_mut();
        }
    };
    match load_csv(path, &CsvSchema::default()) {
        Ok(inner) => Box::into_raw(Box::new(OplDataset { inner })),
        Err(e) => {
            set_error(e.to_string());
            ptr::null_mut()
        }
    }
}

/// Number of rows in a dataset handle.
///
/// # Safety
/// `handle` must be a live pointer from a dataset constructor.
#[no_mangle]
pub unsafe extern "C" fn oplgen_dataset_rows(handle: *const OplDataset) -> usize {
    if handle.is_null() {
        return 0;
    }
    (*handle).inner.n()
}

/// Covariate dimension of a dataset handle.
///
/// # Safety
/// `handle` must be a live pointer from a dataset constructor.
#[no_mangle]
pub unsafe extern "C" fn oplgen_dataset_dim(handle: *const OplDataset) -> usize {
    if handle.is_null() {
        return 0;
    }
    (*handle).inner.dim()
}

/// Releases a dataset handle. Null is a no-op.
///
/// # Safety
/// `handle` must come from a dataset constructor and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn oplgen_dataset_free(handle: *mut OplDataset) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// Density-ratio box bounds for an odds-ratio bound `gamma` and selection
/// rate `p_sel`.
///
/// # Safety
/// `out_l` and `out_u` must be valid writable pointers.
#[no_mangle]
pub unsafe extern "C" fn oplgen_bounds(
    gamma: f64,
    p_sel: f64,
    out_l: *mut f64,
    out_u: *mut f64,
) -> OplStatus {
    if out_l.is_null() || out_u.is_null() {
        return fail(OplStatus::NullPointer, "null output pointer");
    }
    match bounds(gamma, p_sel) {
        Ok(set) => {
            *out_l = set.l;
            *out_u = set.u;
            OplStatus::Ok
        }
        Err(e) => fail(OplStatus::InvalidArgument, e.to_string()),
    }
}

/// Closed-form worst-case Hajek value of `psi` over the density-ratio box.
/// `out_rn` (length n) receives the maximizing ratio vector when non-null.
///
/// # Safety
/// `psi` must point to `n` doubles; `out_value` must be writable; `out_rn`
/// must be null or point to `n` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn oplgen_worst_case_value(
    psi: *const f64,
    n: usize,
    gamma: f64,
    p_sel: f64,
    out_value: *mut f64,
    out_k_star: *mut usize,
    out_rn: *mut f64,
) -> OplStatus {
    if psi.is_null() || out_value.is_null() {
        return fail(OplStatus::NullPointer, "null input or output pointer");
    }
    if n == 0 {
        return fail(OplStatus::InvalidArgument, "n must be positive");
    }
    let set = match bounds(gamma, p_sel) {
        Ok(set) => set,
        Err(e) => return fail(OplStatus::InvalidArgument, e.to_string()),
    };
    let scores = std::slice::from_raw_parts(psi, n);
    if scores.iter().any(|v| !v.is_finite()) {
        return fail(OplStatus::InvalidArgument, "scores must be finite");
    }
    let sol = worst_case_value(scores, &set);
    *out_value = sol.value;
    if !out_k_star.is_null() {
        *out_k_star = sol.k_star;
    }
    if !out_rn.is_null() {
        std::slice::from_raw_parts_mut(out_rn, n).copy_from_slice(&sol.rn_at_opt);
    }
    OplStatus::Ok
}

/// Policy probability `pi(x; theta)` for the given class.
///
/// # Safety
/// `theta` and `x` must point to `d` doubles; `out_prob` must be writable.
#[no_mangle]
pub unsafe extern "C" fn oplgen_policy_prob(
    kind: OplPolicyKind,
    theta: *const f64,
    x: *const f64,
    d: usize,
    out_prob: *mut f64,
) -> OplStatus {
    if theta.is_null() || x.is_null() || out_prob.is_null() {
        return fail(OplStatus::NullPointer, "null pointer");
    }
    if d == 0 {
        return fail(OplStatus::InvalidArgument, "d must be positive");
    }
    let spec = PolicySpec::new(kind.into(), d);
    let theta = std::slice::from_raw_parts(theta, d);
    let x = std::slice::from_raw_parts(x, d);
    *out_prob = policy_prob(&spec, theta, x);
    OplStatus::Ok
}

/// Fits one worst-case-optimal policy on a dataset handle.
///
/// `p_sel` must lie in (0,1); pass the calibrated value when it came from
/// data. `behavior_known` selects whether recorded behavior probabilities
/// are used (nonzero) or a logistic model is fit. Writes `d` parameters into
/// `out_theta` and the in-sample worst-case value into `out_value`.
///
/// # Safety
/// `handle` must be live; `out_theta` must point to `d` writable doubles;
/// `out_value` must be writable or null.
#[no_mangle]
pub unsafe extern "C" fn oplgen_fit(
    handle: *const OplDataset,
    method: OplMethod,
    kind: OplPolicyKind,
    gamma: f64,
    p_sel: f64,
    seed: u64,
    behavior_known: c_int,
    out_theta: *mut f64,
    out_value: *mut f64,
) -> OplStatus {
    if handle.is_null() || out_theta.is_null() {
        return fail(OplStatus::NullPointer, "null handle or output pointer");
    }
    let data = &(*handle).inner;
    let set = match bounds(gamma, p_sel) {
        Ok(set) => set,
        Err(e) => return fail(OplStatus::InvalidArgument, e.to_string()),
    };
    let opts = NuisanceOptions {
        behavior: if behavior_known != 0 {
            BehaviorMode::Known
        } else {
            BehaviorMode::Fit
        },
        ..NuisanceOptions::default()
    };
    let models = match fit_nuisance(data, &opts) {
        Ok(m) => m,
        Err(e) => return fail(OplStatus::NumericalFailure, e.to_string()),
    };
    let scores = build_scores(method.into(), data, &models);
    let spec = PolicySpec::new(kind.into(), data.dim());
    let dc = DcObjective::new(&scores, set, spec, data);
    match mmccp(&dc, &MmccpConfig::default(), seed) {
        Ok(result) => {
            std::slice::from_raw_parts_mut(out_theta, data.dim())
                .copy_from_slice(&result.theta.theta);
            if !out_value.is_null() {
                *out_value = result.final_value();
            }
            OplStatus::Ok
        }
        Err(e) => fail(OplStatus::NumericalFailure, e.to_string()),
    }
}

/// Calibrates `(gamma, P(S=1))` from one shared covariate column.
///
/// # Safety
/// `train_col` must point to `n` doubles and `target_col` to `m` doubles;
/// outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn oplgen_calibrate(
    train_col: *const f64,
    n: usize,
    target_col: *const f64,
    m: usize,
    eta: f64,
    out_p_sel: *mut f64,
    out_gamma: *mut f64,
) -> OplStatus {
    if train_col.is_null() || target_col.is_null() || out_p_sel.is_null() || out_gamma.is_null()
    {
        return fail(OplStatus::NullPointer, "null pointer");
    }
    let train = std::slice::from_raw_parts(train_col, n);
    let target = std::slice::from_raw_parts(target_col, m);
    let opts = oplgen::calibrate::CalibrationOptions {
        eta,
        ..Default::default()
    };
    match oplgen::calibrate::calibrate(train, target, &opts) {
        Ok(result) => {
            *out_p_sel = result.p_sel;
            *out_gamma = result.gamma;
            OplStatus::Ok
        }
        Err(e) => match e {
            oplgen::calibrate::CalibrationError::Fit(_) => {
                fail(OplStatus::NumericalFailure, e.to_string())
            }
            _ => fail(OplStatus::InvalidArgument, e.to_string()),
        },
    }
}
