//! C ABI over `fvddp`.
//!
//! Datasets and states cross the boundary as opaque handles that the caller
//! releases with the matching `_free` function. Every fallible call returns an
//! `FvddpStatus`; on failure `fvddp_last_error` describes what went wrong on
//! the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use fvddp::filtering::{filter_dataset, InferenceOptions, Mode};
use fvddp::io::{dataset_from_str, state_from_str, state_to_string, Provenance};
use fvddp::posterior::predictive;
use fvddp::smoothing::smooth_dataset;

/// Result codes. Nonzero codes 2-4 match the command-line exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FvddpStatus {
    Ok = 0,
    /// Null pointer, bad UTF-8 or an out-of-range argument.
    BadArgument = 1,
    Validation = 2,
    Numeric = 3,
    DegenerateMc = 4,
    Panic = 5,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FvddpMode {
    Exact = 0,
    Mc = 1,
    Auto = 2,
}

/// Inference settings; start from `fvddp_options_default`.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct FvddpOptions {
    pub mode: FvddpMode,
    pub particles: u64,
    pub epsilon: f64,
    pub seed: u64,
}

/// Opaque dataset handle.
pub struct FvddpDataset(fvddp::Dataset);

/// Opaque mixture-state handle.
pub struct FvddpState(fvddp::FvddpState);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let text = CString::new(msg.into().replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(text));
}

fn fail(e: fvddp::Error) -> FvddpStatus {
    let status = match e.exit_code() {
        3 => FvddpStatus::Numeric,
        4 => FvddpStatus::DegenerateMc,
        _ => FvddpStatus::Validation,
    };
    set_error(format!("{}: {e}", e.class()));
    status
}

fn bad_argument(msg: &str) -> FvddpStatus {
    set_error(msg);
    FvddpStatus::BadArgument
}

fn guard(f: impl FnOnce() -> FvddpStatus) -> FvddpStatus {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| {
        set_error("internal panic");
        FvddpStatus::Panic
    })
}

unsafe fn read_str<'a>(s: *const c_char) -> Result<&'a str, FvddpStatus> {
    if s.is_null() {
        return Err(bad_argument("null string"));
    }
    CStr::from_ptr(s).to_str().map_err(|_| bad_argument("string is not valid UTF-8"))
}

fn to_options(o: &FvddpOptions) -> InferenceOptions {
    let mode = match o.mode {
        FvddpMode::Exact => Mode::Exact,
        FvddpMode::Mc => Mode::Mc,
        FvddpMode::Auto => Mode::Auto,
    };
    InferenceOptions { mode, particles: o.particles, epsilon: o.epsilon, seed: o.seed, ..InferenceOptions::default() }
}

/// Message for the last failure on this thread, or NULL. Valid until the
/// next call into this library from the same thread.
#[no_mangle]
pub extern "C" fn fvddp_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

#[no_mangle]
pub extern "C" fn fvddp_options_default() -> FvddpOptions {
    let d = InferenceOptions::default();
    FvddpOptions { mode: FvddpMode::Exact, particles: d.particles, epsilon: d.epsilon, seed: d.seed }
}

/// Parses a dataset JSON document.
///
/// # Safety
/// `json` must be a nul-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn fvddp_dataset_from_json(json: *const c_char, out: *mut *mut FvddpDataset) -> FvddpStatus {
    guard(|| {
        if out.is_null() {
            return bad_argument("null output pointer");
        }
        let text = match read_str(json) {
            Ok(t) => t,
            Err(s) => return s,
        };
        match dataset_from_str(text) {
            Ok(d) => {
                *out = Box::into_raw(Box::new(FvddpDataset(d)));
                FvddpStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// # Safety
/// `dataset` must be NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fvddp_dataset_free(dataset: *mut FvddpDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Parses a state JSON document.
///
/// # Safety
/// `json` must be a nul-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn fvddp_state_from_json(json: *const c_char, out: *mut *mut FvddpState) -> FvddpStatus {
    guard(|| {
        if out.is_null() {
            return bad_argument("null output pointer");
        }
        let text = match read_str(json) {
            Ok(t) => t,
            Err(s) => return s,
        };
        match state_from_str(text) {
            Ok(s) => {
                *out = Box::into_raw(Box::new(FvddpState(s)));
                FvddpStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Serializes a state; release the string with `fvddp_string_free`.
///
/// # Safety
/// `state` must be a live handle and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn fvddp_state_to_json(state: *const FvddpState, out: *mut *mut c_char) -> FvddpStatus {
    guard(|| {
        if state.is_null() || out.is_null() {
            return bad_argument("null pointer");
        }
        let text = state_to_string(&(*state).0, Provenance::default());
        *out = CString::new(text).expect("JSON has no nul").into_raw();
        FvddpStatus::Ok
    })
}

/// # Safety
/// `s` must be NULL or a string returned by this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fvddp_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// # Safety
/// `state` must be NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fvddp_state_free(state: *mut FvddpState) {
    if !state.is_null() {
        drop(Box::from_raw(state));
    }
}

/// Number of mixture components, or 0 for NULL.
///
/// # Safety
/// `state` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fvddp_state_len(state: *const FvddpState) -> usize {
    state.as_ref().map_or(0, |s| s.0.len())
}

/// Number of registered types, or 0 for NULL.
///
/// # Safety
/// `state` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fvddp_state_types(state: *const FvddpState) -> usize {
    state.as_ref().map_or(0, |s| s.0.registry().len())
}

/// Filtering distribution at the last collection time.
///
/// # Safety
/// `dataset` and `options` must be live pointers and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fvddp_filter(
    dataset: *const FvddpDataset,
    options: *const FvddpOptions,
    out: *mut *mut FvddpState,
) -> FvddpStatus {
    guard(|| {
        if dataset.is_null() || options.is_null() || out.is_null() {
            return bad_argument("null pointer");
        }
        match filter_dataset(&(*dataset).0, &to_options(&*options)) {
            Ok(s) => {
                *out = Box::into_raw(Box::new(FvddpState(s)));
                FvddpStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Smoothing distribution at time `t`.
///
/// # Safety
/// `dataset` and `options` must be live pointers and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fvddp_smooth(
    dataset: *const FvddpDataset,
    t: f64,
    options: *const FvddpOptions,
    out: *mut *mut FvddpState,
) -> FvddpStatus {
    guard(|| {
        if dataset.is_null() || options.is_null() || out.is_null() {
            return bad_argument("null pointer");
        }
        match smooth_dataset(&(*dataset).0, t, &to_options(&*options)) {
            Ok(s) => {
                *out = Box::into_raw(Box::new(FvddpState(s)));
                FvddpStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Predictive probabilities of the next observation. Writes one value per
/// registered type (in registry order) into `per_type`, which must hold
/// `capacity >= fvddp_state_types(state)` values, and the new-type
/// probability into `new_type`.
///
/// # Safety
/// `per_type` must point to `capacity` writable doubles (may be NULL when the
/// state has no types); `state` and `new_type` must be valid.
#[no_mangle]
pub unsafe extern "C" fn fvddp_predict(
    state: *const FvddpState,
    per_type: *mut f64,
    capacity: usize,
    new_type: *mut f64,
) -> FvddpStatus {
    guard(|| {
        if state.is_null() || new_type.is_null() {
            return bad_argument("null pointer");
        }
        let p = predictive(&(*state).0);
        if p.per_type.len() > capacity || (per_type.is_null() && !p.per_type.is_empty()) {
            return bad_argument("per_type buffer too small");
        }
        if !p.per_type.is_empty() {
            std::slice::from_raw_parts_mut(per_type, p.per_type.len()).copy_from_slice(&p.per_type);
        }
        *new_type = p.new_type;
        FvddpStatus::Ok
    })
}
