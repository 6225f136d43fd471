//! C ABI for the expert-bounds toolkit.
//!
//! Summaries are opaque handles created by `eb_summary_new` /
//! `eb_summary_with_joint` and released by `eb_summary_free`. Every
//! computation returns an [`EbStatus`] code; on failure a thread-local
//! message is readable through `eb_last_error_message` until the next
//! failing call on the same thread. Strings returned by the library are
//! released with `eb_string_free`.
//!
//! The C header is generated into `include/expert_bounds.h` at build time.

use std::cell::RefCell;
use std::ffi::{c_char, CString};

use expert_bounds::bounds::{BindingTerm, BoundBranch, PhiUMode, ResolvedPhiUMode};
use expert_bounds::envelope::json_17;
use expert_bounds::refine::lp_refined_bound;
use expert_bounds::sim::population_to_json;
use expert_bounds::{
    construct_sharp_population, gain, harm_bounds, proportion_bound, trust_threshold,
    validate_setting, Error, JointLaw, StudySummary,
};

/// Status codes returned by every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EbStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    ValidationFailed = 3,
    DomainError = 4,
    Infeasible = 5,
    PreconditionFailed = 6,
    SolverFailure = 7,
    InternalError = 8,
}

/// Which candidate terms enter the harm upper bound.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EbPhiUMode {
    Auto = 0,
    WithJoint = 1,
    MarginalsOnly = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EbBoundBranch {
    DeltaZero = 0,
    Interior = 1,
    AbovePhiU = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EbBindingTerm {
    RatioTerm = 0,
    TreatmentShareTerm = 1,
    ClampZero = 2,
    NotApplicable = 3,
}

/// Proportion-bound result.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct EbBoundReport {
    /// Upper bound on the proportion of physicians beating treat-all by
    /// delta_star.
    pub value: f64,
    pub branch: EbBoundBranch,
    pub binding_term: EbBindingTerm,
    pub phi_u_used: f64,
    /// True when the joint-law terms entered phi_u.
    pub used_joint: bool,
}

/// Two-type trust-model result.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct EbTrustReport {
    pub pi_used: f64,
    pub v_bad: f64,
    pub threshold: f64,
    pub trust_always: bool,
}

/// Opaque study summary handle.
pub struct EbSummary {
    inner: StudySummary,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").expect("empty cstring"));
}

fn set_last_error(message: &str) {
    let sanitized = message.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn status_from(err: &Error) -> EbStatus {
    match err {
        Error::InvalidInput(_) => EbStatus::InvalidInput,
        Error::Validation(_) => EbStatus::ValidationFailed,
        Error::Domain(_) => EbStatus::DomainError,
        Error::Infeasible(_) => EbStatus::Infeasible,
        Error::Precondition(_) => EbStatus::PreconditionFailed,
        Error::Solver(_) => EbStatus::SolverFailure,
        _ => EbStatus::InternalError,
    }
}

fn fail(err: &Error) -> EbStatus {
    set_last_error(&err.to_string());
    status_from(err)
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn eb_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message of the last failing call on this thread. Valid until the next
/// failing call; never NULL.
#[no_mangle]
pub extern "C" fn eb_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Create a summary from the four marginals. On success writes a handle to
/// `out` that must be released with `eb_summary_free`.
///
/// # Safety
/// `out` must be a valid pointer to writable memory for one pointer.
#[no_mangle]
pub unsafe extern "C" fn eb_summary_new(
    v_t: f64,
    v_c: f64,
    v_u: f64,
    p: f64,
    out: *mut *mut EbSummary,
) -> EbStatus {
    if out.is_null() {
        set_last_error("out pointer is NULL");
        return EbStatus::NullPointer;
    }
    match StudySummary::new(v_t, v_c, v_u, p) {
        Ok(inner) => {
            *out = Box::into_raw(Box::new(EbSummary { inner }));
            EbStatus::Ok
        }
        Err(e) => fail(&e),
    }
}

/// Create a summary carrying the usual-care joint law `P(A=a, Y=y)`.
///
/// # Safety
/// `out` must be a valid pointer to writable memory for one pointer.
#[no_mangle]
pub unsafe extern "C" fn eb_summary_with_joint(
    v_t: f64,
    v_c: f64,
    v_u: f64,
    p: f64,
    p_a1y1: f64,
    p_a1y0: f64,
    p_a0y1: f64,
    p_a0y0: f64,
    out: *mut *mut EbSummary,
) -> EbStatus {
    if out.is_null() {
        set_last_error("out pointer is NULL");
        return EbStatus::NullPointer;
    }
    let joint = JointLaw {
        a1y1: p_a1y1,
        a1y0: p_a1y0,
        a0y1: p_a0y1,
        a0y0: p_a0y0,
    };
    match StudySummary::with_joint(v_t, v_c, v_u, p, joint) {
        Ok(inner) => {
            *out = Box::into_raw(Box::new(EbSummary { inner }));
            EbStatus::Ok
        }
        Err(e) => fail(&e),
    }
}

/// Release a summary handle. NULL is a no-op.
///
/// # Safety
/// `summary` must be NULL or a pointer returned by a summary constructor
/// that has not been freed yet.
#[no_mangle]
pub unsafe extern "C" fn eb_summary_free(summary: *mut EbSummary) {
    if !summary.is_null() {
        drop(Box::from_raw(summary));
    }
}

unsafe fn summary_ref<'a>(summary: *const EbSummary) -> Option<&'a StudySummary> {
    summary.as_ref().map(|s| &s.inner)
}

/// Run the precondition checks. `Ok` when no hard check fails;
/// `ValidationFailed` otherwise. `out_has_warnings` (optional) is set when
/// any check warns.
///
/// # Safety
/// `summary` must be a live handle; `out_has_warnings` NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn eb_validate(
    summary: *const EbSummary,
    out_has_warnings: *mut bool,
) -> EbStatus {
    let Some(s) = summary_ref(summary) else {
        set_last_error("summary handle is NULL");
        return EbStatus::NullPointer;
    };
    match validate_setting(s) {
        Ok(report) => {
            if !out_has_warnings.is_null() {
                *out_has_warnings = report.has_warn();
            }
            if report.has_fail() {
                set_last_error(&format!("validation failed: {}", report.summary_line()));
                EbStatus::ValidationFailed
            } else {
                EbStatus::Ok
            }
        }
        Err(e) => fail(&e),
    }
}

/// Bounds on the proportion counterfactually harmed by treatment.
///
/// # Safety
/// `summary` must be a live handle; `out_phi_l` and `out_phi_u` writable.
#[no_mangle]
pub unsafe extern "C" fn eb_harm_bounds(
    summary: *const EbSummary,
    out_phi_l: *mut f64,
    out_phi_u: *mut f64,
) -> EbStatus {
    let Some(s) = summary_ref(summary) else {
        set_last_error("summary handle is NULL");
        return EbStatus::NullPointer;
    };
    if out_phi_l.is_null() || out_phi_u.is_null() {
        set_last_error("output pointer is NULL");
        return EbStatus::NullPointer;
    }
    let hb = harm_bounds(s);
    *out_phi_l = hb.phi_l;
    *out_phi_u = hb.phi_u;
    EbStatus::Ok
}

/// Informativeness gain `v_u - (p*v_t + (1-p)*v_c)`.
///
/// # Safety
/// `summary` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn eb_gain(summary: *const EbSummary, out: *mut f64) -> EbStatus {
    let Some(s) = summary_ref(summary) else {
        set_last_error("summary handle is NULL");
        return EbStatus::NullPointer;
    };
    if out.is_null() {
        set_last_error("output pointer is NULL");
        return EbStatus::NullPointer;
    }
    *out = gain(s);
    EbStatus::Ok
}

fn convert_mode(mode: EbPhiUMode) -> PhiUMode {
    match mode {
        EbPhiUMode::Auto => PhiUMode::Auto,
        EbPhiUMode::WithJoint => PhiUMode::WithJoint,
        EbPhiUMode::MarginalsOnly => PhiUMode::MarginalsOnly,
    }
}

/// Sharp upper bound on the proportion of physicians beating treat-all by
/// `delta_star`.
///
/// # Safety
/// `summary` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn eb_proportion_bound(
    summary: *const EbSummary,
    delta_star: f64,
    mode: EbPhiUMode,
    out: *mut EbBoundReport,
) -> EbStatus {
    let Some(s) = summary_ref(summary) else {
        set_last_error("summary handle is NULL");
        return EbStatus::NullPointer;
    };
    if out.is_null() {
        set_last_error("output pointer is NULL");
        return EbStatus::NullPointer;
    }
    match proportion_bound(s, delta_star, convert_mode(mode)) {
        Ok(report) => {
            *out = EbBoundReport {
                value: report.value,
                branch: match report.branch {
                    BoundBranch::DeltaZero => EbBoundBranch::DeltaZero,
                    BoundBranch::Interior => EbBoundBranch::Interior,
                    BoundBranch::AbovePhiU => EbBoundBranch::AbovePhiU,
                },
                binding_term: match report.binding_term {
                    BindingTerm::RatioTerm => EbBindingTerm::RatioTerm,
                    BindingTerm::TreatmentShareTerm => EbBindingTerm::TreatmentShareTerm,
                    BindingTerm::ClampZero => EbBindingTerm::ClampZero,
                    BindingTerm::NotApplicable => EbBindingTerm::NotApplicable,
                },
                phi_u_used: report.phi_u_used,
                used_joint: report.phi_u_mode == ResolvedPhiUMode::WithJoint,
            };
            EbStatus::Ok
        }
        Err(e) => fail(&e),
    }
}

/// Two-type trust model: bad-doctor effect and rational-trust threshold.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn eb_trust_threshold(
    v_t: f64,
    v_u: f64,
    delta_star: f64,
    pi: f64,
    out: *mut EbTrustReport,
) -> EbStatus {
    if out.is_null() {
        set_last_error("output pointer is NULL");
        return EbStatus::NullPointer;
    }
    match trust_threshold(v_t, v_u, delta_star, pi) {
        Ok(report) => {
            *out = EbTrustReport {
                pi_used: report.pi_used,
                v_bad: report.v_bad,
                threshold: report.threshold,
                trust_always: report.trust_always,
            };
            EbStatus::Ok
        }
        Err(e) => fail(&e),
    }
}

/// Build the bound-attaining population and return it as a JSON string
/// (`{"q": .., "doctors": ..}` with 17-significant-digit numbers). The
/// string is released with `eb_string_free`.
///
/// # Safety
/// `summary` must be a live handle; `out_json` writable.
#[no_mangle]
pub unsafe extern "C" fn eb_construct_sharp_json(
    summary: *const EbSummary,
    delta_star: f64,
    out_json: *mut *mut c_char,
) -> EbStatus {
    let Some(s) = summary_ref(summary) else {
        set_last_error("summary handle is NULL");
        return EbStatus::NullPointer;
    };
    if out_json.is_null() {
        set_last_error("output pointer is NULL");
        return EbStatus::NullPointer;
    }
    match construct_sharp_population(s, delta_star) {
        Ok(construction) => {
            let json = population_to_json(&construction.population);
            match CString::new(json) {
                Ok(cstr) => {
                    *out_json = cstr.into_raw();
                    EbStatus::Ok
                }
                Err(_) => {
                    set_last_error("population JSON contained a NUL byte");
                    EbStatus::InternalError
                }
            }
        }
        Err(e) => fail(&e),
    }
}

/// Full attainment report for a construction, as an envelope-style JSON
/// string (released with `eb_string_free`).
///
/// # Safety
/// `summary` must be a live handle; `out_json` writable.
#[no_mangle]
pub unsafe extern "C" fn eb_verify_sharp_json(
    summary: *const EbSummary,
    delta_star: f64,
    out_json: *mut *mut c_char,
) -> EbStatus {
    let Some(s) = summary_ref(summary) else {
        set_last_error("summary handle is NULL");
        return EbStatus::NullPointer;
    };
    if out_json.is_null() {
        set_last_error("output pointer is NULL");
        return EbStatus::NullPointer;
    }
    match construct_sharp_population(s, delta_star) {
        Ok(construction) => {
            let report = expert_bounds::verify_attainment(&construction, s, delta_star);
            match CString::new(json_17(&report)) {
                Ok(cstr) => {
                    *out_json = cstr.into_raw();
                    EbStatus::Ok
                }
                Err(_) => {
                    set_last_error("report JSON contained a NUL byte");
                    EbStatus::InternalError
                }
            }
        }
        Err(e) => fail(&e),
    }
}

/// LP refinement of the proportion bound over the harm-mass sweep.
/// Requires a summary constructed with a joint law.
///
/// # Safety
/// `summary` must be a live handle; `out_value` writable.
#[no_mangle]
pub unsafe extern "C" fn eb_lp_refined_bound(
    summary: *const EbSummary,
    delta_star: f64,
    grid_m: usize,
    q_h_steps: usize,
    out_value: *mut f64,
) -> EbStatus {
    let Some(s) = summary_ref(summary) else {
        set_last_error("summary handle is NULL");
        return EbStatus::NullPointer;
    };
    if out_value.is_null() {
        set_last_error("output pointer is NULL");
        return EbStatus::NullPointer;
    }
    match lp_refined_bound(s, delta_star, grid_m, q_h_steps) {
        Ok(result) => {
            *out_value = result.value;
            EbStatus::Ok
        }
        Err(e) => fail(&e),
    }
}

/// Release a string returned by this library. NULL is a no-op.
///
/// # Safety
/// `s` must be NULL or a pointer returned by this library that has not been
/// freed yet.
#[no_mangle]
pub unsafe extern "C" fn eb_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ffi::CStr;
    use std::ptr;

    unsafe fn make_summary(v_t: f64, v_c: f64, v_u: f64, p: f64) -> *mut EbSummary {
        let mut handle: *mut EbSummary = ptr::null_mut();
        let status = eb_summary_new(v_t, v_c, v_u, p, &mut handle);
        assert_eq!(status, EbStatus::Ok);
        assert!(!handle.is_null());
        handle
    }

    #[test]
    fn version_is_nul_terminated() {
        let v = unsafe { CStr::from_ptr(eb_version()) };
        assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
    }

    #[test]
    fn bound_through_the_abi() {
        unsafe {
            let s = make_summary(0.55, 0.30, 0.35, 0.10);
            let mut report = EbBoundReport {
                value: f64::NAN,
                branch: EbBoundBranch::DeltaZero,
                binding_term: EbBindingTerm::NotApplicable,
                phi_u_used: f64::NAN,
                used_joint: true,
            };
            let status = eb_proportion_bound(s, 0.05, EbPhiUMode::Auto, &mut report);
            assert_eq!(status, EbStatus::Ok);
            assert!((report.value - 1.0 / 6.0).abs() < 1e-12);
            assert_eq!(report.branch, EbBoundBranch::Interior);
            assert_eq!(report.binding_term, EbBindingTerm::RatioTerm);
            assert!(!report.used_joint);
            eb_summary_free(s);
        }
    }

    #[test]
    fn validation_failure_reports_message() {
        unsafe {
            let s = make_summary(0.5, 0.5, 0.5, 0.5);
            let mut warn = false;
            let status = eb_validate(s, &mut warn);
            assert_eq!(status, EbStatus::ValidationFailed);
            let msg = CStr::from_ptr(eb_last_error_message());
            assert!(msg.to_str().unwrap().contains("ordering"));
            eb_summary_free(s);
        }
    }

    #[test]
    fn harm_and_gain_outputs() {
        unsafe {
            let s = make_summary(0.6, 0.3, 0.25, 0.5);
            let (mut lo, mut hi, mut g) = (0.0f64, 0.0f64, 0.0f64);
            assert_eq!(eb_harm_bounds(s, &mut lo, &mut hi), EbStatus::Ok);
            assert!((lo - 0.05).abs() < 1e-15);
            assert!((hi - 0.3).abs() < 1e-15);
            assert_eq!(eb_gain(s, &mut g), EbStatus::Ok);
            assert!((g - (0.25 - 0.45)).abs() < 1e-12);
            eb_summary_free(s);
        }
    }

    #[test]
    fn trust_report_through_the_abi() {
        unsafe {
            let mut report = EbTrustReport {
                pi_used: 0.0,
                v_bad: 0.0,
                threshold: 0.0,
                trust_always: false,
            };
            let status = eb_trust_threshold(0.5, 0.3, 0.05, 1.0 / 6.0, &mut report);
            assert_eq!(status, EbStatus::Ok);
            assert!((report.v_bad + 0.25).abs() < 1e-12);
            assert!((report.threshold - 0.25 / 0.30).abs() < 1e-12);
            assert!(!report.trust_always);
            // domain error path
            let status = eb_trust_threshold(0.5, 0.3, -1.0, 0.2, &mut report);
            assert_eq!(status, EbStatus::DomainError);
        }
    }

    #[test]
    fn construction_json_round_trips() {
        unsafe {
            let s = make_summary(0.55, 0.30, 0.35, 0.40);
            let mut json: *mut c_char = ptr::null_mut();
            let status = eb_construct_sharp_json(s, 0.05, &mut json);
            assert_eq!(status, EbStatus::Ok);
            let text = CStr::from_ptr(json).to_str().unwrap().to_string();
            let pop = expert_bounds::sim::population_from_json(&text).unwrap();
            assert_eq!(pop.doctors.len(), 2);
            eb_string_free(json);
            eb_summary_free(s);
        }
    }

    #[test]
    fn lp_bound_requires_joint() {
        unsafe {
            let s = make_summary(0.6, 0.3, 0.5, 0.5);
            let mut value = 0.0f64;
            let status = eb_lp_refined_bound(s, 0.05, 5, 5, &mut value);
            assert_eq!(status, EbStatus::PreconditionFailed);
            eb_summary_free(s);

            let mut handle: *mut EbSummary = ptr::null_mut();
            let status = eb_summary_with_joint(
                0.6, 0.3, 0.5, 0.5, 0.35, 0.15, 0.15, 0.35, &mut handle,
            );
            assert_eq!(status, EbStatus::Ok);
            let status = eb_lp_refined_bound(handle, 0.05, 11, 11, &mut value);
            assert_eq!(status, EbStatus::Ok);
            assert!(value > 0.0 && value <= 0.2 / 0.35 + 1e-9);
            eb_summary_free(handle);
        }
    }

    #[test]
    fn null_pointers_are_rejected() {
        unsafe {
            let mut value = 0.0f64;
            assert_eq!(
                eb_gain(ptr::null(), &mut value),
                EbStatus::NullPointer
            );
            let s = make_summary(0.55, 0.30, 0.35, 0.40);
            assert_eq!(eb_gain(s, ptr::null_mut()), EbStatus::NullPointer);
            eb_summary_free(s);
            eb_summary_free(ptr::null_mut());
            eb_string_free(ptr::null_mut());
        }
    }
}
