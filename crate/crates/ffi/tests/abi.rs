use std::ffi::{CStr, CString};
use std::ptr;

use rwpf_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(rwpf_last_error_message()) }
        .to_string_lossy()
        .into_owned()
}

fn model(name: &str, theta: f64) -> *mut RwpfModel {
    let name = CString::new(name).unwrap();
    let mut m = ptr::null_mut();
    let st = unsafe { rwpf_model_new(name.as_ptr(), theta, &mut m) };
    assert_eq!(st, RwpfStatus::Ok, "{}", last_error());
    assert!(!m.is_null());
    m
}

#[test]
fn version_is_nonempty() {
    let v = unsafe { CStr::from_ptr(rwpf_version()) };
    assert!(!v.to_bytes().is_empty());
}

#[test]
fn model_lifecycle_and_queries() {
    let m = model("tanh", f64::NAN);
    let mut phi = 0.0;
    assert_eq!(unsafe { rwpf_model_phi(m, 0.3, &mut phi) }, RwpfStatus::Ok);
    assert_eq!(phi, 0.5);
    let (mut lo, mut hi) = (0.0, 0.0);
    assert_eq!(unsafe { rwpf_model_phi_bounds(m, &mut lo, &mut hi) }, RwpfStatus::Ok);
    assert_eq!((lo, hi), (0.5, 0.5));
    let mut ld = 0.0;
    assert_eq!(
        unsafe { rwpf_model_log_transition_density(m, 0.0, 0.0, 1.0, &mut ld) },
        RwpfStatus::Ok
    );
    let want = -0.5 * (2.0 * std::f64::consts::PI).ln() - 0.5;
    assert!((ld - want).abs() < 1e-12);
    unsafe { rwpf_model_free(m) };
    unsafe { rwpf_model_free(ptr::null_mut()) };
}

#[test]
fn unknown_model_reports_message() {
    let name = CString::new("cubic").unwrap();
    let mut m = ptr::null_mut();
    let st = unsafe { rwpf_model_new(name.as_ptr(), f64::NAN, &mut m) };
    assert_eq!(st, RwpfStatus::InvalidArgument);
    assert!(m.is_null());
    assert!(last_error().contains("cubic"));
}

#[test]
fn null_pointers_are_rejected() {
    let mut out = 0.0;
    assert_eq!(unsafe { rwpf_model_phi(ptr::null(), 0.0, &mut out) }, RwpfStatus::NullPointer);
    let m = model("zero", f64::NAN);
    assert_eq!(unsafe { rwpf_model_phi(m, 0.0, ptr::null_mut()) }, RwpfStatus::NullPointer);
    unsafe { rwpf_model_free(m) };
}

#[test]
fn sine_has_no_closed_form_density() {
    let m = model("sine", f64::NAN);
    let mut out = 0.0;
    let st = unsafe { rwpf_model_log_transition_density(m, 0.0, 0.0, 1.0, &mut out) };
    assert_eq!(st, RwpfStatus::Unsupported);
    unsafe { rwpf_model_free(m) };
}

#[test]
fn psi_estimate_is_deterministic_and_bounded() {
    let m = model("sine", f64::NAN);
    let (mut v1, mut v2, mut k) = (0.0, 0.0, 0u64);
    for mode in [RwpfPsiMode::Mc, RwpfPsiMode::RqmcTimes, RwpfPsiMode::RqmcTimesValues] {
        let st = unsafe { rwpf_psi_estimate(m, 0.0, 0.0, 0.0, 1.0, mode, 16, 9, 3, &mut v1, &mut k) };
        assert_eq!(st, RwpfStatus::Ok, "{}", last_error());
        let st = unsafe {
            rwpf_psi_estimate(m, 0.0, 0.0, 0.0, 1.0, mode, 16, 9, 3, &mut v2, ptr::null_mut())
        };
        assert_eq!(st, RwpfStatus::Ok);
        assert_eq!(v1.to_bits(), v2.to_bits());
        assert!(v1 >= 0.0 && v1 <= 0.5f64.exp() + 1e-12);
    }
    let st = unsafe {
        rwpf_psi_estimate(m, 0.0, 0.0, 1.0, 0.0, RwpfPsiMode::Mc, 1, 0, 0, &mut v1, &mut k)
    };
    assert_eq!(st, RwpfStatus::InvalidArgument);
    unsafe { rwpf_model_free(m) };
}

#[test]
fn sobol_points_fill_buffer() {
    let mut buf = [0.0; 8];
    let st = unsafe { rwpf_sobol_points(2, 4, RwpfRandomization::None, 0, buf.as_mut_ptr(), 8) };
    assert_eq!(st, RwpfStatus::Ok);
    assert_eq!(buf, [0.0, 0.0, 0.5, 0.5, 0.25, 0.75, 0.75, 0.25]);
    let st = unsafe { rwpf_sobol_points(2, 4, RwpfRandomization::None, 0, buf.as_mut_ptr(), 7) };
    assert_eq!(st, RwpfStatus::BufferTooSmall);
    let st = unsafe {
        rwpf_sobol_points(65, 1, RwpfRandomization::None, 0, buf.as_mut_ptr(), 100)
    };
    assert_eq!(st, RwpfStatus::InvalidArgument);
    let st = unsafe {
        rwpf_sobol_points(2, 4, RwpfRandomization::OwenScramble, 7, buf.as_mut_ptr(), 8)
    };
    assert_eq!(st, RwpfStatus::Ok);
    assert!(buf.iter().all(|&u| (0.0..1.0).contains(&u)));
}

#[test]
fn filter_and_kalman_agree_roughly_for_zero_drift() {
    let m = model("zero", f64::NAN);
    let times = [1.0, 2.0, 3.0];
    let values = [0.4, -0.3, 1.1];
    let mut kal = 0.0;
    let st = unsafe { rwpf_kalman_loglik(0.0, times.as_ptr(), values.as_ptr(), 3, 1.0, &mut kal) };
    assert_eq!(st, RwpfStatus::Ok);
    let mut ll = 0.0;
    let st = unsafe {
        rwpf_filter_loglik(
            m,
            times.as_ptr(),
            values.as_ptr(),
            3,
            4096,
            0.0,
            1.0,
            RwpfPsiMode::Mc,
            1,
            11,
            &mut ll,
        )
    };
    assert_eq!(st, RwpfStatus::Ok, "{}", last_error());
    assert!((ll - kal).abs() < 0.1, "{ll} vs {kal}");
    let st = unsafe {
        rwpf_filter_loglik(
            m,
            times.as_ptr(),
            values.as_ptr(),
            3,
            0,
            0.0,
            1.0,
            RwpfPsiMode::Mc,
            1,
            11,
            &mut ll,
        )
    };
    assert_eq!(st, RwpfStatus::InvalidArgument);
    unsafe { rwpf_model_free(m) };
}
