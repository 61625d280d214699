use std::ffi::{c_char, CStr, CString};
use std::process::Command;
use std::ptr;

use fvsa_ffi::*;

fn handle(id: &str) -> *mut FvsaProblem {
    let id = CString::new(id).unwrap();
    let mut p = ptr::null_mut();
    assert_eq!(unsafe { fvsa_problem_new(id.as_ptr(), &mut p) }, FvsaStatus::Ok);
    assert!(!p.is_null());
    p
}

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 512];
    unsafe {
        fvsa_last_error(buf.as_mut_ptr(), buf.len());
        CStr::from_ptr(buf.as_ptr()).to_string_lossy().into_owned()
    }
}

#[test]
fn coarse_tie_beam_round_trip() {
    let p = handle("tie_beam_coarse");
    let n = unsafe { fvsa_problem_n_elements(p) };
    assert_eq!(n, 100);
    let mut x = vec![0u8; n];
    assert_eq!(unsafe { fvsa_initial_topology(p, x.as_mut_ptr(), n) }, FvsaStatus::Ok);
    assert!(x.iter().all(|&b| b == 1));

    let mut c = 0.0;
    assert_eq!(unsafe { fvsa_compliance(p, x.as_ptr(), n, &mut c) }, FvsaStatus::Ok);
    assert!((c - 194.38).abs() < 0.01, "{c}");

    let exact = CString::new("woodbury").unwrap();
    let foci = CString::new("foci").unwrap();
    let (mut a, mut b) = (vec![0.0; n], vec![0.0; n]);
    assert_eq!(unsafe { fvsa_sensitivity(p, x.as_ptr(), exact.as_ptr(), a.as_mut_ptr(), n) }, FvsaStatus::Ok);
    assert_eq!(unsafe { fvsa_sensitivity(p, x.as_ptr(), foci.as_ptr(), b.as_mut_ptr(), n) }, FvsaStatus::Ok);
    // removing a solid raises compliance, and the exact change is at least the first-order one
    for (ea, fa) in a.iter().zip(&b) {
        assert!(*fa < 0.0 && *ea <= *fa * (1.0 - 1e-9), "{ea} {fa}");
    }

    let mut norms = vec![0.0; n];
    assert_eq!(unsafe { fvsa_norm_map(p, x.as_ptr(), norms.as_mut_ptr(), n) }, FvsaStatus::Ok);
    let mean = norms.iter().sum::<f64>() / n as f64;
    assert!((mean - 0.8317).abs() < 1e-3, "{mean}");
    unsafe { fvsa_problem_free(p) };
}

#[test]
fn optimize_keeps_volume() {
    let p = handle("cantilever_32x20");
    let n = unsafe { fvsa_problem_n_elements(p) };
    let mut x0 = vec![0u8; n];
    unsafe { fvsa_initial_topology(p, x0.as_mut_ptr(), n) };
    let cfg = CString::new("method = woodbury\nv_f_target = 0.5\nmax_iterations = 20\n").unwrap();
    let mut best = vec![0u8; n];
    let mut c = 0.0;
    let st = unsafe { fvsa_optimize(p, cfg.as_ptr(), x0.as_ptr(), best.as_mut_ptr(), n, &mut c) };
    assert_eq!(st, FvsaStatus::Ok, "{}", last_error());
    assert_eq!(best.iter().filter(|&&b| b == 1).count(), 320);
    assert!(c.is_finite() && c > 0.0);
    unsafe { fvsa_problem_free(p) };
}

#[test]
fn errors_are_coded() {
    let p = handle("appendix_b_4x4(1)");
    let x = [1u8; 16];
    let mut c = 0.0;
    assert_eq!(unsafe { fvsa_compliance(p, x.as_ptr(), 15, &mut c) }, FvsaStatus::LengthMismatch);
    assert!(last_error().contains("15"));

    let bad = CString::new("cgm(7)").unwrap();
    let mut a = [0.0; 16];
    let st = unsafe { fvsa_sensitivity(p, x.as_ptr(), bad.as_ptr(), a.as_mut_ptr(), 16) };
    assert_eq!(st, FvsaStatus::Config);

    let cfg = CString::new("er = -1").unwrap();
    let mut best = [0u8; 16];
    let st = unsafe { fvsa_optimize(p, cfg.as_ptr(), x.as_ptr(), best.as_mut_ptr(), 16, &mut c) };
    assert_eq!(st, FvsaStatus::Config);
    assert!(last_error().contains("er"));
    unsafe { fvsa_problem_free(p) };
}

#[test]
fn header_declares_the_api_and_compiles() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/fvsa.h");
    let text = std::fs::read_to_string(header).unwrap();
    for name in [
        "fvsa_problem_new",
        "fvsa_problem_free",
        "fvsa_compliance",
        "fvsa_sensitivity",
        "fvsa_norm_map",
        "fvsa_optimize",
        "fvsa_last_error",
        "FVSA_STATUS_OK",
    ] {
        assert!(text.contains(name), "{name} missing from header");
    }
    // a C compiler is optional in the build environment
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(&src, "#include \"fvsa.h\"\nint main(void) { return fvsa_problem_n_elements(0) == 0 ? 0 : 1; }\n")
        .unwrap();
    let inc = concat!(env!("CARGO_MANIFEST_DIR"), "/include");
    match Command::new("cc").args(["-fsyntax-only", "-Wall", "-Werror", "-I", inc]).arg(&src).status() {
        Ok(s) => assert!(s.success(), "header does not compile"),
        Err(_) => eprintln!("cc not found, skipping header compile"),
    }
}
