use std::ffi::{CStr, CString};
use std::ptr;

use ttsa_ffi::*;

fn last_error() -> String {
    let p = ttsa_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn quadratic(regime: u32) -> *mut TtsaQuadratic {
    let mut h = ptr::null_mut();
    let st = unsafe { ttsa_quadratic_new(regime, 4, 3, 5.0, 0.0, 9, &mut h) };
    assert_eq!(st, TtsaStatus::Ok);
    assert!(!h.is_null());
    h
}

#[test]
fn quadratic_round_trip() {
    let h = quadratic(0);
    let (mut d1, mut d2) = (0usize, 0usize);
    assert_eq!(unsafe { ttsa_quadratic_dims(h, &mut d1, &mut d2) }, TtsaStatus::Ok);
    assert_eq!((d1, d2), (4, 3));
    assert!(ttsa_last_error_message().is_null());

    let x = [0.1, -0.2, 0.3, 0.0];
    let mut g = [0.0; 4];
    assert_eq!(unsafe { ttsa_quadratic_grad_ell(h, x.as_ptr(), g.as_mut_ptr(), 4) }, TtsaStatus::Ok);
    // central differences of ell
    for i in 0..4 {
        let eps = 1e-6;
        let (mut xp, mut xm) = (x, x);
        xp[i] += eps;
        xm[i] -= eps;
        let (mut fp, mut fm) = (0.0, 0.0);
        unsafe {
            assert_eq!(ttsa_quadratic_ell(h, xp.as_ptr(), 4, &mut fp), TtsaStatus::Ok);
            assert_eq!(ttsa_quadratic_ell(h, xm.as_ptr(), 4, &mut fm), TtsaStatus::Ok);
        }
        let fd = (fp - fm) / (2.0 * eps);
        assert!((fd - g[i]).abs() <= 1e-5 * g[i].abs().max(1.0), "{i}: {fd} vs {}", g[i]);
    }
    unsafe { ttsa_quadratic_free(h) };
}

#[test]
fn noiseless_single_term_hypergradient_is_deterministic() {
    let h = quadratic(0);
    let (x, y) = ([0.5; 4], [0.1; 3]);
    let (mut a, mut b) = ([0.0; 4], [0.0; 4]);
    unsafe {
        assert_eq!(ttsa_quadratic_hypergradient(h, x.as_ptr(), 4, y.as_ptr(), 3, 1, 0.1, 1, a.as_mut_ptr()), TtsaStatus::Ok);
        assert_eq!(ttsa_quadratic_hypergradient(h, x.as_ptr(), 4, y.as_ptr(), 3, 1, 0.1, 2, b.as_mut_ptr()), TtsaStatus::Ok);
        ttsa_quadratic_free(h);
    }
    assert_eq!(a, b);
}

#[test]
fn run_reduces_distance_and_is_reproducible() {
    let h = quadratic(0);
    let x0 = [2.0; 4];
    let mut out = Vec::new();
    for _ in 0..2 {
        let (mut x, mut y, mut dx) = ([0.0; 4], [0.0; 3], 0.0);
        let st = unsafe { ttsa_quadratic_run(h, 2000, 3, x0.as_ptr(), x.as_mut_ptr(), 4, y.as_mut_ptr(), 3, &mut dx) };
        assert_eq!(st, TtsaStatus::Ok, "{}", last_error());
        out.push((x, y, dx));
    }
    assert_eq!(out[0], out[1]);
    assert!(out[0].2 < 16.0);
    unsafe { ttsa_quadratic_free(h) };
}

#[test]
fn errors_are_reported_not_panicked() {
    let mut h = ptr::null_mut();
    let st = unsafe { ttsa_quadratic_new(7, 4, 3, 5.0, 0.0, 0, &mut h) };
    assert_eq!(st, TtsaStatus::InvalidArgument);
    assert!(last_error().contains("regime"));
    assert!(h.is_null());

    let q = quadratic(1);
    let mut v = 0.0;
    let x = [0.0; 2];
    assert_eq!(unsafe { ttsa_quadratic_ell(q, x.as_ptr(), 2, &mut v) }, TtsaStatus::DimensionMismatch);
    assert_eq!(unsafe { ttsa_quadratic_ell(ptr::null(), x.as_ptr(), 2, &mut v) }, TtsaStatus::NullPointer);
    assert_eq!(unsafe { ttsa_quadratic_dims(q, ptr::null_mut(), ptr::null_mut()) }, TtsaStatus::NullPointer);
    unsafe {
        ttsa_quadratic_free(q);
        ttsa_quadratic_free(ptr::null_mut());
    }

    let bad = CString::new("{\"regime\": \"sc\"}").unwrap();
    assert_eq!(unsafe { ttsa_quadratic_from_json(bad.as_ptr(), &mut h) }, TtsaStatus::Config);
}

#[test]
fn json_spec_matches_positional_constructor() {
    let json = CString::new(
        r#"{"regime":"sc","d1":4,"d2":3,"condition_number":5.0,"seed":9}"#,
    )
    .unwrap();
    let mut a = ptr::null_mut();
    assert_eq!(unsafe { ttsa_quadratic_from_json(json.as_ptr(), &mut a) }, TtsaStatus::Ok);
    let b = quadratic(0);
    let x = [0.3, 0.1, -0.4, 0.2];
    let (mut fa, mut fb) = (0.0, 0.0);
    unsafe {
        ttsa_quadratic_ell(a, x.as_ptr(), 4, &mut fa);
        ttsa_quadratic_ell(b, x.as_ptr(), 4, &mut fb);
        ttsa_quadratic_free(a);
        ttsa_quadratic_free(b);
    }
    assert_eq!(fa, fb);
}

#[test]
fn mdp_value_and_identity() {
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { ttsa_mdp_random(5, 3, 0.9, 1, &mut m) }, TtsaStatus::Ok);
    let (mut s, mut a) = (0usize, 0usize);
    assert_eq!(unsafe { ttsa_mdp_shape(m, &mut s, &mut a) }, TtsaStatus::Ok);
    assert_eq!((s, a), (5, 3));
    let pi = [1.0 / 3.0; 15];
    let mut v = [0.0; 5];
    assert_eq!(unsafe { ttsa_mdp_value(m, pi.as_ptr(), 15, v.as_mut_ptr(), 5) }, TtsaStatus::Ok);
    // rewards lie in [0, 1]
    assert!(v.iter().all(|x| (0.0..=10.0).contains(x)));
    let mut r = 1.0;
    assert_eq!(unsafe { ttsa_mdp_pdl_residual(m, pi.as_ptr(), 15, &mut r) }, TtsaStatus::Ok);
    assert!(r <= 1e-8);
    let bad = [0.5; 15];
    assert_eq!(unsafe { ttsa_mdp_value(m, bad.as_ptr(), 15, v.as_mut_ptr(), 5) }, TtsaStatus::InvalidArgument);
    let (mut o0, mut of) = (0.0, 0.0);
    let st = unsafe { ttsa_mdp_run_nac(m, 4096, 2, 1.0, 64.0, 1.0, &mut o0, &mut of) };
    assert_eq!(st, TtsaStatus::Ok);
    assert!(of < o0);
    unsafe { ttsa_mdp_free(m) };
}

#[test]
fn mdp_json_round_trip() {
    let json = CString::new(
        r#"{"n_states":1,"n_actions":2,"P":[[[1.0],[1.0]]],"r":[[1.0,0.0]],"gamma":0.5,"rho0":[1.0]}"#,
    )
    .unwrap();
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { ttsa_mdp_from_json(json.as_ptr(), &mut m) }, TtsaStatus::Ok, "{}", last_error());
    let pi = [1.0, 0.0];
    let mut v = [0.0];
    assert_eq!(unsafe { ttsa_mdp_value(m, pi.as_ptr(), 2, v.as_mut_ptr(), 1) }, TtsaStatus::Ok);
    // V = 1 / (1 - gamma)
    assert!((v[0] - 2.0).abs() < 1e-12);
    unsafe { ttsa_mdp_free(m) };
}

#[test]
fn config_runs_through_the_abi() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!(
        "k_max = 50\n[problem]\nkind = \"quadratic\"\nregime = \"sc\"\nd1 = 2\nd2 = 2\ncondition_number = 2.0\n\
         [algorithm]\nkind = \"ttsa\"\n[output]\ndir = {:?}\n",
        dir.path().display().to_string()
    );
    let c = CString::new(text).unwrap();
    let mut pass = -1;
    assert_eq!(unsafe { ttsa_run_config(c.as_ptr(), 1, &mut pass) }, TtsaStatus::Ok, "{}", last_error());
    assert_eq!(pass, 1);
    assert!(dir.path().join("run_summary.json").exists());
    let bad = CString::new("k_max = 0").unwrap();
    assert_eq!(unsafe { ttsa_run_config(bad.as_ptr(), 1, ptr::null_mut()) }, TtsaStatus::Config);
}

#[test]
fn version_is_static() {
    let v = unsafe { CStr::from_ptr(ttsa_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_every_export() {
    let root = env!("CARGO_MANIFEST_DIR");
    let header = std::fs::read_to_string(format!("{root}/include/ttsa.h")).unwrap();
    let src = std::fs::read_to_string(format!("{root}/src/lib.rs")).unwrap();
    let names: Vec<&str> = src
        .lines()
        .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
        .map(|rest| rest.split('(').next().unwrap())
        .collect();
    assert!(names.len() >= 15);
    for n in names {
        assert!(header.contains(&format!("{n}(")), "{n} missing from header");
    }
    assert!(header.contains("TTSA_STATUS_OK = 0"));
}
