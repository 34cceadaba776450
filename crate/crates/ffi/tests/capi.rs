use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use trontide_ffi::*;

const CONFIG: &str = r#"{
    "seed": 5,
    "net": {"leak_alpha": 0.0, "n": 3},
    "dist": {"kind": "gaussian", "sigma": 1.0, "n": 3},
    "beta": {"kind": "const", "value": 0.1},
    "w_star": {"random_sphere": {"radius": 1.0}},
    "attack": {"theta": {"frac_of_theta_star": 0.5}},
    "train": {"batch": 4, "mc_samples": 5000},
    "trials": {"R": 4, "eps": 0.2, "delta": 0.2}
}"#;

fn last_error() -> String {
    let p = trontide_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn take_string(p: *mut std::ffi::c_char) -> String {
    assert!(!p.is_null());
    let s = unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_owned();
    unsafe { trontide_string_free(p) };
    s
}

fn new_experiment(json: &str, seed: Option<u64>) -> (TrontideStatus, *mut TrontideExperiment) {
    let c = CString::new(json).unwrap();
    let mut exp = ptr::null_mut();
    let seed_ptr = seed.as_ref().map_or(ptr::null(), |s| s as *const u64);
    let st = unsafe { trontide_experiment_new_from_json(c.as_ptr(), seed_ptr, &mut exp) };
    (st, exp)
}

#[test]
fn experiment_lifecycle() {
    let (st, exp) = new_experiment(CONFIG, None);
    assert_eq!(st, TrontideStatus::Ok);
    assert!(trontide_last_error_message().is_null());

    let mut out = ptr::null_mut();
    assert_eq!(unsafe { trontide_experiment_theory_json(exp, &mut out) }, TrontideStatus::Ok);
    let theory: serde_json::Value = serde_json::from_str(&take_string(out)).unwrap();
    assert_eq!(theory["feasible"], true);

    assert_eq!(unsafe { trontide_experiment_run_trials(exp, 3, &mut out) }, TrontideStatus::Ok);
    let summary: serde_json::Value = serde_json::from_str(&take_string(out)).unwrap();
    assert_eq!(summary["R"], 3);

    assert_eq!(unsafe { trontide_experiment_train_csv(exp, &mut out) }, TrontideStatus::Ok);
    assert!(take_string(out).starts_with("t,dist_sq,grad_norm\n1,"));

    unsafe { trontide_experiment_free(exp) };
}

#[test]
fn results_match_the_library() {
    let (_, exp) = new_experiment(CONFIG, Some(99));
    let mut out = ptr::null_mut();
    unsafe { trontide_experiment_run_trials(exp, 0, &mut out) };
    let via_ffi = take_string(out);
    unsafe { trontide_experiment_free(exp) };

    let cfg = trontide::harness::ExperimentConfig::from_json(CONFIG).unwrap();
    let direct = trontide::harness::Experiment::build(cfg, 99).unwrap().run_trials(None).unwrap();
    assert_eq!(via_ffi, serde_json::to_string_pretty(&direct).unwrap());
}

#[test]
fn errors_map_to_status_codes() {
    let (st, exp) = new_experiment("{ not json", None);
    assert_eq!(st, TrontideStatus::Config);
    assert!(exp.is_null());
    assert!(!last_error().is_empty());

    let bad = CONFIG.replace(r#""batch": 4"#, r#""batch": 4, "bogus": 1"#);
    let (st, _) = new_experiment(&bad, None);
    assert_eq!(st, TrontideStatus::Config);
    assert!(last_error().contains("bogus"));

    let infeasible = CONFIG.replace(r#"{"frac_of_theta_star": 0.5}"#, "5.0");
    let (st, exp) = new_experiment(&infeasible, None);
    assert_eq!(st, TrontideStatus::Ok);
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { trontide_experiment_train_csv(exp, &mut out) }, TrontideStatus::Infeasible);
    assert!(out.is_null());
    unsafe { trontide_experiment_free(exp) };

    let mut v = 0.0;
    assert_eq!(unsafe { trontide_log_gamma(-1.0, &mut v) }, TrontideStatus::Domain);
}

#[test]
fn null_pointers_are_rejected() {
    let mut exp = ptr::null_mut();
    assert_eq!(
        unsafe { trontide_experiment_new_from_json(ptr::null(), ptr::null(), &mut exp) },
        TrontideStatus::NullPointer
    );
    let c = CString::new(CONFIG).unwrap();
    assert_eq!(
        unsafe { trontide_experiment_new_from_json(c.as_ptr(), ptr::null(), ptr::null_mut()) },
        TrontideStatus::NullPointer
    );
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { trontide_experiment_theory_json(ptr::null(), &mut out) }, TrontideStatus::NullPointer);
    assert_eq!(unsafe { trontide_log_gamma(2.0, ptr::null_mut()) }, TrontideStatus::NullPointer);
    unsafe {
        trontide_experiment_free(ptr::null_mut());
        trontide_string_free(ptr::null_mut());
    }
}

#[test]
fn invalid_utf8_is_rejected() {
    let bytes = [b'{', 0xff, b'}', 0];
    let mut exp = ptr::null_mut();
    let st = unsafe { trontide_experiment_new_from_json(bytes.as_ptr().cast(), ptr::null(), &mut exp) };
    assert_eq!(st, TrontideStatus::InvalidUtf8);
}

#[test]
fn scalar_functions() {
    let mut v = 0.0;
    assert_eq!(unsafe { trontide_log_gamma(5.0, &mut v) }, TrontideStatus::Ok);
    assert!((v - 24f64.ln()).abs() < 1e-12);

    // n = 1: Γ(1/2)/Γ(1) = √π, so c = σ√π/(√2β) − 1.
    assert_eq!(unsafe { trontide_gaussian_tradeoff(2.0, 0.5, 1, &mut v) }, TrontideStatus::Ok);
    let expect = 2.0 * std::f64::consts::PI.sqrt() / (2f64.sqrt() * 0.5) - 1.0;
    assert!((v - expect).abs() < 1e-12, "{v} vs {expect}");

    let mut t = 0u64;
    assert_eq!(unsafe { trontide_horizon_case1(1.0, 0.1, 1.0, 0.5, &mut t) }, TrontideStatus::Ok);
    // 0.5^(T-1) ≤ 0.01 first at T-1 = 7.
    assert_eq!(t, 8);

    let ver = unsafe { CStr::from_ptr(trontide_version()) }.to_str().unwrap();
    assert_eq!(ver, env!("CARGO_PKG_VERSION"));
}

fn header() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("include/trontide.h")
}

#[test]
fn header_declares_every_export() {
    let text = std::fs::read_to_string(header()).unwrap();
    for name in [
        "trontide_last_error_message",
        "trontide_version",
        "trontide_experiment_new_from_json",
        "trontide_experiment_free",
        "trontide_experiment_theory_json",
        "trontide_experiment_run_trials",
        "trontide_experiment_train_csv",
        "trontide_string_free",
        "trontide_log_gamma",
        "trontide_gaussian_tradeoff",
        "trontide_horizon_case1",
        "TRONTIDE_STATUS_NULL_POINTER = 1",
        "TRONTIDE_STATUS_PANIC = 11",
        "typedef struct TrontideExperiment TrontideExperiment;",
    ] {
        assert!(text.contains(name), "header is missing {name}");
    }
}

const C_SMOKE: &str = r#"
#include <stdio.h>
#include "trontide.h"
int main(void) {
    double v = 0.0;
    if (trontide_log_gamma(5.0, &v) != TRONTIDE_STATUS_OK) return 3;
    if (v < 3.178 || v > 3.179) return 4;
    if (trontide_log_gamma(0.0, &v) != TRONTIDE_STATUS_DOMAIN) return 5;
    if (trontide_last_error_message() == NULL) return 6;
    struct TrontideExperiment *exp = NULL;
    if (trontide_experiment_new_from_json("{}", NULL, &exp) != TRONTIDE_STATUS_CONFIG) return 7;
    if (exp != NULL) return 8;
    puts(trontide_version());
    return 0;
}
"#;

fn has_cc() -> bool {
    Command::new("cc").arg("--version").output().is_ok_and(|o| o.status.success())
}

#[test]
fn header_compiles_and_links_from_c() {
    if !has_cc() {
        eprintln!("skipping: no C compiler on PATH");
        return;
    }
    // Test binaries live in target/<profile>/deps; the static library sits one level up.
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().and_then(Path::parent).unwrap();
    let lib = profile_dir.join("libtrontide_ffi.a");
    if !lib.exists() {
        eprintln!("skipping: {} not built", lib.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("smoke.c");
    let bin = dir.path().join("smoke");
    std::fs::write(&src, C_SMOKE).unwrap();
    let status = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-I"])
        .arg(header().parent().unwrap())
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success(), "C smoke program failed to build");
    let out = Command::new(&bin).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), env!("CARGO_PKG_VERSION"));
}
