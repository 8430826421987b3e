use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use mscox_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(mscox_last_error_message()) }
        .to_string_lossy()
        .into_owned()
}

fn simulate(seed: u64) -> *mut MscoxField {
    let mut f = ptr::null_mut();
    let s = unsafe { mscox_simulate_reference(12, 12, 4, 10, 64, seed, &mut f) };
    assert_eq!(s, MscoxStatus::Ok, "{}", last_error());
    f
}

fn values(f: *const MscoxField) -> Vec<f64> {
    let (mut s1, mut s2, mut nt) = (0, 0, 0);
    unsafe {
        assert_eq!(mscox_field_dims(f, &mut s1, &mut s2, &mut nt), MscoxStatus::Ok);
        let mut buf = vec![0.0; s1 * s2 * nt];
        assert_eq!(mscox_field_values(f, buf.as_mut_ptr(), buf.len()), MscoxStatus::Ok);
        buf
    }
}

#[test]
fn simulate_is_deterministic_and_dims_match() {
    let a = simulate(3);
    let b = simulate(3);
    let (mut s1, mut s2, mut nt) = (0, 0, 0);
    unsafe { mscox_field_dims(a, &mut s1, &mut s2, &mut nt) };
    assert_eq!((s1, s2, nt), (12, 12, 16));
    assert_eq!(values(a), values(b));
    unsafe {
        mscox_field_free(a);
        mscox_field_free(b);
        mscox_field_free(ptr::null_mut());
    }
}

#[test]
fn values_round_trip_and_file_round_trip() {
    let data: Vec<f64> = (0..2 * 3 * 4).map(|i| (i as f64 * 0.7).sin()).collect();
    let mut f = ptr::null_mut();
    unsafe {
        assert_eq!(mscox_field_from_values(2, 3, 2, data.as_ptr(), data.len(), &mut f), MscoxStatus::Ok);
    }
    assert_eq!(values(f), data);
    let dir = tempfile::tempdir().unwrap();
    for name in ["f.csv", "f.ndjson"] {
        let path = CString::new(dir.path().join(name).to_str().unwrap()).unwrap();
        let mut g = ptr::null_mut();
        unsafe {
            assert_eq!(mscox_field_save(f, path.as_ptr()), MscoxStatus::Ok);
            assert_eq!(mscox_field_load(path.as_ptr(), &mut g), MscoxStatus::Ok);
        }
        assert_eq!(values(g), data);
        unsafe { mscox_field_free(g) };
    }
    unsafe { mscox_field_free(f) };
}

#[test]
fn error_codes_and_messages() {
    let mut f = ptr::null_mut();
    let data = [0.0; 5];
    let s = unsafe { mscox_field_from_values(2, 2, 1, data.as_ptr(), data.len(), &mut f) };
    assert_eq!(s, MscoxStatus::Shape);
    assert!(last_error().contains("expected 8"));
    assert!(f.is_null());

    let s = unsafe { mscox_simulate_reference(1, 5, 4, 10, 64, 0, &mut f) };
    assert_eq!(s, MscoxStatus::Validation);

    let s = unsafe { mscox_simulate_reference(5, 5, 4, 10, 64, 0, ptr::null_mut()) };
    assert_eq!(s, MscoxStatus::NullPointer);

    let bad = CString::new(r#"{"grid": {"s1": 4}}"#).unwrap();
    let s = unsafe { mscox_simulate_config(bad.as_ptr(), &mut f) };
    assert_eq!(s, MscoxStatus::Config);
    assert!(last_error().contains("s2"), "{}", last_error());

    let missing = CString::new("/nonexistent/dir/f.csv").unwrap();
    let s = unsafe { mscox_field_load(missing.as_ptr(), &mut f) };
    assert_eq!(s, MscoxStatus::Io);

    let g = simulate(1);
    let mut small = [0.0; 3];
    let s = unsafe { mscox_field_values(g, small.as_mut_ptr(), small.len()) };
    assert_eq!(s, MscoxStatus::BufferTooSmall);
    unsafe { mscox_field_free(g) };
}

#[test]
fn estimate_and_counts() {
    let f = simulate(9);
    let mut r = ptr::null_mut();
    unsafe {
        assert_eq!(mscox_estimate(f, 2, true, &mut r), MscoxStatus::Ok, "{}", last_error());
    }
    let mut buf = [0.0; 16];
    let mut n = 0;
    unsafe {
        assert_eq!(mscox_report_eigenvalues(r, 1, buf.as_mut_ptr(), buf.len(), &mut n), MscoxStatus::Ok);
    }
    // k_N = floor(ln 144) = 4
    assert_eq!(n, 4);
    assert!(buf[..n].windows(2).all(|w| w[0].abs() >= w[1].abs()));
    unsafe {
        assert_eq!(mscox_report_eigenvalues(r, 4, buf.as_mut_ptr(), buf.len(), &mut n), MscoxStatus::Validation);
        assert_eq!(mscox_report_eigenvalues(r, 2, buf.as_mut_ptr(), 1, &mut n), MscoxStatus::BufferTooSmall);
    }
    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("r.ndjson").to_str().unwrap()).unwrap();
    unsafe { assert_eq!(mscox_report_save(r, path.as_ptr()), MscoxStatus::Ok) };
    assert!(std::fs::read_to_string(dir.path().join("r.ndjson")).unwrap().lines().count() > 1);

    let mut counts = vec![0u64; 144];
    let mut means = vec![0.0; 144];
    let mut counts2 = vec![0u64; 144];
    unsafe {
        assert_eq!(mscox_sample_counts(f, 10.0, 4, counts.as_mut_ptr(), means.as_mut_ptr(), 144), MscoxStatus::Ok);
        assert_eq!(mscox_sample_counts(f, 10.0, 4, counts2.as_mut_ptr(), means.as_mut_ptr(), 144), MscoxStatus::Ok);
        assert_eq!(
            mscox_sample_counts(f, 0.0, 4, counts2.as_mut_ptr(), means.as_mut_ptr(), 144),
            MscoxStatus::Validation
        );
    }
    assert_eq!(counts, counts2);
    assert!(means.iter().all(|&m| m > 0.0));
    unsafe {
        mscox_report_free(r);
        mscox_field_free(f);
    }
}

#[test]
fn version_string() {
    let v = unsafe { CStr::from_ptr(mscox_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

fn header() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include/mscox.h")
}

#[test]
fn header_declares_api() {
    let text = std::fs::read_to_string(header()).unwrap();
    for name in [
        "typedef struct MscoxField MscoxField;",
        "typedef struct MscoxReport MscoxReport;",
        "MSCOX_STATUS_OK = 0",
        "MSCOX_STATUS_PANIC = 12",
        "mscox_last_error_message(void)",
        "mscox_simulate_reference(",
        "mscox_field_free(",
        "mscox_estimate(",
        "mscox_report_eigenvalues(",
        "mscox_sample_counts(",
    ] {
        assert!(text.contains(name), "header lacks {name}");
    }
}

const C_PROGRAM: &str = r#"
#include <stdio.h>
#include "mscox.h"

int main(void) {
    MscoxField *f = NULL;
    if (mscox_simulate_reference(8, 8, 3, 8, 64, 5, &f) != MSCOX_STATUS_OK) return 1;
    size_t s1, s2, nt;
    if (mscox_field_dims(f, &s1, &s2, &nt) != MSCOX_STATUS_OK) return 2;
    MscoxReport *r = NULL;
    if (mscox_estimate(f, 1, true, &r) != MSCOX_STATUS_OK) return 3;
    double eig[8];
    size_t n = 0;
    if (mscox_report_eigenvalues(r, 2, eig, 8, &n) != MSCOX_STATUS_OK) return 4;
    if (mscox_simulate_reference(1, 8, 3, 8, 64, 5, &f) != MSCOX_STATUS_VALIDATION) return 5;
    printf("%zu %zu %zu %zu %s\n", s1, s2, nt, n, mscox_last_error_message()[0] ? "msg" : "none");
    mscox_report_free(r);
    mscox_field_free(f);
    return 0;
}
"#;

/// Compiles a C client against the generated header and the static library.
#[test]
fn c_client_links_against_static_library() {
    if Command::new("cc").arg("--version").output().is_err() {
        eprintln!("no C compiler; skipping");
        return;
    }
    // tests run from target/<profile>/deps
    let exe = std::env::current_exe().unwrap();
    let lib_dir = exe.parent().unwrap().parent().unwrap();
    let lib = lib_dir.join("libmscox_ffi.a");
    if !lib.exists() {
        eprintln!("{} not built; skipping", lib.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("client.c");
    std::fs::write(&src, C_PROGRAM).unwrap();
    let bin = dir.path().join("client");
    let status = Command::new("cc")
        .arg("-std=c11")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(header().parent().unwrap())
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success());
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "client exited with {:?}", out.status);
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "8 8 8 4 msg");
}
