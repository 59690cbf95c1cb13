use std::ffi::{c_char, CStr, CString};
use std::path::PathBuf;
use std::ptr;

use qdynkit_ffi::*;

const MORSE: &str = r#"
[[space.dof]]
kind = "fft"
mass = 1728.539
n_pts = 256
x_min = 0.7
x_max = 10.0

[hamilt.pot.1.1]
model = "morse"
d_e = 0.1994
r_e = 1.821
alf = 1.189

[[psi.init.dof]]
model = "morse"
d_e = 0.1994
r_e = 1.44
alf = 1.189

[psi.eigen]
stop = 3

[time.main]
delta = 76.8237
stop = 4

[time.propa]
handle = "cheby_real"
"#;

fn last_error() -> String {
    let mut needed = 0usize;
    unsafe {
        assert_eq!(qdk_last_error(ptr::null_mut(), 0, &mut needed), QdkStatus::Ok);
        let mut buf = vec![0 as c_char; needed];
        assert_eq!(qdk_last_error(buf.as_mut_ptr(), buf.len(), ptr::null_mut()), QdkStatus::Ok);
        CStr::from_ptr(buf.as_ptr()).to_string_lossy().into_owned()
    }
}

fn config(text: &str) -> Result<*mut QdkConfig, (QdkStatus, String)> {
    let text = CString::new(text).unwrap();
    let stem = CString::new("morse").unwrap();
    let mut c = ptr::null_mut();
    let s = unsafe { qdk_config_parse(text.as_ptr(), ptr::null(), stem.as_ptr(), &mut c) };
    if s == QdkStatus::Ok {
        Ok(c)
    } else {
        Err((s, last_error()))
    }
}

#[test]
fn bound_energies_match_the_analytic_ground_state() {
    let c = config(MORSE).unwrap();
    unsafe {
        let mut sys = ptr::null_mut();
        assert_eq!(qdk_system_new(c, &mut sys), QdkStatus::Ok);
        let (mut points, mut channels) = (0, 0);
        assert_eq!(qdk_system_size(sys, &mut points, &mut channels), QdkStatus::Ok);
        assert_eq!((points, channels), (256, 1));
        let mut e = [0.0; 4];
        assert_eq!(qdk_bound_energies(sys, 4, e.as_mut_ptr()), QdkStatus::Ok);
        let w0 = 1.189 * (2.0 * 0.1994 / 1728.539f64).sqrt();
        let analytic = w0 * 0.5 - w0 * w0 * 0.25 / (4.0 * 0.1994);
        assert!(((e[0] - analytic) / analytic).abs() < 1e-8, "{e:?}");
        assert!(e.windows(2).all(|w| w[0] < w[1]));
        qdk_system_free(sys);
        qdk_config_free(c);
    }
}

#[test]
fn config_errors_carry_the_field() {
    let (status, msg) = config(&MORSE.replace("n_pts = 256", "n_pts = 0")).unwrap_err();
    assert_eq!(status, QdkStatus::Config);
    assert!(msg.contains("n_pts"), "{msg}");
    let (status, msg) = config("[[space.dof]]\nkind = \"fft\"\nbogus = 1\n").unwrap_err();
    assert_eq!(status, QdkStatus::Config);
    assert!(msg.contains("space.dof"), "{msg}");
}

#[test]
fn null_and_bad_arguments_are_reported() {
    unsafe {
        let mut c = ptr::null_mut();
        assert_eq!(qdk_config_parse(ptr::null(), ptr::null(), ptr::null(), &mut c), QdkStatus::NullPointer);
        assert!(last_error().contains("text"));
        let bad = [0xffu8 as c_char, 0];
        let stem = CString::new("x").unwrap();
        assert_eq!(qdk_config_parse(bad.as_ptr(), ptr::null(), stem.as_ptr(), &mut c), QdkStatus::InvalidUtf8);
        let mut n = 0;
        assert_eq!(qdk_summary_len(ptr::null(), &mut n), QdkStatus::NullPointer);
        let missing = CString::new("/nonexistent/qdynkit.toml").unwrap();
        assert_eq!(qdk_config_load(missing.as_ptr(), &mut c), QdkStatus::Io);
        qdk_config_free(ptr::null_mut());
        qdk_wave_free(ptr::null_mut());
        qdk_system_free(ptr::null_mut());
        qdk_summary_free(ptr::null_mut());
    }
}

#[test]
fn echo_needs_a_large_enough_buffer() {
    let c = config(MORSE).unwrap();
    unsafe {
        let mut needed = 0;
        let mut small = [0 as c_char; 8];
        assert_eq!(qdk_config_echo(c, small.as_mut_ptr(), small.len(), &mut needed), QdkStatus::BufferTooSmall);
        assert!(needed > 8);
        let mut buf = vec![0 as c_char; needed];
        assert_eq!(qdk_config_echo(c, buf.as_mut_ptr(), buf.len(), ptr::null_mut()), QdkStatus::Ok);
        let echo = CStr::from_ptr(buf.as_ptr()).to_str().unwrap();
        assert!(echo.contains("coupling = \"dia\""));
        qdk_config_free(c);
    }
}

#[test]
fn propagation_keeps_the_norm() {
    let c = config(MORSE).unwrap();
    unsafe {
        let mut sys = ptr::null_mut();
        assert_eq!(qdk_system_new(c, &mut sys), QdkStatus::Ok);
        let mut psi0 = ptr::null_mut();
        assert_eq!(qdk_wave_initial(c, sys, &mut psi0), QdkStatus::Ok);
        let mut psi = ptr::null_mut();
        assert_eq!(qdk_wave_clone(psi0, &mut psi), QdkStatus::Ok);
        let (mut n0, mut e0) = (0.0, 0.0);
        assert_eq!(qdk_wave_expect(sys, psi, psi0, &mut n0, &mut e0, ptr::null_mut(), ptr::null_mut()), QdkStatus::Ok);
        for _ in 0..5 {
            assert_eq!(qdk_wave_propagate(sys, psi, 76.8237, 1e-10), QdkStatus::Ok);
        }
        let (mut n, mut e, mut re, mut im) = (0.0, 0.0, 0.0, 0.0);
        assert_eq!(qdk_wave_expect(sys, psi, psi0, &mut n, &mut e, &mut re, &mut im), QdkStatus::Ok);
        assert!((n - 1.0).abs() < 1e-9 && (e - e0).abs() < 1e-9 * e0.abs(), "{n} {e} {e0}");
        assert!((re * re + im * im).sqrt() < 1.0);
        let mut re_v = vec![0.0; 256];
        let mut im_v = vec![0.0; 256];
        assert_eq!(qdk_wave_values(psi, 0, re_v.as_mut_ptr(), im_v.as_mut_ptr(), 256), QdkStatus::Ok);
        assert_eq!(qdk_wave_values(psi, 1, re_v.as_mut_ptr(), im_v.as_mut_ptr(), 256), QdkStatus::NotFound);
        assert_eq!(qdk_wave_values(psi, 0, re_v.as_mut_ptr(), im_v.as_mut_ptr(), 10), QdkStatus::BufferTooSmall);
        qdk_wave_free(psi);
        qdk_wave_free(psi0);
        qdk_system_free(sys);
        qdk_config_free(c);
    }
}

#[test]
fn runs_report_named_results() {
    let c = config(MORSE).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let out = CString::new(dir.path().to_str().unwrap()).unwrap();
    unsafe {
        let mut s = ptr::null_mut();
        assert_eq!(qdk_run(c, QdkMode::Bound, out.as_ptr(), false, &mut s), QdkStatus::Ok, "{}", last_error());
        let mut n = 0;
        assert_eq!(qdk_summary_len(s, &mut n), QdkStatus::Ok);
        assert!(n >= 4);
        let key = CString::new("energy.0").unwrap();
        let mut e0 = 0.0;
        assert_eq!(qdk_summary_get(s, key.as_ptr(), &mut e0), QdkStatus::Ok);
        assert!((e0 - 8.92781e-3).abs() < 1e-7);
        let mut buf = [0 as c_char; 64];
        assert_eq!(qdk_summary_key(s, 0, buf.as_mut_ptr(), 64, ptr::null_mut()), QdkStatus::Ok);
        assert_eq!(qdk_summary_key(s, n, buf.as_mut_ptr(), 64, ptr::null_mut()), QdkStatus::NotFound);
        let absent = CString::new("nothing").unwrap();
        assert_eq!(qdk_summary_get(s, absent.as_ptr(), &mut e0), QdkStatus::NotFound);
        qdk_summary_free(s);

        let mut s = ptr::null_mut();
        assert_eq!(qdk_run(c, QdkMode::Propa, out.as_ptr(), false, &mut s), QdkStatus::Ok, "{}", last_error());
        let key = CString::new("norm").unwrap();
        let mut norm = 0.0;
        assert_eq!(qdk_summary_get(s, key.as_ptr(), &mut norm), QdkStatus::Ok);
        assert!((norm - 1.0).abs() < 1e-8);
        qdk_summary_free(s);
        qdk_config_free(c);
    }
    assert!(dir.path().join("expect.csv").exists());
}

#[test]
fn cheby_counts() {
    let mut n = 0;
    unsafe {
        assert_eq!(qdk_cheby_count(76.8237, 1e-8, false, &mut n), QdkStatus::Ok);
        assert!(n > 76);
        assert_eq!(qdk_cheby_count(-1.0, 1e-8, false, &mut n), QdkStatus::Config);
    }
}

#[test]
fn version_string() {
    let v = unsafe { CStr::from_ptr(qdk_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_the_api() {
    let header = std::fs::read_to_string(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include/qdynkit.h")).unwrap();
    for name in ["qdk_config_load", "qdk_run", "qdk_last_error", "qdk_wave_propagate", "QDK_STATUS_OK", "typedef struct QdkConfig"] {
        assert!(header.contains(name), "{name} missing from header");
    }
}

#[test]
fn header_compiles_as_c() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        r#"#include "qdynkit.h"
int probe(const char *path) {
    QdkConfig *c = NULL;
    QdkSummary *s = NULL;
    size_t n = 0;
    if (qdk_config_load(path, &c) != QDK_STATUS_OK) return 1;
    QdkStatus st = qdk_run(c, QDK_MODE_BOUND, ".", false, &s);
    qdk_summary_len(s, &n);
    qdk_summary_free(s);
    qdk_config_free(c);
    return st == QDK_STATUS_OK ? 0 : (int)n;
}
"#,
    )
    .unwrap();
    let include = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include");
    let status = std::process::Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(&include)
        .arg(&src)
        .status();
    match status {
        Ok(s) => assert!(s.success()),
        Err(e) => eprintln!("no C compiler ({e}); header syntax not checked"),
    }
}
