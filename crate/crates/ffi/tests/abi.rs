use blindcal_ffi::*;
use std::ffi::{CStr, CString};
use std::ptr;

fn last_error() -> String {
    let p = bc_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn generate(n: usize, m: usize, k: usize, l: usize, sigma: f64, seed: u64) -> *mut BcInstance {
    let mut inst = ptr::null_mut();
    let s = unsafe { bc_instance_generate(n, m, k, l, sigma, seed, &mut inst) };
    assert_eq!(s, BcStatus::Ok);
    assert!(!inst.is_null());
    inst
}

#[test]
fn generate_and_read_back() {
    let inst = generate(40, 20, 3, 5, 0.5, 9);
    let (mut n, mut m, mut k, mut l) = (0, 0, 0, 0);
    unsafe {
        assert_eq!(bc_instance_dims(inst, &mut n, &mut m, &mut k, &mut l), BcStatus::Ok);
        assert_eq!((n, m, k, l), (40, 20, 3, 5));
        let mut y = vec![0.0; m * l];
        assert_eq!(bc_instance_observations(inst, y.as_mut_ptr(), y.len()), BcStatus::Ok);
        assert!(y.iter().any(|v| *v != 0.0));
        let mut short = vec![0.0; 3];
        assert_eq!(bc_instance_signals(inst, short.as_mut_ptr(), 3), BcStatus::BufferTooSmall);
        assert!(last_error().contains("200"));
        let mut alpha = 0.0;
        assert_eq!(bc_instance_scale_factor(inst, &mut alpha), BcStatus::Ok);
        assert!(alpha > 0.0);
        bc_instance_free(inst);
    }
}

#[test]
fn json_round_trip_is_exact() {
    let inst = generate(20, 10, 2, 3, 0.3, 1);
    unsafe {
        let mut json = ptr::null_mut();
        assert_eq!(bc_instance_to_json(inst, &mut json), BcStatus::Ok);
        let mut back = ptr::null_mut();
        assert_eq!(bc_instance_from_json(json, &mut back), BcStatus::Ok);
        let mut again = ptr::null_mut();
        assert_eq!(bc_instance_to_json(back, &mut again), BcStatus::Ok);
        assert_eq!(CStr::from_ptr(json), CStr::from_ptr(again));
        bc_string_free(json);
        bc_string_free(again);
        bc_instance_free(inst);
        bc_instance_free(back);
    }
}

#[test]
fn solve_recovers_planted_signals() {
    let inst = generate(50, 25, 3, 8, 0.3, 4);
    unsafe {
        let mut res = ptr::null_mut();
        assert_eq!(bc_solve(inst, BcMode::Calibrated, &mut res), BcStatus::Ok);
        let mut status = BcSolveStatus::Infeasible;
        assert_eq!(bc_result_status(res, &mut status), BcStatus::Ok);
        assert_eq!(status, BcSolveStatus::Converged);
        let mut x_hat = vec![0.0; 50 * 8];
        let mut x0 = vec![0.0; 50 * 8];
        assert_eq!(bc_result_signals(res, x_hat.as_mut_ptr(), x_hat.len()), BcStatus::Ok);
        assert_eq!(bc_instance_signals(inst, x0.as_mut_ptr(), x0.len()), BcStatus::Ok);
        let mut c = 0.0;
        assert_eq!(bc_ncc(x0.as_ptr(), x_hat.as_ptr(), 50, 8, &mut c), BcStatus::Ok);
        assert!(c > 0.999, "correlation {c}");
        let mut delta = vec![0.0; 25];
        assert_eq!(bc_result_inverse_gains(res, delta.as_mut_ptr(), 25), BcStatus::Ok);
        assert!((delta.iter().sum::<f64>() - 25.0).abs() < 1e-8);
        let mut json = ptr::null_mut();
        assert_eq!(bc_result_to_json(res, &mut json), BcStatus::Ok);
        assert!(CStr::from_ptr(json).to_str().unwrap().contains("\"converged\""));
        bc_string_free(json);
        bc_result_free(res);
        bc_instance_free(inst);
    }
}

#[test]
fn raw_data_solve_matches_handle_solve() {
    let inst = generate(30, 15, 2, 4, 0.0, 2);
    unsafe {
        let mut a = vec![0.0; 15 * 30];
        let mut y = vec![0.0; 15 * 4];
        bc_instance_matrix(inst, a.as_mut_ptr(), a.len());
        bc_instance_observations(inst, y.as_mut_ptr(), y.len());
        let (mut r1, mut r2) = (ptr::null_mut(), ptr::null_mut());
        assert_eq!(bc_solve(inst, BcMode::Uncalibrated, &mut r1), BcStatus::Ok);
        assert_eq!(bc_solve_data(a.as_ptr(), 15, 30, y.as_ptr(), 4, BcMode::Uncalibrated, &mut r2), BcStatus::Ok);
        let (mut o1, mut o2) = (0.0, 0.0);
        bc_result_objective(r1, &mut o1);
        bc_result_objective(r2, &mut o2);
        assert_eq!(o1, o2);
        let mut d = vec![0.0; 15];
        assert_eq!(bc_result_inverse_gains(r1, d.as_mut_ptr(), 15), BcStatus::InvalidArgument);
        bc_result_free(r1);
        bc_result_free(r2);
        bc_instance_free(inst);
    }
}

#[test]
fn errors_are_reported_with_codes() {
    let mut inst = ptr::null_mut();
    unsafe {
        assert_eq!(bc_instance_generate(10, 20, 1, 1, 0.0, 0, &mut inst), BcStatus::InvalidArgument);
        assert!(inst.is_null());
        assert!(!last_error().is_empty());
        assert_eq!(bc_instance_generate(10, 5, 1, 1, 0.0, 0, ptr::null_mut()), BcStatus::NullPointer);
        let bad = CString::new("{not json").unwrap();
        assert_eq!(bc_instance_from_json(bad.as_ptr(), &mut inst), BcStatus::ParseError);
        let zeros = [0.0; 4];
        let mut c = 0.0;
        assert_eq!(bc_ncc(zeros.as_ptr(), zeros.as_ptr(), 2, 2, &mut c), BcStatus::InvalidArgument);
        bc_instance_free(ptr::null_mut());
        bc_result_free(ptr::null_mut());
        bc_string_free(ptr::null_mut());
    }
    assert!((bc_decalibration_db(1.0) - 8.6859).abs() < 1e-4);
}

#[test]
fn header_compiles_as_c() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/blindcal.h");
    let src = std::env::temp_dir().join(format!("blindcal_header_{}.c", std::process::id()));
    std::fs::write(
        &src,
        format!(
            "#include \"{header}\"\nint main(void) {{ BcInstance *i = 0; BcStatus s = bc_instance_generate(4, 2, 1, 1, 0.0, 0, &i); bc_instance_free(i); return (int)s; }}\n"
        ),
    )
    .unwrap();
    let Ok(out) = std::process::Command::new("cc").args(["-fsyntax-only", "-Wall", "-Werror"]).arg(&src).output() else {
        eprintln!("no C compiler; skipping");
        return;
    };
    let _ = std::fs::remove_file(&src);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn c_program_links_and_solves() {
    let exe = std::env::current_exe().unwrap();
    let deps = exe.parent().unwrap();
    if !deps.join("libblindcal_ffi.so").exists() {
        eprintln!("shared library not found next to the test binary; skipping");
        return;
    }
    let include = concat!(env!("CARGO_MANIFEST_DIR"), "/include");
    let dir = tempfile_dir();
    let src = dir.join("main.c");
    std::fs::write(
        &src,
        r#"#include <stdio.h>
#include "blindcal.h"
int main(void) {
    BcInstance *inst = NULL;
    BcResult *res = NULL;
    if (bc_instance_generate(30, 15, 2, 4, 0.2, 3, &inst) != BC_STATUS_OK) return 1;
    if (bc_solve(inst, BC_MODE_CALIBRATED, &res) != BC_STATUS_OK) return 2;
    BcSolveStatus st;
    bc_result_status(res, &st);
    double x0[120], x[120], c = 0.0;
    bc_instance_signals(inst, x0, 120);
    bc_result_signals(res, x, 120);
    bc_ncc(x0, x, 30, 4, &c);
    if (bc_instance_generate(3, 5, 1, 1, 0.0, 0, &inst) == BC_STATUS_OK) return 3;
    printf("%d %.6f %s\n", (int)st, c, bc_last_error());
    bc_result_free(res);
    return 0;
}
"#,
    )
    .unwrap();
    let bin = dir.join("main");
    let cc = std::process::Command::new("cc")
        .arg(&src)
        .arg(format!("-I{include}"))
        .arg(format!("-L{}", deps.display()))
        .arg(format!("-Wl,-rpath,{}", deps.display()))
        .args(["-lblindcal_ffi", "-o"])
        .arg(&bin)
        .output();
    let Ok(cc) = cc else {
        eprintln!("no C compiler; skipping");
        return;
    };
    assert!(cc.status.success(), "{}", String::from_utf8_lossy(&cc.stderr));
    let run = std::process::Command::new(&bin).output().unwrap();
    assert!(run.status.success(), "exit {:?}", run.status.code());
    let out = String::from_utf8_lossy(&run.stdout);
    let mut fields = out.split_whitespace();
    assert_eq!(fields.next(), Some("0"));
    let c: f64 = fields.next().unwrap().parse().unwrap();
    assert!(c > 0.999, "{out}");
    assert!(out.contains("invalid dimensions"), "{out}");
    let _ = std::fs::remove_dir_all(&dir);
}

fn tempfile_dir() -> std::path::PathBuf {
    let d = std::env::temp_dir().join(format!("blindcal_ffi_{}", std::process::id()));
    std::fs::create_dir_all(&d).unwrap();
    d
}
