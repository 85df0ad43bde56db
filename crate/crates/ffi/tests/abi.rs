use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use gatecert_ffi::*;

fn last_error() -> String {
    let p = gc_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn reference(scheme: GcScheme, gate: &str) -> *mut GcRealization {
    let name = CString::new(gate).unwrap();
    let mut real = ptr::null_mut();
    let st = unsafe { gc_realization_reference(scheme, 2, name.as_ptr(), GcBranch::Plus, &mut real) };
    assert_eq!(st, GcStatus::Ok);
    real
}

#[test]
fn version_is_package_version() {
    let v = unsafe { CStr::from_ptr(gc_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn certify_reference_end_to_end() {
    unsafe {
        let real = reference(GcScheme::Di, "cnot");
        let mut rep = ptr::null_mut();
        assert_eq!(gc_certify_realization(real, 1e-9, &mut rep), GcStatus::Ok);
        assert_eq!(gc_report_certified(rep), 1);
        let mut res = 1.0;
        assert_eq!(gc_report_max_residual(rep, &mut res), GcStatus::Ok);
        assert!(res < 1e-9);
        let mut json = ptr::null_mut();
        assert_eq!(gc_report_to_json(rep, &mut json), GcStatus::Ok);
        assert!(CStr::from_ptr(json).to_str().unwrap().contains("\"certified\""));
        gc_string_free(json);
        gc_report_free(rep);
        gc_realization_free(real);
    }
}

#[test]
fn table_round_trip_and_certify() {
    unsafe {
        let real = reference(GcScheme::AlmostDi, "swap");
        let mut t = ptr::null_mut();
        assert_eq!(gc_table_simulate(real, &mut t), GcStatus::Ok);
        let mut len = 0;
        assert_eq!(gc_table_len(t, &mut len), GcStatus::Ok);
        assert_eq!(len, 288);

        let mut text = ptr::null_mut();
        assert_eq!(gc_table_to_jsonl(t, &mut text), GcStatus::Ok);
        let mut back = ptr::null_mut();
        assert_eq!(gc_table_from_jsonl(text, &mut back), GcStatus::Ok);
        gc_string_free(text);
        let mut d = 1.0;
        assert_eq!(gc_table_distance(t, back, &mut d), GcStatus::Ok);
        assert_eq!(d, 0.0);

        let gate = CString::new("swap").unwrap();
        let mut rep = ptr::null_mut();
        assert_eq!(gc_certify_table(back, gate.as_ptr(), 1e-9, &mut rep), GcStatus::Ok);
        assert_eq!(gc_report_certified(rep), 1);
        gc_report_free(rep);

        // The same statistics do not certify a different gate.
        let other = CString::new("cz").unwrap();
        assert_eq!(gc_certify_table(back, other.as_ptr(), 1e-9, &mut rep), GcStatus::Ok);
        assert_eq!(gc_report_certified(rep), 0);
        let mut failing = 0;
        assert_eq!(gc_report_failing(rep, &mut failing), GcStatus::Ok);
        assert!(failing > 0);
        gc_report_free(rep);

        gc_table_free(t);
        gc_table_free(back);
        gc_realization_free(real);
    }
}

#[test]
fn explicit_matrix_and_attack() {
    let (mut re, im) = (vec![0.0; 16], vec![0.0; 16]);
    for i in 0..4 {
        re[i * 4 + i] = 1.0;
    }
    unsafe {
        let mut real = ptr::null_mut();
        let st = gc_realization_from_matrix(GcScheme::AlmostDi, 2, re.as_ptr(), im.as_ptr(), GcBranch::Minus, &mut real);
        assert_eq!(st, GcStatus::Ok);
        let script = CString::new(r#"{"kind":"perturb","epsilon":0.1,"seed":2}"#).unwrap();
        let mut attacked = ptr::null_mut();
        assert_eq!(gc_realization_attack(real, script.as_ptr(), &mut attacked), GcStatus::Ok);
        let mut rep = ptr::null_mut();
        assert_eq!(gc_certify_realization(attacked, 1e-6, &mut rep), GcStatus::Ok);
        assert_eq!(gc_report_certified(rep), 0);
        gc_report_free(rep);
        gc_realization_free(attacked);
        gc_realization_free(real);
    }
}

#[test]
fn errors_carry_status_and_message() {
    unsafe {
        let mut real = ptr::null_mut();
        let bad = CString::new("nonsense").unwrap();
        let st = gc_realization_reference(GcScheme::Di, 2, bad.as_ptr(), GcBranch::Plus, &mut real);
        assert_eq!(st, GcStatus::Parse);
        assert!(real.is_null());
        assert!(last_error().contains("nonsense"));

        let cnot = CString::new("cnot").unwrap();
        let st = gc_realization_reference(GcScheme::Di, 5, cnot.as_ptr(), GcBranch::Plus, &mut real);
        assert_eq!(st, GcStatus::InvalidArgument);

        assert_eq!(
            gc_realization_reference(GcScheme::Di, 2, ptr::null(), GcBranch::Plus, &mut real),
            GcStatus::NullPointer
        );
        assert_eq!(gc_table_len(ptr::null(), &mut 0), GcStatus::NullPointer);
        assert_eq!(gc_report_certified(ptr::null()), -1);

        let junk = CString::new("{\"scheme\":").unwrap();
        let mut t = ptr::null_mut();
        assert_eq!(gc_table_from_jsonl(junk.as_ptr(), &mut t), GcStatus::Parse);

        let mut v = 0.0;
        assert_eq!(gc_classical_bound_swap(2, 0, 4, &mut v), GcStatus::InvalidArgument);
        assert_eq!(gc_classical_bound_swap(2, 0, 3, &mut v), GcStatus::Ok);
        assert!(gc_last_error().is_null());

        gc_string_free(ptr::null_mut());
        gc_realization_free(ptr::null_mut());
    }
}

#[test]
fn classical_bounds() {
    let mut v = 0.0;
    unsafe {
        assert_eq!(gc_classical_bound_ghz(2, 3, &mut v), GcStatus::Ok);
        assert!((v - (2f64.sqrt() + 1.0)).abs() < 1e-12);
        assert_eq!(gc_classical_bound_swap(3, 2, 1, &mut v), GcStatus::Ok);
        assert!((v - 2f64.sqrt()).abs() < 1e-12);
    }
}

#[test]
fn header_is_valid_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/gatecert.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for sym in ["gc_certify_table", "gc_last_error", "typedef struct GcTable GcTable", "GC_STATUS_NOT_CERTIFIED"] {
        assert!(text.contains(sym), "header lacks {sym}");
    }
    let Ok(out) = Command::new("cc").args(["-fsyntax-only", "-x", "c"]).arg(&header).output() else {
        eprintln!("no C compiler; syntax check skipped");
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
