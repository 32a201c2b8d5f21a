use std::ffi::{CStr, CString};
use std::path::Path;
use std::ptr;

use chainscope_ffi::*;

fn fixture() -> CString {
    let p = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures/synthetic");
    CString::new(p.to_str().unwrap()).unwrap()
}

fn last_error() -> String {
    let p = cs_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_string()
}

#[test]
fn store_roundtrip() {
    let mut store: *mut CsStore = ptr::null_mut();
    unsafe {
        assert_eq!(cs_store_open(fixture().as_ptr(), 0, &mut store), CsStatus::Ok);
        assert!(cs_last_error().is_null());
        let mut max = 0u64;
        assert_eq!(cs_store_max_block(store, &mut max), CsStatus::Ok);
        assert_eq!(max, 360_000);
        let mut n = 0u64;
        assert_eq!(cs_store_account_count(store, &mut n), CsStatus::Ok);
        assert!(n > 50);
        let mut is_sc = 9u8;
        let m = CString::new("0xc000000000000000000000000000000000000001").unwrap();
        assert_eq!(cs_store_is_contract(store, m.as_ptr(), &mut is_sc), CsStatus::Ok);
        assert_eq!(is_sc, 1);
        let bad = CString::new("0x12").unwrap();
        assert_eq!(cs_store_is_contract(store, bad.as_ptr(), &mut is_sc), CsStatus::InvalidArgument);
        cs_store_free(store);
        cs_store_free(ptr::null_mut());
    }
}

#[test]
fn missing_directory_sets_error() {
    let mut store: *mut CsStore = ptr::null_mut();
    let dir = CString::new("/nonexistent/chainscope").unwrap();
    let status = unsafe { cs_store_open(dir.as_ptr(), 0, &mut store) };
    assert_eq!(status, CsStatus::Io);
    assert!(store.is_null());
    assert!(!last_error().is_empty());
}

#[test]
fn null_arguments_are_rejected() {
    let mut out = 0u64;
    unsafe {
        assert_eq!(cs_store_max_block(ptr::null(), &mut out), CsStatus::NullPointer);
        assert_eq!(cs_segment_count(ptr::null(), 10, &mut out), CsStatus::NullPointer);
        let name = CString::new("1day").unwrap();
        assert_eq!(cs_segment_count(name.as_ptr(), 10, ptr::null_mut()), CsStatus::NullPointer);
    }
    assert!(last_error().contains("null"));
}

#[test]
fn segment_counts() {
    let mut out = 0u64;
    for (name, want) in [("1day", 1792), ("3day", 598), ("1month", 60), ("all", 1)] {
        let n = CString::new(name).unwrap();
        assert_eq!(unsafe { cs_segment_count(n.as_ptr(), 10_747_845, &mut out) }, CsStatus::Ok);
        assert_eq!(out, want, "{name}");
    }
    let n = CString::new("weekly").unwrap();
    assert_eq!(unsafe { cs_segment_count(n.as_ptr(), 10, &mut out) }, CsStatus::InvalidArgument);
}

#[test]
fn scores_and_similarity() {
    let mut s = 0.0;
    let letters = CString::new("HMMMLL").unwrap();
    assert_eq!(unsafe { cs_severity_score(letters.as_ptr(), &mut s) }, CsStatus::Ok);
    assert!((s - 11.0 / 6.0).abs() < 1e-12);
    let bad = CString::new("HX").unwrap();
    assert_eq!(unsafe { cs_severity_score(bad.as_ptr(), &mut s) }, CsStatus::InvalidArgument);

    let u = [1.0, 2.0, 0.0];
    let v = [2.0, 4.0, 0.0];
    let z = [0.0; 3];
    let mut c = 0.0;
    assert_eq!(unsafe { cs_cosine_similarity(u.as_ptr(), v.as_ptr(), 3, &mut c) }, CsStatus::Ok);
    assert!((c - 1.0).abs() < 1e-12);
    assert_eq!(unsafe { cs_cosine_similarity(u.as_ptr(), z.as_ptr(), 3, &mut c) }, CsStatus::Ok);
    assert_eq!(c, 0.0);
}

#[test]
fn pipeline_through_handles() {
    let tmp = tempfile::tempdir().unwrap();
    let conf = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures/synthetic/pipeline.conf");
    let conf = CString::new(conf.to_str().unwrap()).unwrap();
    let out = CString::new(tmp.path().to_str().unwrap()).unwrap();
    let mut cfg: *mut CsConfig = ptr::null_mut();
    let mut summary = CsRunSummary::default();
    unsafe {
        assert_eq!(cs_config_load(conf.as_ptr(), &mut cfg), CsStatus::Ok);
        assert_eq!(cs_config_set_out(cfg, out.as_ptr()), CsStatus::Ok);
        let stage = CString::new("dedup").unwrap();
        assert_eq!(cs_run_pipeline(cfg, stage.as_ptr(), &mut summary), CsStatus::Ok);
        assert_eq!(summary.malicious, 1);
        assert!(tmp.path().join("expansion.csv").exists());
        let bogus = CString::new("sideways").unwrap();
        assert_eq!(cs_run_pipeline(cfg, bogus.as_ptr(), &mut summary), CsStatus::InvalidArgument);
        cs_config_free(cfg);
    }
}

#[test]
fn bad_config_reports_config_status() {
    let tmp = tempfile::tempdir().unwrap();
    let p = tmp.path().join("bad.conf");
    std::fs::write(&p, "dataset = .\nbogus = 1\n").unwrap();
    let p = CString::new(p.to_str().unwrap()).unwrap();
    let mut cfg: *mut CsConfig = ptr::null_mut();
    assert_eq!(unsafe { cs_config_load(p.as_ptr(), &mut cfg) }, CsStatus::Config);
    assert!(last_error().contains("bogus"));
}

#[test]
fn header_declares_every_export() {
    let h = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("include/chainscope.h")).unwrap();
    for f in [
        "cs_last_error",
        "cs_version",
        "cs_store_open",
        "cs_store_free",
        "cs_store_max_block",
        "cs_store_account_count",
        "cs_store_is_contract",
        "cs_segment_count",
        "cs_severity_score",
        "cs_cosine_similarity",
        "cs_config_load",
        "cs_config_new",
        "cs_config_set_out",
        "cs_config_free",
        "cs_run_pipeline",
        "typedef struct CsStore CsStore",
        "CS_STATUS_PANIC = 7",
    ] {
        assert!(h.contains(f), "{f} missing from header");
    }
    let v = unsafe { CStr::from_ptr(cs_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}
