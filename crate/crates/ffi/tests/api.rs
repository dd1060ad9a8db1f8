use std::ffi::{CStr, CString};
use std::ptr;

use bnsl_ffi::*;
use tempfile::tempdir;

fn last_error() -> String {
    unsafe { CStr::from_ptr(bnsl_last_error_message()) }
        .to_string_lossy()
        .into_owned()
}

/// X2 copies X1, X3 is noise.
fn values() -> Vec<u32> {
    let mut v = Vec::new();
    for i in 0..60u32 {
        let a = i % 2;
        v.extend([a, a, (i / 7) % 2]);
    }
    v
}

fn dataset() -> *mut BnslDataset {
    let v = values();
    let mut d = ptr::null_mut();
    let st = unsafe { bnsl_dataset_from_values(v.as_ptr(), 60, 3, &mut d) };
    assert_eq!(st, BnslStatus::Ok);
    d
}

#[test]
fn learn_matches_reference_and_rescoring() {
    let d = dataset();
    let work = tempdir().unwrap();
    let workdir = CString::new(work.path().to_str().unwrap()).unwrap();
    unsafe {
        let (mut vars, mut records) = (0, 0);
        assert_eq!(bnsl_dataset_shape(d, &mut vars, &mut records), BnslStatus::Ok);
        assert_eq!((vars, records), (3, 60));

        let mut opts = std::mem::zeroed();
        assert_eq!(bnsl_learn_options_default(&mut opts), BnslStatus::Ok);
        assert_eq!(opts.beam, 5);
        opts.workdir = workdir.as_ptr();
        let mut net = ptr::null_mut();
        assert_eq!(bnsl_learn(d, &opts, &mut net), BnslStatus::Ok, "{}", last_error());
        assert_eq!(last_error(), "");

        let mut score = 0.0;
        assert_eq!(bnsl_network_summary(net, &mut vars, &mut score), BnslStatus::Ok);
        assert_eq!(vars, 3);
        let mut masks = [0u64; 3];
        for (i, m) in masks.iter_mut().enumerate() {
            assert_eq!(bnsl_network_parents(net, i, m), BnslStatus::Ok);
        }
        // the copied pair is linked one way or the other
        assert!(masks[0] == 0b010 || masks[1] == 0b001);

        let mut rescored = 0.0;
        assert_eq!(bnsl_score_network(d, masks.as_ptr(), 3, &mut rescored), BnslStatus::Ok);
        assert!((rescored - score).abs() <= 1e-9 * score.abs());

        let mut reference = ptr::null_mut();
        assert_eq!(bnsl_dp_optimal(d, &mut reference), BnslStatus::Ok);
        let mut best = 0.0;
        bnsl_network_summary(reference, &mut vars, &mut best);
        assert!((best - score).abs() <= 1e-9 * best.abs());

        let mut m = 0;
        assert_eq!(bnsl_network_parents(net, 3, &mut m), BnslStatus::Range);
        assert!(last_error().contains("out of range"));

        bnsl_network_free(reference);
        bnsl_network_free(net);
        bnsl_dataset_free(d);
    }
}

#[test]
fn errors_map_to_status_codes() {
    unsafe {
        let mut d = ptr::null_mut();
        assert_eq!(
            bnsl_dataset_from_values(ptr::null(), 1, 1, &mut d),
            BnslStatus::NullPointer
        );
        let v = [0u32; 4];
        assert_eq!(
            bnsl_dataset_from_values(v.as_ptr(), 4, 0, &mut d),
            BnslStatus::InvalidArgument
        );

        let path = CString::new("/nonexistent/data.csv").unwrap();
        let missing = CString::new("?").unwrap();
        assert_eq!(
            bnsl_dataset_load_csv(path.as_ptr(), b',', missing.as_ptr(), true, 4, &mut d),
            BnslStatus::Io
        );
        assert!(last_error().contains("nonexistent"));

        let d = dataset();
        let cyclic = [0b010u64, 0b001, 0];
        let mut s = 0.0;
        assert_eq!(bnsl_score_network(d, cyclic.as_ptr(), 3, &mut s), BnslStatus::Cyclic);

        let work = tempdir().unwrap();
        let workdir = CString::new(work.path().to_str().unwrap()).unwrap();
        let mut opts = std::mem::zeroed();
        bnsl_learn_options_default(&mut opts);
        opts.workdir = workdir.as_ptr();
        opts.has_upper = true;
        opts.upper = 1.0;
        let mut net = ptr::null_mut();
        assert_eq!(bnsl_learn(d, &opts, &mut net), BnslStatus::Unreachable);
        assert!(net.is_null());

        opts.workdir = ptr::null();
        assert_eq!(bnsl_learn(d, &opts, &mut net), BnslStatus::NullPointer);
        bnsl_dataset_free(d);
        bnsl_dataset_free(ptr::null_mut());
        bnsl_network_free(ptr::null_mut());
    }
}

#[test]
fn loads_csv_files() {
    let dir = tempdir().unwrap();
    let file = dir.path().join("d.csv");
    std::fs::write(&file, "a;b\nx;1\ny;2\n?;2\nx;1\n").unwrap();
    let path = CString::new(file.to_str().unwrap()).unwrap();
    let missing = CString::new("?").unwrap();
    unsafe {
        let mut d = ptr::null_mut();
        let st = bnsl_dataset_load_csv(path.as_ptr(), b';', missing.as_ptr(), true, 4, &mut d);
        assert_eq!(st, BnslStatus::Ok, "{}", last_error());
        let (mut vars, mut records) = (0, 0);
        bnsl_dataset_shape(d, &mut vars, &mut records);
        assert_eq!((vars, records), (2, 3));
        bnsl_dataset_free(d);
    }
}

#[test]
fn version_is_set() {
    let v = unsafe { CStr::from_ptr(bnsl_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}
