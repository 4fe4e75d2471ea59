use std::ffi::{CStr, CString};
use std::ptr;

use mmc_ffi::*;

fn last_error() -> String {
    let p = mmc_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn generate(name: &str, n: usize) -> *mut MmcDataset {
    let name = CString::new(name).unwrap();
    let mut ds = ptr::null_mut();
    assert_eq!(unsafe { mmc_dataset_generate(name.as_ptr(), n, 3, &mut ds) }, MmcStatus::Ok);
    ds
}

#[test]
fn cluster_round_trip() {
    let ds = generate("3g", 600);
    assert_eq!(unsafe { mmc_dataset_len(ds) }, 600);
    assert_eq!(unsafe { mmc_dataset_dim(ds) }, 2);

    let mut params = std::mem::MaybeUninit::<MmcClusterParams>::uninit();
    assert_eq!(
        unsafe { mmc_params_default(MmcKernel::IkHypersphere, 16.0, 3, params.as_mut_ptr()) },
        MmcStatus::Ok
    );
    let mut params = unsafe { params.assume_init() };
    params.tau = 0.3;
    params.s = 200;
    params.t = 100;

    let mut a = ptr::null_mut();
    assert_eq!(unsafe { mmc_cluster(ds, &params, &mut a) }, MmcStatus::Ok);
    let n = unsafe { mmc_assignment_len(a) };
    assert_eq!(n, 600);
    let mut pred = vec![0usize; n];
    let mut truth = vec![0usize; n];
    assert_eq!(unsafe { mmc_assignment_labels(a, pred.as_mut_ptr(), n) }, MmcStatus::Ok);
    assert_eq!(unsafe { mmc_dataset_labels(ds, truth.as_mut_ptr(), n) }, MmcStatus::Ok);
    assert!(pred.iter().all(|&l| l < 3));
    assert!(unsafe { mmc_assignment_objective(a) } >= unsafe { mmc_assignment_objective_before_refine(a) });

    let mut f1 = 0.0;
    let mut ami = 0.0;
    assert_eq!(unsafe { mmc_f1_score(pred.as_ptr(), truth.as_ptr(), n, &mut f1) }, MmcStatus::Ok);
    assert_eq!(unsafe { mmc_ami_score(pred.as_ptr(), truth.as_ptr(), n, &mut ami) }, MmcStatus::Ok);
    assert!(f1 > 0.9, "f1 = {f1}");
    assert!(ami > 0.7, "ami = {ami}");

    unsafe {
        mmc_assignment_free(a);
        mmc_dataset_free(ds);
    }
}

#[test]
fn dataset_from_buffers_and_normalize() {
    let pts = [2.0, 10.0, 4.0, 10.0, 6.0, 10.0];
    let labels = [0usize, 0, 1];
    let mut ds = ptr::null_mut();
    assert_eq!(
        unsafe { mmc_dataset_new(pts.as_ptr(), 3, 2, labels.as_ptr(), &mut ds) },
        MmcStatus::Ok
    );
    let mut norm = ptr::null_mut();
    assert_eq!(unsafe { mmc_dataset_normalize(ds, &mut norm) }, MmcStatus::Ok);
    let mut out = [9.0; 6];
    assert_eq!(unsafe { mmc_dataset_points(norm, out.as_mut_ptr(), 6) }, MmcStatus::Ok);
    assert_eq!(out, [0.0, 0.0, 0.5, 0.0, 1.0, 0.0]);
    assert_eq!(unsafe { mmc_dataset_points(norm, out.as_mut_ptr(), 5) }, MmcStatus::Config);
    unsafe {
        mmc_dataset_free(norm);
        mmc_dataset_free(ds);
    }
}

#[test]
fn ik_similarity_and_errors() {
    let ds = generate("2gaussians", 200);
    let mut m = ptr::null_mut();
    assert_eq!(
        unsafe { mmc_ik_fit(ds, 8, 50, MmcMechanism::Voronoi, 1, &mut m) },
        MmcStatus::Ok
    );
    let x = [0.2, 0.3];
    let mut s = -1.0;
    assert_eq!(unsafe { mmc_ik_similarity(m, x.as_ptr(), x.as_ptr(), 2, &mut s) }, MmcStatus::Ok);
    assert_eq!(s, 1.0);
    assert_eq!(
        unsafe { mmc_ik_similarity(m, x.as_ptr(), x.as_ptr(), 1, &mut s) },
        MmcStatus::Data
    );
    assert!(last_error().contains("dimension"));
    unsafe {
        mmc_ik_free(m);
        mmc_dataset_free(ds);
    }
}

#[test]
fn status_codes() {
    assert_eq!(unsafe { mmc_cluster(ptr::null(), ptr::null(), ptr::null_mut()) }, MmcStatus::Null);
    assert!(last_error().contains("out"));

    let bad = CString::new("jain").unwrap();
    let mut ds = ptr::null_mut();
    assert_eq!(unsafe { mmc_dataset_generate(bad.as_ptr(), 10, 0, &mut ds) }, MmcStatus::Config);
    assert!(ds.is_null());

    let ds = generate("3g", 300);
    let mut params = std::mem::MaybeUninit::<MmcClusterParams>::uninit();
    unsafe { mmc_params_default(MmcKernel::GaussianNystrom, 0.1, 3, params.as_mut_ptr()) };
    let mut params = unsafe { params.assume_init() };
    params.s = 1000;
    let mut a = ptr::null_mut();
    assert_eq!(unsafe { mmc_cluster(ds, &params, &mut a) }, MmcStatus::Data);

    params.s = 100;
    params.kernel = MmcKernel::IkVoronoi;
    params.kernel_param = 2.5;
    assert_eq!(unsafe { mmc_cluster(ds, &params, &mut a) }, MmcStatus::Config);

    params.kernel_param = 2.0;
    params.tau = 0.01;
    assert_eq!(unsafe { mmc_cluster(ds, &params, &mut a) }, MmcStatus::Algorithm);
    assert!(last_error().contains("components"));
    assert!(a.is_null());

    let truth = [0usize, 1];
    let mut v = 0.0;
    assert_eq!(unsafe { mmc_f1_score(truth.as_ptr(), ptr::null(), 2, &mut v) }, MmcStatus::Null);
    unsafe { mmc_dataset_free(ds) };
}

#[test]
fn free_accepts_null() {
    unsafe {
        mmc_dataset_free(ptr::null_mut());
        mmc_assignment_free(ptr::null_mut());
        mmc_ik_free(ptr::null_mut());
    }
    assert_eq!(unsafe { mmc_dataset_len(ptr::null()) }, 0);
    assert!(unsafe { mmc_assignment_objective(ptr::null()) }.is_nan());
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/mmc.h")).unwrap();
    let src = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/src/lib.rs")).unwrap();
    let exports: Vec<&str> = src
        .lines()
        .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
        .filter_map(|rest| rest.split('(').next())
        .filter(|name| name.starts_with("mmc_"))
        .collect();
    assert!(exports.len() >= 20);
    for name in exports {
        assert!(header.contains(&format!("{name}(")), "{name} missing from header");
    }
}

#[test]
fn header_compiles_as_c() {
    let Ok(status) = std::process::Command::new("cc")
        .args(["-fsyntax-only", "-std=c99", "-Wall", "-Werror", "-x", "c"])
        .arg(concat!(env!("CARGO_MANIFEST_DIR"), "/include/mmc.h"))
        .status()
    else {
        eprintln!("no C compiler; skipping");
        return;
    };
    assert!(status.success());
}
