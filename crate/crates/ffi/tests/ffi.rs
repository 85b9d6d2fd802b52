use std::ffi::{CStr, CString};
use std::fs;
use std::path::Path;
use std::process::Command;
use std::ptr;

use sphh_ffi::*;

const SPEC: &str = "seed = 5\nnode_types = P:40,A:20,F:8\nanchor_type = P\nattr_dim = 4\ncommunities = 2\n\
                    hyperedges = 40\nmembers = A:1-2,F:1\nnoise = 0.1\n";

const RUN: &str = "dataset = data/manifest.txt\nencoder = sage\nlayers = 1\nhidden_dim = 5\nmlp_hidden = 5\n\
                   epochs = 1\nbatch_size = 16\nseeds = 3\n";

fn c(p: &Path) -> CString {
    CString::new(p.to_str().unwrap()).unwrap()
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(sphh_last_error()) }.to_string_lossy().into_owned()
}

fn generated(dir: &Path) -> *mut SphhDataset {
    fs::write(dir.join("spec.txt"), SPEC).unwrap();
    let mut ds = ptr::null_mut();
    assert_eq!(unsafe { sphh_dataset_generate(c(&dir.join("spec.txt")).as_ptr(), &mut ds) }, SphhStatus::Ok);
    assert!(!ds.is_null());
    ds
}

fn counts(ds: *const SphhDataset) -> (usize, usize, usize) {
    let (mut n, mut e, mut t) = (0, 0, 0);
    assert_eq!(unsafe { sphh_dataset_counts(ds, &mut n, &mut e, &mut t) }, SphhStatus::Ok);
    (n, e, t)
}

#[test]
fn version_matches_crate() {
    let v = unsafe { CStr::from_ptr(sphh_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn dataset_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let ds = generated(dir.path());
    assert_eq!(counts(ds), (68, 40, 3));
    let out = dir.path().join("data");
    assert_eq!(unsafe { sphh_dataset_write(ds, c(&out).as_ptr()) }, SphhStatus::Ok);

    let mut back = ptr::null_mut();
    assert_eq!(unsafe { sphh_dataset_load(c(&out.join("manifest.txt")).as_ptr(), &mut back) }, SphhStatus::Ok);
    assert_eq!(counts(back), counts(ds));
    let mut total = 0;
    for split in 0..5 {
        let (mut a, mut b) = (0, 0);
        assert_eq!(unsafe { sphh_dataset_split_size(ds, split, &mut a) }, SphhStatus::Ok);
        assert_eq!(unsafe { sphh_dataset_split_size(back, split, &mut b) }, SphhStatus::Ok);
        assert_eq!(a, b);
        total += a;
    }
    assert_eq!(total, 40);
    let mut x = 0;
    assert_eq!(unsafe { sphh_dataset_split_size(ds, 5, &mut x) }, SphhStatus::InvalidArgument);
    unsafe {
        sphh_dataset_free(ds);
        sphh_dataset_free(back);
    }
}

#[test]
fn counts_accept_null_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let ds = generated(dir.path());
    let mut t = 0;
    assert_eq!(unsafe { sphh_dataset_counts(ds, ptr::null_mut(), ptr::null_mut(), &mut t) }, SphhStatus::Ok);
    assert_eq!(t, 3);
    unsafe { sphh_dataset_free(ds) };
}

#[test]
fn errors_set_status_and_message() {
    let dir = tempfile::tempdir().unwrap();
    let mut ds = 1 as *mut SphhDataset;
    let missing = c(&dir.path().join("nope.txt"));
    assert_eq!(unsafe { sphh_dataset_load(missing.as_ptr(), &mut ds) }, SphhStatus::Io);
    assert!(ds.is_null());
    assert!(last_error().contains("nope.txt"), "{}", last_error());

    fs::write(dir.path().join("bad.txt"), "seed = 1\ncommunities = zero\n").unwrap();
    let bad = c(&dir.path().join("bad.txt"));
    assert_eq!(unsafe { sphh_dataset_generate(bad.as_ptr(), &mut ds) }, SphhStatus::Config);
    assert!(!last_error().is_empty());

    assert_eq!(unsafe { sphh_dataset_load(ptr::null(), &mut ds) }, SphhStatus::NullPointer);
    assert_eq!(unsafe { sphh_dataset_load(missing.as_ptr(), ptr::null_mut()) }, SphhStatus::NullPointer);
    assert_eq!(unsafe { sphh_dataset_counts(ptr::null(), ptr::null_mut(), ptr::null_mut(), ptr::null_mut()) }, SphhStatus::NullPointer);
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { sphh_model_load(missing.as_ptr(), &mut m) }, SphhStatus::Io);
    assert_eq!(unsafe { sphh_pretrain(missing.as_ptr(), &mut m) }, SphhStatus::Io);

    // success clears the message
    assert!(!last_error().is_empty());
    counts(generated(dir.path()));
    assert_eq!(last_error(), "");
    unsafe {
        sphh_dataset_free(ptr::null_mut());
        sphh_model_free(ptr::null_mut());
    }
}

#[test]
fn pretrain_save_load_encode() {
    let dir = tempfile::tempdir().unwrap();
    let ds = generated(dir.path());
    assert_eq!(unsafe { sphh_dataset_write(ds, c(&dir.path().join("data")).as_ptr()) }, SphhStatus::Ok);
    fs::write(dir.path().join("run.txt"), RUN).unwrap();

    let mut model = ptr::null_mut();
    assert_eq!(unsafe { sphh_pretrain(c(&dir.path().join("run.txt")).as_ptr(), &mut model) }, SphhStatus::Ok, "{}", last_error());
    let mut dim = 0;
    assert_eq!(unsafe { sphh_model_embedding_dim(model, &mut dim) }, SphhStatus::Ok);
    assert_eq!(dim, 5);

    let (n, _, _) = counts(ds);
    let mut small = vec![7.0; n * dim - 1];
    assert_eq!(unsafe { sphh_model_encode(model, ds, small.as_mut_ptr(), small.len()) }, SphhStatus::BufferTooSmall);
    assert!(small.iter().all(|&v| v == 7.0));
    assert_eq!(unsafe { sphh_model_encode(model, ds, ptr::null_mut(), 0) }, SphhStatus::NullPointer);

    let mut a = vec![0.0; n * dim];
    assert_eq!(unsafe { sphh_model_encode(model, ds, a.as_mut_ptr(), a.len()) }, SphhStatus::Ok);
    assert!(a.iter().all(|v| v.is_finite()));
    assert!(a.iter().any(|&v| v != 0.0));

    let ckpt = dir.path().join("enc.ckpt");
    assert_eq!(unsafe { sphh_model_save(model, c(&ckpt).as_ptr()) }, SphhStatus::Ok);
    let mut loaded = ptr::null_mut();
    assert_eq!(unsafe { sphh_model_load(c(&ckpt).as_ptr(), &mut loaded) }, SphhStatus::Ok, "{}", last_error());
    let mut b = vec![0.0; n * dim];
    assert_eq!(unsafe { sphh_model_encode(loaded, ds, b.as_mut_ptr(), b.len()) }, SphhStatus::Ok);
    assert_eq!(a, b);

    // a checkpoint written twice is byte identical
    let again = dir.path().join("again.ckpt");
    assert_eq!(unsafe { sphh_model_save(loaded, c(&again).as_ptr()) }, SphhStatus::Ok);
    assert_eq!(fs::read(&ckpt).unwrap(), fs::read(&again).unwrap());

    let mut twin = ptr::null_mut();
    assert_eq!(unsafe { sphh_pretrain(c(&dir.path().join("run.txt")).as_ptr(), &mut twin) }, SphhStatus::Ok);
    let mut t = vec![0.0; n * dim];
    assert_eq!(unsafe { sphh_model_encode(twin, ds, t.as_mut_ptr(), t.len()) }, SphhStatus::Ok);
    assert_eq!(a, t);

    unsafe {
        sphh_model_free(model);
        sphh_model_free(loaded);
        sphh_model_free(twin);
        sphh_dataset_free(ds);
    }
}

#[test]
fn corrupt_checkpoint_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("junk.ckpt");
    fs::write(&p, "not a checkpoint\n").unwrap();
    let mut m = ptr::null_mut();
    let st = unsafe { sphh_model_load(c(&p).as_ptr(), &mut m) };
    assert_eq!(st, SphhStatus::Config);
    assert!(m.is_null());
}

#[test]
fn header_declares_every_export() {
    let header = fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/sphh.h")).unwrap();
    for name in [
        "sphh_version",
        "sphh_last_error",
        "sphh_dataset_load",
        "sphh_dataset_generate",
        "sphh_dataset_write",
        "sphh_dataset_counts",
        "sphh_dataset_split_size",
        "sphh_dataset_free",
        "sphh_model_load",
        "sphh_pretrain",
        "sphh_model_save",
        "sphh_model_embedding_dim",
        "sphh_model_encode",
        "sphh_model_free",
        "typedef struct SphhDataset SphhDataset;",
        "typedef struct SphhModel SphhModel;",
        "SPHH_STATUS_BUFFER_TOO_SMALL = 6",
    ] {
        assert!(header.contains(name), "{name} missing from header");
    }
}

#[test]
fn header_compiles_as_c() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/sphh.h");
    let Ok(o) = Command::new("cc").args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c", header]).output() else {
        eprintln!("no C compiler, skipping");
        return;
    };
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}
