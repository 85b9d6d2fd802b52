//! C ABI over the `sphh` library.
//!
//! Every function returns an [`SphhStatus`]. On failure the message is
//! available from [`sphh_last_error`] on the same thread until the next
//! call. Handles are opaque and must be released with the matching
//! `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use sphh::autograd::Graph;
use sphh::checkpoint::Checkpoint;
use sphh::config::RunConfig;
use sphh::data::{self, Dataset, Split, SyntheticSpec};
use sphh::encoder::NodeFeatures;
use sphh::expansion::{clique_expand, NodeRef};
use sphh::finetune::{Backbone, Init};
use sphh::nn::Dropout;
use sphh::pretrain::pretrain;
use sphh::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SphhStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Io = 4,
    Runtime = 5,
    BufferTooSmall = 6,
    Panic = 7,
}

/// A loaded or generated dataset.
pub struct SphhDataset {
    inner: Dataset,
}

/// A BASE encoder with its weights.
pub struct SphhModel {
    backbone: Backbone,
    checkpoint: Checkpoint,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).expect("nul bytes removed"));
}

fn status_of(e: &Error) -> SphhStatus {
    match e {
        Error::Io { .. } => SphhStatus::Io,
        Error::Config(_) | Error::Parse { .. } | Error::Checkpoint(_) => SphhStatus::Config,
        _ => SphhStatus::Runtime,
    }
}

struct Failure(SphhStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SphhStatus {
    set_error("");
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SphhStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            SphhStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(SphhStatus::NullPointer, format!("{what} is null"))
}

unsafe fn path_arg(p: *const c_char, what: &str) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    let s = unsafe { CStr::from_ptr(p) }
        .to_str()
        .map_err(|_| Failure(SphhStatus::InvalidArgument, format!("{what} is not UTF-8")))?;
    Ok(PathBuf::from(s))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    unsafe { p.as_mut() }.ok_or_else(|| null(what))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    unsafe { p.as_ref() }.ok_or_else(|| null(what))
}

/// Library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn sphh_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn sphh_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Loads the dataset described by the manifest at `manifest_path`.
///
/// # Safety
/// `manifest_path` must be a nul-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sphh_dataset_load(manifest_path: *const c_char, out: *mut *mut SphhDataset) -> SphhStatus {
    guard(|| {
        let out = unsafe { out_arg(out, "out") }?;
        *out = ptr::null_mut();
        let path = unsafe { path_arg(manifest_path, "manifest_path") }?;
        let inner = data::load(&path)?;
        *out = Box::into_raw(Box::new(SphhDataset { inner }));
        Ok(())
    })
}

/// Generates a planted-community dataset from the spec file at `spec_path`.
///
/// # Safety
/// `spec_path` must be a nul-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sphh_dataset_generate(spec_path: *const c_char, out: *mut *mut SphhDataset) -> SphhStatus {
    guard(|| {
        let out = unsafe { out_arg(out, "out") }?;
        *out = ptr::null_mut();
        let path = unsafe { path_arg(spec_path, "spec_path") }?;
        let spec = SyntheticSpec::read(&path)?;
        let inner = data::generate_synthetic(&spec)?.dataset;
        *out = Box::into_raw(Box::new(SphhDataset { inner }));
        Ok(())
    })
}

/// Writes the dataset's files and `manifest.txt` into `dir`.
///
/// # Safety
/// `dataset` must come from this library; `dir` must be nul-terminated.
#[no_mangle]
pub unsafe extern "C" fn sphh_dataset_write(dataset: *const SphhDataset, dir: *const c_char) -> SphhStatus {
    guard(|| {
        let d = unsafe { handle(dataset, "dataset") }?;
        let dir = unsafe { path_arg(dir, "dir") }?;
        data::write(&d.inner, &dir)?;
        Ok(())
    })
}

/// Node, hyperedge and node-type counts. Any output pointer may be null.
///
/// # Safety
/// `dataset` must come from this library; non-null outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn sphh_dataset_counts(
    dataset: *const SphhDataset,
    nodes: *mut usize,
    hyperedges: *mut usize,
    node_types: *mut usize,
) -> SphhStatus {
    guard(|| {
        let h = &unsafe { handle(dataset, "dataset") }?.inner.hypergraph;
        for (p, v) in [(nodes, h.num_nodes()), (hyperedges, h.num_hyperedges()), (node_types, h.node_types().len())] {
            if let Some(p) = unsafe { p.as_mut() } {
                *p = v;
            }
        }
        Ok(())
    })
}

/// Number of hyperedges whose timestamp falls in split `split`
/// (0 pretrain, 1 preval, 2 train, 3 valid, 4 test).
///
/// # Safety
/// `dataset` must come from this library and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sphh_dataset_split_size(dataset: *const SphhDataset, split: u32, out: *mut usize) -> SphhStatus {
    guard(|| {
        let d = unsafe { handle(dataset, "dataset") }?;
        let out = unsafe { out_arg(out, "out") }?;
        let s = *Split::ALL
            .get(split as usize)
            .ok_or_else(|| Failure(SphhStatus::InvalidArgument, format!("split index {split} outside 0..5")))?;
        *out = d.inner.hyperedges_in(s).len();
        Ok(())
    })
}

/// Releases a dataset. Null is ignored.
///
/// # Safety
/// `dataset` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sphh_dataset_free(dataset: *mut SphhDataset) {
    if !dataset.is_null() {
        drop(unsafe { Box::from_raw(dataset) });
    }
}

fn model_from(checkpoint: Checkpoint) -> Result<SphhModel, Failure> {
    let init = Init::Pretrained(checkpoint.clone());
    let spec = sphh::encoder::EncoderSpec::from_descriptor(&checkpoint.descriptor)?;
    let backbone = Backbone::build(&init, &spec, 0)?;
    Ok(SphhModel { backbone, checkpoint })
}

/// Loads a pretrained encoder checkpoint.
///
/// # Safety
/// `checkpoint_path` must be nul-terminated and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sphh_model_load(checkpoint_path: *const c_char, out: *mut *mut SphhModel) -> SphhStatus {
    guard(|| {
        let out = unsafe { out_arg(out, "out") }?;
        *out = ptr::null_mut();
        let path = unsafe { path_arg(checkpoint_path, "checkpoint_path") }?;
        let model = model_from(Checkpoint::read(&path)?)?;
        *out = Box::into_raw(Box::new(model));
        Ok(())
    })
}

/// Pretrains with the run config at `config_path` (first configured seed)
/// and returns the resulting encoder. Nothing is written to disk.
///
/// # Safety
/// `config_path` must be nul-terminated and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sphh_pretrain(config_path: *const c_char, out: *mut *mut SphhModel) -> SphhStatus {
    guard(|| {
        let out = unsafe { out_arg(out, "out") }?;
        *out = ptr::null_mut();
        let path = unsafe { path_arg(config_path, "config_path") }?;
        let cfg = RunConfig::read(&path)?;
        let ds = data::load(&cfg.dataset)?;
        let seed = cfg.seeds[0];
        let outcome = pretrain(
            &ds.hypergraph,
            &ds.hyperedges_in(Split::Pretrain),
            &ds.hyperedges_in(Split::Preval),
            cfg.pretrain_for(seed),
        )?;
        let model = model_from(outcome.checkpoint())?;
        *out = Box::into_raw(Box::new(model));
        Ok(())
    })
}

/// Writes the encoder's checkpoint to `path`.
///
/// # Safety
/// `model` must come from this library; `path` must be nul-terminated.
#[no_mangle]
pub unsafe extern "C" fn sphh_model_save(model: *const SphhModel, path: *const c_char) -> SphhStatus {
    guard(|| {
        let m = unsafe { handle(model, "model") }?;
        let path = unsafe { path_arg(path, "path") }?;
        m.checkpoint.write(&path)?;
        Ok(())
    })
}

/// Embedding width of the encoder.
///
/// # Safety
/// `model` must come from this library and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sphh_model_embedding_dim(model: *const SphhModel, out: *mut usize) -> SphhStatus {
    guard(|| {
        let m = unsafe { handle(model, "model") }?;
        *unsafe { out_arg(out, "out") }? = m.backbone.model.hidden_dim();
        Ok(())
    })
}

/// Encodes every node of `dataset` over its full clique expansion and
/// writes a row-major `nodes x dim` matrix into `out`, rows in ascending
/// node id order. `out_len` is the capacity of `out` in doubles; when it is
/// too small nothing is written and `BUFFER_TOO_SMALL` is returned.
///
/// # Safety
/// Handles must come from this library; `out` must hold `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn sphh_model_encode(
    model: *const SphhModel,
    dataset: *const SphhDataset,
    out: *mut f64,
    out_len: usize,
) -> SphhStatus {
    guard(|| {
        let m = unsafe { handle(model, "model") }?;
        let h = &unsafe { handle(dataset, "dataset") }?.inner.hypergraph;
        if out.is_null() {
            return Err(null("out"));
        }
        let dim = m.backbone.model.hidden_dim();
        let need = h.num_nodes() * dim;
        if out_len < need {
            return Err(Failure(
                SphhStatus::BufferTooSmall,
                format!("buffer holds {out_len} doubles, {need} needed"),
            ));
        }
        let mut g = Graph::new();
        let emb = m.backbone.model.encode(
            &mut g,
            &m.backbone.store,
            &clique_expand(h).message_graph(),
            NodeFeatures::new(h),
            &mut Dropout::off(),
        )?;
        let mut ids: Vec<_> = h.nodes().iter().map(|n| n.id).collect();
        ids.sort();
        let buf = unsafe { std::slice::from_raw_parts_mut(out, need) };
        for (row, id) in buf.chunks_mut(dim).zip(ids) {
            row.copy_from_slice(&emb.vector(&g, NodeRef::Node(id))?);
        }
        Ok(())
    })
}

/// Releases a model. Null is ignored.
///
/// # Safety
/// `model` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sphh_model_free(model: *mut SphhModel) {
    if !model.is_null() {
        drop(unsafe { Box::from_raw(model) });
    }
}
