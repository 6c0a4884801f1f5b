//! C interface to cauemo.
//!
//! Every fallible function returns a status code (`CAUEMO_OK` on success)
//! and writes results through out-pointers. After a failure,
//! [`cauemo_last_error`] returns a message for the calling thread. Datasets
//! and models are opaque handles released with their `_free` functions.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::ptr;

use cauemo::autodiff::checkpoint::{load_checkpoint, save_checkpoint};
use cauemo::datasets::{self, detect_source, generate_spurious_motif, read_records, Dataset, MotifSpec, Source};
use cauemo::explain::score_dataset;
use cauemo::model::Model;
use cauemo::trainer::{self, evaluate, load_split, model_from_checkpoint, predict_probs, prepare_eval, ExperimentConfig};
use cauemo::Error;

pub const CAUEMO_OK: i32 = 0;
pub const CAUEMO_ERR_NULL_ARG: i32 = 1;
pub const CAUEMO_ERR_INVALID_ARGUMENT: i32 = 2;
pub const CAUEMO_ERR_IO: i32 = 3;
pub const CAUEMO_ERR_FORMAT: i32 = 4;
pub const CAUEMO_ERR_NUMERIC: i32 = 5;
pub const CAUEMO_ERR_CHEMISTRY: i32 = 6;
pub const CAUEMO_ERR_CHECKPOINT: i32 = 7;
pub const CAUEMO_ERR_BUFFER_TOO_SMALL: i32 = 8;
pub const CAUEMO_ERR_PANIC: i32 = 99;

/// Opaque collection of labeled graphs.
pub struct CauemoDataset {
    inner: Dataset,
}

/// Opaque trained model together with its configuration.
pub struct CauemoModel {
    model: Model,
    config: ExperimentConfig,
    config_text: String,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn code_of(e: &Error) -> i32 {
    match e {
        Error::Io { .. } => CAUEMO_ERR_IO,
        Error::Format { .. } | Error::Parse { .. } | Error::UnknownElement(_) => CAUEMO_ERR_FORMAT,
        Error::Numeric(_) | Error::Training { .. } | Error::Metric(_) => CAUEMO_ERR_NUMERIC,
        Error::Chemistry { .. } => CAUEMO_ERR_CHEMISTRY,
        Error::Checkpoint(_) => CAUEMO_ERR_CHECKPOINT,
        _ => CAUEMO_ERR_INVALID_ARGUMENT,
    }
}

enum Fail {
    Null(&'static str),
    Small { need: usize, have: usize },
    Core(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Core(e)
    }
}

/// Runs `f`, converting errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> i32 {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CAUEMO_OK,
        Ok(Err(Fail::Null(name))) => {
            set_error(format!("null pointer passed as `{name}`"));
            CAUEMO_ERR_NULL_ARG
        }
        Ok(Err(Fail::Small { need, have })) => {
            set_error(format!("buffer holds {have} values, {need} needed"));
            CAUEMO_ERR_BUFFER_TOO_SMALL
        }
        Ok(Err(Fail::Core(e))) => {
            let code = code_of(&e);
            set_error(e.to_string());
            code
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            CAUEMO_ERR_PANIC
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &'static str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail::Null(name));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail::Core(Error::arg(format!("`{name}` is not valid UTF-8"))))
}

unsafe fn path_arg(p: *const c_char, name: &'static str) -> Result<PathBuf, Fail> {
    str_arg(p, name).map(PathBuf::from)
}

unsafe fn ref_arg<'a, T>(p: *const T, name: &'static str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Null(name))
}

unsafe fn out_arg<'a, T>(p: *mut T, name: &'static str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or(Fail::Null(name))
}

/// Message describing the most recent failure on this thread, or null.
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn cauemo_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cauemo_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a records file or a TU directory. Pre-split directories load
/// their test part.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cauemo_dataset_load(path: *const c_char, out: *mut *mut CauemoDataset) -> i32 {
    guard(|| {
        let path = path_arg(path, "path")?;
        let out = out_arg(out, "out")?;
        let inner = match detect_source(&path)? {
            Source::Records => read_records(&path)?,
            Source::Tu => datasets::load_tu_dataset(&path, &Default::default())?,
            Source::PreSplit => read_records(&path.join("test.jsonl"))?,
        };
        *out = Box::into_raw(Box::new(CauemoDataset { inner }));
        Ok(())
    })
}

/// Generates `n` Spurious-Motif graphs with agreement probability `b`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cauemo_dataset_spurious_motif(
    n: usize,
    b: f64,
    seed: u64,
    out: *mut *mut CauemoDataset,
) -> i32 {
    guard(|| {
        let out = out_arg(out, "out")?;
        let inner = generate_spurious_motif(n, &MotifSpec::new(b), seed)?;
        *out = Box::into_raw(Box::new(CauemoDataset { inner }));
        Ok(())
    })
}

/// Writes the dataset as a records file.
///
/// # Safety
/// `dataset` must come from this library; `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn cauemo_dataset_save(dataset: *const CauemoDataset, path: *const c_char) -> i32 {
    guard(|| {
        let ds = ref_arg(dataset, "dataset")?;
        let path = path_arg(path, "path")?;
        datasets::write_records(&path, &ds.inner.graphs)?;
        Ok(())
    })
}

/// # Safety
/// `dataset` must come from this library and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn cauemo_dataset_len(dataset: *const CauemoDataset, out: *mut usize) -> i32 {
    guard(|| {
        let ds = ref_arg(dataset, "dataset")?;
        *out_arg(out, "out")? = ds.inner.len();
        Ok(())
    })
}

/// Label of graph `index`, or -1 for an unlabeled graph.
///
/// # Safety
/// `dataset` must come from this library and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn cauemo_dataset_label(dataset: *const CauemoDataset, index: usize, out: *mut i64) -> i32 {
    guard(|| {
        let ds = ref_arg(dataset, "dataset")?;
        let g = ds
            .inner
            .graphs
            .get(index)
            .ok_or_else(|| Error::arg(format!("graph {index} out of range for {}", ds.inner.len())))?;
        *out_arg(out, "out")? = g.label.map_or(-1, |l| l as i64);
        Ok(())
    })
}

/// # Safety
/// `dataset` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cauemo_dataset_free(dataset: *mut CauemoDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Trains with the configuration text `config` (empty for defaults) on the
/// data at `data_path` and writes a checkpoint to `checkpoint_path`. Test
/// accuracy is stored in `test_accuracy` when it is not null.
///
/// # Safety
/// String arguments must be NUL-terminated; `test_accuracy` may be null.
#[no_mangle]
pub unsafe extern "C" fn cauemo_train(
    config: *const c_char,
    data_path: *const c_char,
    checkpoint_path: *const c_char,
    test_accuracy: *mut f64,
) -> i32 {
    guard(|| {
        let cfg = ExperimentConfig::parse(str_arg(config, "config")?)?;
        let data = load_split(&path_arg(data_path, "data_path")?, &cfg)?;
        let ck = path_arg(checkpoint_path, "checkpoint_path")?;
        let outcome = trainer::train(&cfg, &data)?;
        save_checkpoint(&ck, &outcome.model.store, &outcome.config.to_text())?;
        if let Some(acc) = test_accuracy.as_mut() {
            *acc = outcome.report.test.accuracy;
        }
        Ok(())
    })
}

/// # Safety
/// `path` must be NUL-terminated and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn cauemo_model_load(path: *const c_char, out: *mut *mut CauemoModel) -> i32 {
    guard(|| {
        let path = path_arg(path, "path")?;
        let out = out_arg(out, "out")?;
        let ck = load_checkpoint(Path::new(&path))?;
        let (model, config) = model_from_checkpoint(&ck)?;
        *out = Box::into_raw(Box::new(CauemoModel {
            model,
            config,
            config_text: ck.config_text,
        }));
        Ok(())
    })
}

/// # Safety
/// `model` must come from this library and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn cauemo_model_num_classes(model: *const CauemoModel, out: *mut usize) -> i32 {
    guard(|| {
        let m = ref_arg(model, "model")?;
        *out_arg(out, "out")? = m.model.config.num_classes;
        Ok(())
    })
}

/// Copies the model's canonical configuration text into `buf` (NUL
/// terminated) when it fits, and always stores the needed size including
/// the terminator in `needed`.
///
/// # Safety
/// `buf` must hold `len` bytes or be null with `len == 0`.
#[no_mangle]
pub unsafe extern "C" fn cauemo_model_config(
    model: *const CauemoModel,
    buf: *mut c_char,
    len: usize,
    needed: *mut usize,
) -> i32 {
    guard(|| {
        let m = ref_arg(model, "model")?;
        let bytes = m.config_text.as_bytes();
        *out_arg(needed, "needed")? = bytes.len() + 1;
        if len < bytes.len() + 1 {
            return Err(Fail::Small {
                need: bytes.len() + 1,
                have: len,
            });
        }
        if buf.is_null() {
            return Err(Fail::Null("buf"));
        }
        ptr::copy_nonoverlapping(bytes.as_ptr().cast(), buf, bytes.len());
        *buf.add(bytes.len()) = 0;
        Ok(())
    })
}

fn featurized(m: &CauemoModel, ds: &CauemoDataset) -> Result<Dataset, Fail> {
    let mut d = ds.inner.clone();
    prepare_eval(&mut d, &m.config)?;
    Ok(d)
}

/// Class probabilities, row-major `[graphs, classes]`, into `probs`, which
/// must hold at least `graphs * classes` values.
///
/// # Safety
/// `probs` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn cauemo_model_predict(
    model: *const CauemoModel,
    dataset: *const CauemoDataset,
    probs: *mut f64,
    len: usize,
) -> i32 {
    guard(|| {
        let m = ref_arg(model, "model")?;
        let ds = featurized(m, ref_arg(dataset, "dataset")?)?;
        let need = ds.len() * m.model.config.num_classes;
        if len < need {
            return Err(Fail::Small { need, have: len });
        }
        if probs.is_null() {
            return Err(Fail::Null("probs"));
        }
        let p = predict_probs(&m.model, &ds, m.config.eval_batch_size)?;
        ptr::copy_nonoverlapping(p.as_ptr(), probs, p.len());
        Ok(())
    })
}

/// Accuracy and ROC-AUC on a labeled dataset; AUC is NaN when undefined.
///
/// # Safety
/// Handles must come from this library; out-pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn cauemo_model_evaluate(
    model: *const CauemoModel,
    dataset: *const CauemoDataset,
    accuracy: *mut f64,
    auc: *mut f64,
) -> i32 {
    guard(|| {
        let m = ref_arg(model, "model")?;
        let ds = featurized(m, ref_arg(dataset, "dataset")?)?;
        let acc = out_arg(accuracy, "accuracy")?;
        let auc = out_arg(auc, "auc")?;
        let r = evaluate(&m.model, &ds, m.config.eval_batch_size)?;
        *acc = r.accuracy;
        *auc = r.auc.unwrap_or(f64::NAN);
        Ok(())
    })
}

/// Environment probability `p_uv` of every edge of graph `index`, in the
/// graph's edge order. `needed` receives the edge count.
///
/// # Safety
/// `p` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn cauemo_model_edge_scores(
    model: *const CauemoModel,
    dataset: *const CauemoDataset,
    index: usize,
    p: *mut f64,
    len: usize,
    needed: *mut usize,
) -> i32 {
    guard(|| {
        let m = ref_arg(model, "model")?;
        let ds = ref_arg(dataset, "dataset")?;
        let g = ds
            .inner
            .graphs
            .get(index)
            .ok_or_else(|| Error::arg(format!("graph {index} out of range for {}", ds.inner.len())))?;
        let single = CauemoDataset {
            inner: Dataset::new("single", vec![g.clone()]),
        };
        let one = featurized(m, &single)?;
        let scores = score_dataset(&m.model, &one, 1)?;
        *out_arg(needed, "needed")? = scores.len();
        if len < scores.len() {
            return Err(Fail::Small {
                need: scores.len(),
                have: len,
            });
        }
        if p.is_null() && !scores.is_empty() {
            return Err(Fail::Null("p"));
        }
        for (i, s) in scores.iter().enumerate() {
            *p.add(i) = s.p;
        }
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cauemo_model_free(model: *mut CauemoModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}
