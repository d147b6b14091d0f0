//! C ABI over the deeplight inference engine.
//!
//! All objects are opaque handles owned by the caller and released with the
//! matching `*_free`. Every fallible call returns a [`DlStatus`]; on failure
//! `dl_last_error()` describes the problem for the calling thread. Panics
//! never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use deeplight::data::{encode_sample, FeatureDictionary, FieldSchema, NumericTransform, Sample};
use deeplight::metrics::Scorer;
use deeplight::model::{sigmoid, Model};
use deeplight::sparse::{
    compile_sparse, load_checkpoint, save_dense, save_sparse, Checkpoint, CheckpointMeta, Precision, SparseModel,
};
use deeplight::Error;

/// Result codes. `DL_OK` is zero; anything else is an error.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DlStatus {
    DlOk = 0,
    DlNullPointer = 1,
    DlInvalidArgument = 2,
    DlIo = 3,
    DlCheckpoint = 4,
    DlShape = 5,
    DlIndexMismatch = 6,
    DlDictionaryMismatch = 7,
    DlParse = 8,
    DlConfig = 9,
    DlBufferTooSmall = 10,
    DlInternal = 11,
}

/// Bit flags for `dl_dictionary_encode_row`.
pub const DL_TRANSFORM_FLOOR: u32 = 1;
pub const DL_TRANSFORM_CLAMP_NEGATIVE: u32 = 2;

enum Inner {
    Dense(Model),
    Sparse(SparseModel),
}

/// A dense or compiled sparse model.
pub struct DlModel {
    inner: Inner,
    meta: CheckpointMeta,
}

/// A feature dictionary plus the row layout it was built for.
pub struct DlDictionary {
    dict: FeatureDictionary,
    schema: FieldSchema,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior nul removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: DlStatus, msg: impl Into<String>) -> DlStatus {
    set_error(msg.into());
    status
}

fn status_of(e: &Error) -> DlStatus {
    match e {
        Error::Input(_) | Error::UndefinedMetric(_) => DlStatus::DlInvalidArgument,
        Error::Parse { .. } => DlStatus::DlParse,
        Error::Config(_) | Error::TrainingFault { .. } => DlStatus::DlConfig,
        Error::IndexMismatch { .. } => DlStatus::DlIndexMismatch,
        Error::Shape(_) => DlStatus::DlShape,
        Error::Checkpoint { .. } => DlStatus::DlCheckpoint,
        Error::DictionaryMismatch(_) => DlStatus::DlDictionaryMismatch,
        Error::Io(_) => DlStatus::DlIo,
    }
}

fn guard(f: impl FnOnce() -> Result<(), DlStatus>) -> DlStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            DlStatus::DlOk
        }
        Ok(Err(s)) => s,
        Err(_) => fail(DlStatus::DlInternal, "internal panic"),
    }
}

trait OrStatus<T> {
    fn or_status(self) -> Result<T, DlStatus>;
}

impl<T> OrStatus<T> for deeplight::Result<T> {
    fn or_status(self) -> Result<T, DlStatus> {
        self.map_err(|e| fail(status_of(&e), e.to_string()))
    }
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, DlStatus> {
    if p.is_null() {
        return Err(fail(DlStatus::DlNullPointer, "path is null"));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(DlStatus::DlInvalidArgument, "path is not UTF-8"))?;
    Ok(PathBuf::from(s))
}

unsafe fn model_ref<'a>(m: *const DlModel) -> Result<&'a DlModel, DlStatus> {
    m.as_ref().ok_or_else(|| fail(DlStatus::DlNullPointer, "model handle is null"))
}

fn boxed<T>(out: *mut *mut T, value: T) -> Result<(), DlStatus> {
    if out.is_null() {
        return Err(fail(DlStatus::DlNullPointer, "output pointer is null"));
    }
    unsafe { *out = Box::into_raw(Box::new(value)) };
    Ok(())
}

/// Message for the last failed call on this thread, or null. Valid until
/// the next deeplight call on the same thread.
#[no_mangle]
pub extern "C" fn dl_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Load a dense or sparse checkpoint.
///
/// # Safety
/// `path` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dl_model_load(path: *const c_char, out: *mut *mut DlModel) -> DlStatus {
    guard(|| {
        let path = path_arg(path)?;
        let model = match load_checkpoint(&path).or_status()? {
            Checkpoint::Dense { model, meta, .. } => DlModel {
                inner: Inner::Dense(model),
                meta,
            },
            Checkpoint::Sparse { model, meta } => DlModel {
                inner: Inner::Sparse(model),
                meta,
            },
        };
        boxed(out, model)
    })
}

/// # Safety
/// `model` must come from this library and not be used afterwards. Null is
/// ignored.
#[no_mangle]
pub unsafe extern "C" fn dl_model_free(model: *mut DlModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// 1 for a compiled sparse model, 0 for dense, -1 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dl_model_is_sparse(model: *const DlModel) -> i32 {
    match model.as_ref() {
        Some(DlModel {
            inner: Inner::Sparse(_), ..
        }) => 1,
        Some(_) => 0,
        None => -1,
    }
}

/// Number of fields each sample must supply, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dl_model_n_fields(model: *const DlModel) -> usize {
    match model.as_ref().map(|m| &m.inner) {
        Some(Inner::Dense(m)) => m.config.n_fields,
        Some(Inner::Sparse(m)) => m.config.n_fields,
        None => 0,
    }
}

fn probabilities<S: Scorer>(
    scorer: &S,
    indices: &[u32],
    values: &[f64],
    n_fields: usize,
    out: &mut [f64],
) -> Result<(), DlStatus> {
    let mut scratch = scorer.scratch();
    for (i, p) in out.iter_mut().enumerate() {
        let s = Sample {
            label: 0,
            indices: indices[i * n_fields..(i + 1) * n_fields].to_vec(),
            values: values[i * n_fields..(i + 1) * n_fields].to_vec(),
        };
        *p = sigmoid(scorer.logit_with(&s, &mut scratch).or_status()?);
    }
    Ok(())
}

/// Click probabilities for `n_samples` row-major samples of `n_fields`
/// (index, value) pairs each.
///
/// # Safety
/// `indices` and `values` must hold `n_samples * n_fields` elements and
/// `out_probs` room for `n_samples`.
#[no_mangle]
pub unsafe extern "C" fn dl_model_predict(
    model: *const DlModel,
    indices: *const u32,
    values: *const f64,
    n_samples: usize,
    n_fields: usize,
    out_probs: *mut f64,
) -> DlStatus {
    guard(|| {
        let m = model_ref(model)?;
        if n_samples == 0 {
            return Ok(());
        }
        if indices.is_null() || values.is_null() || out_probs.is_null() {
            return Err(fail(DlStatus::DlNullPointer, "sample or output buffer is null"));
        }
        let expected = dl_model_n_fields(m);
        if n_fields != expected {
            return Err(fail(
                DlStatus::DlShape,
                format!("model expects {expected} fields per sample, got {n_fields}"),
            ));
        }
        let len = n_samples
            .checked_mul(n_fields)
            .ok_or_else(|| fail(DlStatus::DlInvalidArgument, "sample count overflows"))?;
        let idx = std::slice::from_raw_parts(indices, len);
        let val = std::slice::from_raw_parts(values, len);
        let out = std::slice::from_raw_parts_mut(out_probs, n_samples);
        match &m.inner {
            Inner::Dense(d) => probabilities(d, idx, val, n_fields, out),
            Inner::Sparse(s) => probabilities(s, idx, val, n_fields, out),
        }
    })
}

/// Compile a dense model into a new sparse handle. Compiling a sparse model
/// is an error.
///
/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dl_model_compile(model: *const DlModel, out: *mut *mut DlModel) -> DlStatus {
    guard(|| {
        let m = model_ref(model)?;
        let Inner::Dense(d) = &m.inner else {
            return Err(fail(DlStatus::DlInvalidArgument, "model is already compiled"));
        };
        boxed(
            out,
            DlModel {
                inner: Inner::Sparse(compile_sparse(d)),
                meta: m.meta.clone(),
            },
        )
    })
}

/// Write the model as a checkpoint. Dense models are saved without
/// optimizer state; sparse ones keep f64 values.
///
/// # Safety
/// `model` must be a live handle and `path` a nul-terminated string.
#[no_mangle]
pub unsafe extern "C" fn dl_model_save(model: *const DlModel, path: *const c_char) -> DlStatus {
    guard(|| {
        let m = model_ref(model)?;
        let path = path_arg(path)?;
        match &m.inner {
            Inner::Dense(d) => save_dense(&path, d, None, &m.meta).or_status(),
            Inner::Sparse(s) => save_sparse(&path, s, &m.meta, Precision::F64).or_status(),
        }
    })
}

/// Load a dictionary written by `deeplight preprocess` for rows with
/// `n_numeric` leading numeric and `n_categorical` categorical columns.
///
/// # Safety
/// `path` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dl_dictionary_load(
    path: *const c_char,
    n_numeric: usize,
    n_categorical: usize,
    out: *mut *mut DlDictionary,
) -> DlStatus {
    guard(|| {
        let path = path_arg(path)?;
        let schema = FieldSchema::leading_numeric(n_numeric, n_categorical).or_status()?;
        let dict = FeatureDictionary::load(&path, &schema).or_status()?;
        boxed(out, DlDictionary { dict, schema })
    })
}

/// # Safety
/// `dict` must come from this library and not be used afterwards. Null is
/// ignored.
#[no_mangle]
pub unsafe extern "C" fn dl_dictionary_free(dict: *mut DlDictionary) {
    if !dict.is_null() {
        drop(Box::from_raw(dict));
    }
}

/// Fails with `DL_DICTIONARY_MISMATCH` when the model was trained against a
/// different dictionary. Models without a recorded hash pass.
///
/// # Safety
/// Both handles must be live.
#[no_mangle]
pub unsafe extern "C" fn dl_model_check_dictionary(model: *const DlModel, dict: *const DlDictionary) -> DlStatus {
    guard(|| {
        let m = model_ref(model)?;
        let d = dict
            .as_ref()
            .ok_or_else(|| fail(DlStatus::DlNullPointer, "dictionary handle is null"))?;
        match &m.meta.dictionary_hash {
            Some(h) if *h != d.dict.hash() => Err(fail(
                DlStatus::DlDictionaryMismatch,
                format!("model expects dictionary {h}, got {}", d.dict.hash()),
            )),
            _ => Ok(()),
        }
    })
}

/// Encode one tab-separated row (label first) into `capacity`-sized index
/// and value buffers; `*out_n_fields` receives the field count. `flags` is
/// a mask of `DL_TRANSFORM_*`.
///
/// # Safety
/// `line` must be a nul-terminated string, the buffers must hold
/// `capacity` elements, and `out_n_fields` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dl_dictionary_encode_row(
    dict: *const DlDictionary,
    line: *const c_char,
    flags: u32,
    indices: *mut u32,
    values: *mut f64,
    capacity: usize,
    out_n_fields: *mut usize,
) -> DlStatus {
    guard(|| {
        let d = dict
            .as_ref()
            .ok_or_else(|| fail(DlStatus::DlNullPointer, "dictionary handle is null"))?;
        if line.is_null() || indices.is_null() || values.is_null() || out_n_fields.is_null() {
            return Err(fail(DlStatus::DlNullPointer, "row or output buffer is null"));
        }
        let line = CStr::from_ptr(line)
            .to_str()
            .map_err(|_| fail(DlStatus::DlInvalidArgument, "row is not UTF-8"))?;
        let transform = NumericTransform {
            floor: flags & DL_TRANSFORM_FLOOR != 0,
            clamp_negative: flags & DL_TRANSFORM_CLAMP_NEGATIVE != 0,
        };
        let s = encode_sample(line.trim_end_matches(['\n', '\r']), 1, &d.schema, &d.dict, transform).or_status()?;
        *out_n_fields = s.indices.len();
        if s.indices.len() > capacity {
            return Err(fail(
                DlStatus::DlBufferTooSmall,
                format!("row has {} fields, buffer holds {capacity}", s.indices.len()),
            ));
        }
        std::slice::from_raw_parts_mut(indices, s.indices.len()).copy_from_slice(&s.indices);
        std::slice::from_raw_parts_mut(values, s.values.len()).copy_from_slice(&s.values);
        Ok(())
    })
}
