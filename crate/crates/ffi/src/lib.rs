//! C interface to checkpoints, datasets and prediction.
//!
//! Every fallible call returns a [`NiertStatus`]. On failure the message is
//! kept per thread and read with [`niert_last_error`]. Handles are opaque and
//! must be released with their matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use niert::cli::exit_code;
use niert::model::Checkpoint;
use niert::taskgen::{read_dataset, InterpolationTask, ScatteredPoint};
use niert::trainer::{evaluate, predict_points, EvalOptions};
use niert::NiertError;

/// Status codes. Values 2 to 5 match the command-line exit codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NiertStatus {
    Ok = 0,
    /// A Rust panic was caught at the boundary.
    Internal = 1,
    /// Null pointer or otherwise invalid argument.
    InvalidArgument = 2,
    Io = 3,
    Numeric = 4,
    Shape = 5,
}

/// A loaded model checkpoint.
pub struct NiertModel {
    checkpoint: Checkpoint,
}

/// A loaded task dataset.
pub struct NiertDataset {
    tasks: Vec<InterpolationTask>,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).unwrap_or_default());
}

fn status_of(err: &NiertError) -> NiertStatus {
    match exit_code(err) {
        3 => NiertStatus::Io,
        4 => NiertStatus::Numeric,
        5 => NiertStatus::Shape,
        _ => NiertStatus::InvalidArgument,
    }
}

struct Failure(NiertStatus, String);

impl From<NiertError> for Failure {
    fn from(e: NiertError) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn invalid(msg: &str) -> Failure {
    Failure(NiertStatus::InvalidArgument, msg.to_string())
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> NiertStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            NiertStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            NiertStatus::Internal
        }
    }
}

unsafe fn path_arg<'a>(path: *const c_char) -> Result<&'a str, Failure> {
    if path.is_null() {
        return Err(invalid("path is null"));
    }
    CStr::from_ptr(path).to_str().map_err(|_| invalid("path is not UTF-8"))
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(invalid(&format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

/// Message for the most recent failure on this thread, or an empty string.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn niert_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Loads a checkpoint file into `*out`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn niert_model_load(path: *const c_char, out: *mut *mut NiertModel) -> NiertStatus {
    guard(|| {
        if out.is_null() {
            return Err(invalid("out is null"));
        }
        *out = ptr::null_mut();
        let checkpoint = Checkpoint::load(path_arg(path)?)?;
        *out = Box::into_raw(Box::new(NiertModel { checkpoint }));
        Ok(())
    })
}

/// Releases a model. Null is ignored.
///
/// # Safety
/// `model` must come from [`niert_model_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn niert_model_free(model: *mut NiertModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Writes the model's input and output dimensions.
///
/// # Safety
/// `model` must be a live handle; `d_x` and `d_y` writable pointers.
#[no_mangle]
pub unsafe extern "C" fn niert_model_dims(model: *const NiertModel, d_x: *mut usize, d_y: *mut usize) -> NiertStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| invalid("model is null"))?;
        if d_x.is_null() || d_y.is_null() {
            return Err(invalid("output pointer is null"));
        }
        *d_x = model.checkpoint.config.d_x;
        *d_y = model.checkpoint.config.d_y;
        Ok(())
    })
}

/// Predicts values at `m` target positions from `n` observed points.
///
/// Arrays are row-major: `observed_x` is `n × d_x`, `observed_y` is
/// `n × d_y`, `target_x` is `m × d_x` and `out_y` receives `m × d_y`.
/// Predictions for one target do not depend on the other targets.
///
/// # Safety
/// Every array must hold at least the stated number of doubles.
#[no_mangle]
pub unsafe extern "C" fn niert_predict(
    model: *const NiertModel,
    n: usize,
    observed_x: *const f64,
    observed_y: *const f64,
    m: usize,
    target_x: *const f64,
    out_y: *mut f64,
) -> NiertStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| invalid("model is null"))?;
        let (d_x, d_y) = (model.checkpoint.config.d_x, model.checkpoint.config.d_y);
        if n == 0 || m == 0 {
            return Err(Failure(NiertStatus::Shape, "need at least one observed and one target point".into()));
        }
        if out_y.is_null() {
            return Err(invalid("out_y is null"));
        }
        let ox = slice_arg(observed_x, n * d_x, "observed_x")?;
        let oy = slice_arg(observed_y, n * d_y, "observed_y")?;
        let tx = slice_arg(target_x, m * d_x, "target_x")?;
        let task = InterpolationTask {
            observed: ox
                .chunks(d_x)
                .zip(oy.chunks(d_y))
                .map(|(x, y)| ScatteredPoint::observed(x.to_vec(), y.to_vec()))
                .collect(),
            targets: tx.chunks(d_x).map(|x| ScatteredPoint::target(x.to_vec())).collect(),
            target_truth: vec![vec![0.0; d_y]; m],
            d_x,
            d_y,
            source_id: "ffi".into(),
        };
        task.validate()?;
        let rows = predict_points(&task, &model.checkpoint.params, &model.checkpoint.config)?;
        let out = std::slice::from_raw_parts_mut(out_y, m * d_y);
        for (dst, row) in out.chunks_mut(d_y).zip(&rows[n..]) {
            dst.copy_from_slice(row);
        }
        Ok(())
    })
}

/// Loads a JSONL task dataset into `*out`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn niert_dataset_load(path: *const c_char, out: *mut *mut NiertDataset) -> NiertStatus {
    guard(|| {
        if out.is_null() {
            return Err(invalid("out is null"));
        }
        *out = ptr::null_mut();
        let tasks = read_dataset(path_arg(path)?)?;
        *out = Box::into_raw(Box::new(NiertDataset { tasks }));
        Ok(())
    })
}

/// Number of tasks in a dataset; 0 for null.
///
/// # Safety
/// `dataset` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn niert_dataset_len(dataset: *const NiertDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.tasks.len())
}

/// Releases a dataset. Null is ignored.
///
/// # Safety
/// `dataset` must come from [`niert_dataset_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn niert_dataset_free(dataset: *mut NiertDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Target-point MSE and MAE of `model` over every task in `dataset`.
///
/// # Safety
/// Handles must be live; `mse` and `mae` writable pointers.
#[no_mangle]
pub unsafe extern "C" fn niert_evaluate(
    model: *const NiertModel,
    dataset: *const NiertDataset,
    mse: *mut f64,
    mae: *mut f64,
) -> NiertStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| invalid("model is null"))?;
        let dataset = dataset.as_ref().ok_or_else(|| invalid("dataset is null"))?;
        if mse.is_null() || mae.is_null() {
            return Err(invalid("output pointer is null"));
        }
        let config = &model.checkpoint.config;
        if let Some(t) = dataset.tasks.iter().find(|t| t.d_x != config.d_x || t.d_y != config.d_y) {
            return Err(Failure(
                NiertStatus::Shape,
                format!("task {} has dims ({}, {}), model expects ({}, {})", t.source_id, t.d_x, t.d_y, config.d_x, config.d_y),
            ));
        }
        let table = evaluate(&model.checkpoint.params, config, &dataset.tasks, &EvalOptions::default())?;
        *mse = table.mse();
        *mae = table.mae();
        Ok(())
    })
}
