//! C ABI for loading trained gaitnet checkpoints and classifying walks.
//!
//! Every function returns a [`GaitnetStatus`]. On failure a message is kept
//! per thread and can be read with [`gaitnet_last_error_message`]. Models are
//! opaque handles created by [`gaitnet_model_load`] and released with
//! [`gaitnet_model_free`]; a loaded model is read-only and may be shared
//! between threads.
//!
//! Sample buffers are row-major `[timesteps][18]` doubles in newtons, channel
//! order L1..L8, R1..R8, L total, R total.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use gaitnet::evaluation::{EvalError, Predictor};
use gaitnet::model::CheckpointError;
use gaitnet::vgrf::parse_walk_samples;
use gaitnet::{detection_metrics, map_updrs_to_class, BinaryConfusion, Task};

/// Signals per timestep.
pub const GAITNET_NUM_CHANNELS: usize = 18;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GaitnetStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidArgument = 2,
    Io = 3,
    Checkpoint = 4,
    Data = 5,
    NoFullWindows = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GaitnetTask {
    Detection = 0,
    Severity = 1,
}

/// Ratios in [0, 1]; NaN where the denominator is zero.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct GaitnetDetectionMetrics {
    pub sensitivity: f64,
    pub specificity: f64,
    pub accuracy: f64,
}

/// A trained network with its input normalization.
pub struct GaitnetModel {
    predictor: Predictor,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

type Failure = (GaitnetStatus, String);

fn set_last_error(message: Option<String>) {
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = message.map(|m| CString::new(m.replace('\0', " ")).unwrap());
    });
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> GaitnetStatus {
    set_last_error(None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => GaitnetStatus::Ok,
        Ok(Err((status, message))) => {
            set_last_error(Some(message));
            status
        }
        Err(payload) => {
            let what = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(Some(format!("internal error: {what}")));
            GaitnetStatus::Panic
        }
    }
}

fn null(name: &str) -> Failure {
    (GaitnetStatus::NullArgument, format!("{name} is null"))
}

fn invalid(message: impl Into<String>) -> Failure {
    (GaitnetStatus::InvalidArgument, message.into())
}

unsafe fn model_ref<'a>(model: *const GaitnetModel) -> Result<&'a GaitnetModel, Failure> {
    model.as_ref().ok_or_else(|| null("model"))
}

unsafe fn out_ref<'a, T>(out: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    out.as_mut().ok_or_else(|| null(name))
}

unsafe fn slice<'a, T>(data: *const T, len: usize, name: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        Ok(&[])
    } else if data.is_null() {
        Err(null(name))
    } else {
        Ok(std::slice::from_raw_parts(data, len))
    }
}

unsafe fn slice_mut<'a, T>(data: *mut T, len: usize, name: &str) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        Ok(&mut [])
    } else if data.is_null() {
        Err(null(name))
    } else {
        Ok(std::slice::from_raw_parts_mut(data, len))
    }
}

unsafe fn path_arg<'a>(path: *const c_char) -> Result<&'a Path, Failure> {
    if path.is_null() {
        return Err(null("path"));
    }
    CStr::from_ptr(path)
        .to_str()
        .map(Path::new)
        .map_err(|_| invalid("path is not valid UTF-8"))
}

fn checkpoint_failure(e: CheckpointError) -> Failure {
    let status = match e {
        CheckpointError::Io { .. } => GaitnetStatus::Io,
        _ => GaitnetStatus::Checkpoint,
    };
    (status, e.to_string())
}

fn eval_failure(e: EvalError) -> Failure {
    let status = match e {
        EvalError::NoFullWindows(_) => GaitnetStatus::NoFullWindows,
        _ => GaitnetStatus::InvalidArgument,
    };
    (status, e.to_string())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn gaitnet_version() -> *const c_char {
    static VERSION: &CStr =
        match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
            Ok(v) => v,
            Err(_) => panic!("version string"),
        };
    VERSION.as_ptr()
}

/// Message of the last failed call on this thread, or NULL after a
/// successful call. Valid until the next gaitnet call on the same thread.
#[no_mangle]
pub extern "C" fn gaitnet_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |m| m.as_ptr()))
}

/// Loads a checkpoint written by `gaitnet cv`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gaitnet_model_load(
    path: *const c_char,
    out: *mut *mut GaitnetModel,
) -> GaitnetStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = ptr::null_mut();
        let path = path_arg(path)?;
        let predictor = Predictor::from_checkpoint(path).map_err(checkpoint_failure)?;
        *out = Box::into_raw(Box::new(GaitnetModel { predictor }));
        Ok(())
    })
}

/// Releases a model. NULL is ignored.
///
/// # Safety
/// `model` must come from [`gaitnet_model_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn gaitnet_model_free(model: *mut GaitnetModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// # Safety
/// `model` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gaitnet_model_task(
    model: *const GaitnetModel,
    out: *mut GaitnetTask,
) -> GaitnetStatus {
    guard(|| {
        let task = match model_ref(model)?.predictor.task() {
            Task::Detection => GaitnetTask::Detection,
            Task::Severity => GaitnetTask::Severity,
        };
        *out_ref(out, "out")? = task;
        Ok(())
    })
}

/// Samples per window the model expects.
///
/// # Safety
/// `model` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gaitnet_model_window_len(
    model: *const GaitnetModel,
    out: *mut usize,
) -> GaitnetStatus {
    guard(|| {
        *out_ref(out, "out")? = model_ref(model)?.predictor.window_len();
        Ok(())
    })
}

/// Probabilities per window: 1 for detection, 5 for severity.
///
/// # Safety
/// `model` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gaitnet_model_output_units(
    model: *const GaitnetModel,
    out: *mut usize,
) -> GaitnetStatus {
    guard(|| {
        *out_ref(out, "out")? = model_ref(model)?.predictor.task().output_units();
        Ok(())
    })
}

/// Scores `count` windows of `window_len x 18` raw samples each. Writes
/// `count * output_units` probabilities to `out`; `out_len` must match.
///
/// # Safety
/// `windows` must hold `count * window_len * 18` doubles and `out` must hold
/// `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn gaitnet_predict_windows(
    model: *const GaitnetModel,
    windows: *const f64,
    count: usize,
    out: *mut f64,
    out_len: usize,
) -> GaitnetStatus {
    guard(|| {
        let p = &model_ref(model)?.predictor;
        let per_window = p.window_len() * GAITNET_NUM_CHANNELS;
        let expected_out = count * p.task().output_units();
        if out_len != expected_out {
            return Err(invalid(format!(
                "out_len is {out_len}, expected {expected_out}"
            )));
        }
        let input = slice(windows, count * per_window, "windows")?;
        let out = slice_mut(out, out_len, "out")?;
        let probs = p
            .predict_windows(input, count)
            .map_err(|e| invalid(e.to_string()))?;
        out.copy_from_slice(&probs);
        Ok(())
    })
}

/// Classifies one walk of `timesteps` rows by voting over its windows.
///
/// `label` receives 0 (control) or 1 (Parkinson) for detection, or the
/// severity class minus one for severity. `votes` receives the window count
/// per label and must hold `output_units` entries, or 2 for detection.
/// Walks shorter than one window fail with `GAITNET_STATUS_NO_FULL_WINDOWS`.
///
/// # Safety
/// `samples` must hold `timesteps * 18` doubles, `votes` must hold
/// `votes_len` entries and `label` must be valid.
#[no_mangle]
pub unsafe extern "C" fn gaitnet_classify_walk(
    model: *const GaitnetModel,
    samples: *const f64,
    timesteps: usize,
    stride: usize,
    label: *mut usize,
    votes: *mut usize,
    votes_len: usize,
) -> GaitnetStatus {
    guard(|| {
        let p = &model_ref(model)?.predictor;
        let label = out_ref(label, "label")?;
        let labels = p.task().output_units().max(2);
        if votes_len != labels {
            return Err(invalid(format!(
                "votes_len is {votes_len}, expected {labels}"
            )));
        }
        if stride == 0 || stride > p.window_len() {
            return Err(invalid(format!("stride must be in 1..={}", p.window_len())));
        }
        let votes = slice_mut(votes, votes_len, "votes")?;
        let input = slice(samples, timesteps * GAITNET_NUM_CHANNELS, "samples")?;
        let decision = p.classify_walk(input, stride).map_err(eval_failure)?;
        *label = decision.label;
        votes.copy_from_slice(&decision.votes);
        Ok(())
    })
}

/// Reads a gaitpdb walk file into a newly allocated `[timesteps][18]`
/// buffer. Free it with [`gaitnet_samples_free`].
///
/// # Safety
/// `path` must be a NUL-terminated string; `out_samples` and
/// `out_timesteps` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn gaitnet_walk_file_read(
    path: *const c_char,
    out_samples: *mut *mut f64,
    out_timesteps: *mut usize,
) -> GaitnetStatus {
    guard(|| {
        let out_samples = out_ref(out_samples, "out_samples")?;
        let out_timesteps = out_ref(out_timesteps, "out_timesteps")?;
        *out_samples = ptr::null_mut();
        *out_timesteps = 0;
        let samples = parse_walk_samples(path_arg(path)?)
            .map_err(|e| (GaitnetStatus::Data, e.to_string()))?;
        *out_timesteps = samples.len() / GAITNET_NUM_CHANNELS;
        *out_samples = Box::into_raw(samples.into_boxed_slice()).cast::<f64>();
        Ok(())
    })
}

/// Releases a buffer from [`gaitnet_walk_file_read`]. NULL is ignored.
///
/// # Safety
/// `samples` and `timesteps` must be exactly what the read returned.
#[no_mangle]
pub unsafe extern "C" fn gaitnet_samples_free(samples: *mut f64, timesteps: usize) {
    if !samples.is_null() {
        let len = timesteps * GAITNET_NUM_CHANNELS;
        drop(Box::from_raw(ptr::slice_from_raw_parts_mut(samples, len)));
    }
}

/// Maps a total UPDRS score (0..=176) to severity class 1..=5.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gaitnet_updrs_to_class(updrs_total: i64, out: *mut u8) -> GaitnetStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let class = map_updrs_to_class(updrs_total).map_err(|e| invalid(e.to_string()))?;
        *out = class.level();
        Ok(())
    })
}

/// Sensitivity, specificity and accuracy from a binary confusion matrix
/// with Parkinson as the positive class.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gaitnet_detection_metrics(
    tp: u64,
    fn_: u64,
    tn: u64,
    fp: u64,
    out: *mut GaitnetDetectionMetrics,
) -> GaitnetStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let m = detection_metrics(&BinaryConfusion::new(tp, fn_, tn, fp));
        *out = GaitnetDetectionMetrics {
            sensitivity: m.sensitivity.unwrap_or(f64::NAN),
            specificity: m.specificity.unwrap_or(f64::NAN),
            accuracy: m.accuracy.unwrap_or(f64::NAN),
        };
        Ok(())
    })
}
