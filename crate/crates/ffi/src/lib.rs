//! C ABI over the moral-lens scoring engine.
//!
//! Handles are opaque; every fallible call returns an [`MlStatus`] and writes
//! its result through an out-pointer. On failure, [`ml_last_error_message`]
//! describes what went wrong on the calling thread. Panics never cross the
//! boundary: they are reported as [`MlStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use moral_lens::embedding::{read_embedding_matrix, EmbeddingMatrix};
use moral_lens::head::read_checkpoint;
use moral_lens::metrics::{f_measure, roc_auc};
use moral_lens::video::{build_timeline, select_percentile_frame, TieRule, TimelineOptions};
use moral_lens::{ClassifierHead, Error, Label};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MlStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    Validation = 5,
    Numeric = 6,
    Panic = 7,
}

/// A loaded classifier head.
pub struct MlHead {
    head: ClassifierHead,
}

/// A loaded embedding matrix.
pub struct MlEmbeddings {
    matrix: EmbeddingMatrix,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn clear_last_error() {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
}

fn status_of(error: &Error) -> MlStatus {
    match error.category() {
        "io" => MlStatus::Io,
        "format" => MlStatus::Format,
        "validation" => MlStatus::Validation,
        "numeric" => MlStatus::Numeric,
        _ => MlStatus::InvalidArgument,
    }
}

struct Failure(MlStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(MlStatus::NullPointer, format!("{what} is null"))
}

fn invalid(message: impl Into<String>) -> Failure {
    Failure(MlStatus::InvalidArgument, message.into())
}

/// Runs `f`, converting errors and panics into a status plus last-error text.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> MlStatus {
    clear_last_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MlStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_last_error(message);
            status
        }
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("panic: {message}"));
            MlStatus::Panic
        }
    }
}

unsafe fn path_arg(path: *const c_char) -> Result<PathBuf, Failure> {
    if path.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(path)
        .to_str()
        .map_err(|_| invalid("path is not valid UTF-8"))?;
    Ok(PathBuf::from(s))
}

unsafe fn slice_arg<'a, T>(data: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if data.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(data, len))
}

unsafe fn slice_mut_arg<'a, T>(data: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if data.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(data, len))
}

unsafe fn out_arg<'a, T>(out: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    out.as_mut().ok_or_else(|| null(what))
}

/// Message for the last failed call on this thread, or NULL. The pointer is
/// valid until the next call into this library from the same thread.
#[no_mangle]
pub extern "C" fn ml_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Loads a checkpoint. On success `*out` owns a handle to release with
/// `ml_head_free`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn ml_head_load(path: *const c_char, out: *mut *mut MlHead) -> MlStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let checkpoint = read_checkpoint(path_arg(path)?)?;
        *out = Box::into_raw(Box::new(MlHead { head: checkpoint.head }));
        Ok(())
    })
}

/// # Safety
/// `head` must be NULL or a handle from `ml_head_load` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ml_head_free(head: *mut MlHead) {
    if !head.is_null() {
        drop(Box::from_raw(head));
    }
}

/// Input width of the head, or 0 for a NULL handle.
///
/// # Safety
/// `head` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ml_head_input_dim(head: *const MlHead) -> usize {
    head.as_ref().map_or(0, |h| h.head.config().d_in)
}

/// Probability that one embedding is immoral.
///
/// # Safety
/// `x` must point to `len` floats; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ml_head_predict_proba(
    head: *const MlHead,
    x: *const f32,
    len: usize,
    out: *mut f64,
) -> MlStatus {
    guard(|| {
        let head = head.as_ref().ok_or_else(|| null("head"))?;
        let out = out_arg(out, "out")?;
        *out = head.head.predict_proba(slice_arg(x, len, "x")?)?;
        Ok(())
    })
}

/// Scores `rows` row-major embeddings of width `dim` into `out[rows]`.
///
/// # Safety
/// `data` must point to `rows * dim` floats and `out` to `rows` doubles.
#[no_mangle]
pub unsafe extern "C" fn ml_head_score_batch(
    head: *const MlHead,
    data: *const f32,
    rows: usize,
    dim: usize,
    out: *mut f64,
) -> MlStatus {
    guard(|| {
        let head = head.as_ref().ok_or_else(|| null("head"))?;
        let total = rows
            .checked_mul(dim)
            .ok_or_else(|| invalid("rows * dim overflows"))?;
        let data = slice_arg(data, total, "data")?;
        let out = slice_mut_arg(out, rows, "out")?;
        if dim == 0 && rows > 0 {
            return Err(invalid("dim is 0"));
        }
        let mut probabilities = Vec::with_capacity(rows);
        for row in data.chunks_exact(dim.max(1)).take(rows) {
            probabilities.push(head.head.predict_proba(row)?);
        }
        out.copy_from_slice(&probabilities);
        Ok(())
    })
}

/// Loads a CLEM embedding file. On success `*out` owns a handle to release
/// with `ml_embeddings_free`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn ml_embeddings_open(path: *const c_char, out: *mut *mut MlEmbeddings) -> MlStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let matrix = read_embedding_matrix(path_arg(path)?)?;
        *out = Box::into_raw(Box::new(MlEmbeddings { matrix }));
        Ok(())
    })
}

/// # Safety
/// `embeddings` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ml_embeddings_count(embeddings: *const MlEmbeddings) -> usize {
    embeddings.as_ref().map_or(0, |e| e.matrix.rows())
}

/// # Safety
/// `embeddings` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ml_embeddings_dim(embeddings: *const MlEmbeddings) -> usize {
    embeddings.as_ref().map_or(0, |e| e.matrix.dim())
}

/// Copies row `index` into `out[len]`; `len` must equal the embedding width.
///
/// # Safety
/// `out` must point to `len` writable floats.
#[no_mangle]
pub unsafe extern "C" fn ml_embeddings_row(
    embeddings: *const MlEmbeddings,
    index: usize,
    out: *mut f32,
    len: usize,
) -> MlStatus {
    guard(|| {
        let e = embeddings.as_ref().ok_or_else(|| null("embeddings"))?;
        if index >= e.matrix.rows() {
            return Err(invalid(format!("row {index} out of range (count {})", e.matrix.rows())));
        }
        if len != e.matrix.dim() {
            return Err(Error::DimensionMismatch {
                expected: e.matrix.dim(),
                found: len,
            }
            .into());
        }
        slice_mut_arg(out, len, "out")?.copy_from_slice(e.matrix.row(index));
        Ok(())
    })
}

/// # Safety
/// `embeddings` must be NULL or a handle from `ml_embeddings_open` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ml_embeddings_free(embeddings: *mut MlEmbeddings) {
    if !embeddings.is_null() {
        drop(Box::from_raw(embeddings));
    }
}

/// Savitzky-Golay smoothing of `values[n]` into `out[n]`.
///
/// # Safety
/// `values` and `out` must each point to `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn ml_savgol_smooth(
    values: *const f64,
    n: usize,
    window: usize,
    order: usize,
    out: *mut f64,
) -> MlStatus {
    guard(|| {
        let smoothed = moral_lens::video::savgol_smooth(slice_arg(values, n, "values")?, window, order)?;
        slice_mut_arg(out, n, "out")?.copy_from_slice(&smoothed);
        Ok(())
    })
}

/// ROC AUC of `scores[n]` against 0/1 `labels[n]` (1 = immoral).
///
/// # Safety
/// `scores` and `labels` must each point to `n` elements; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ml_roc_auc(scores: *const f64, labels: *const u8, n: usize, out: *mut f64) -> MlStatus {
    guard(|| {
        let labels = slice_arg(labels, n, "labels")?
            .iter()
            .map(|&l| match l {
                0 => Ok(Label::Moral),
                1 => Ok(Label::Immoral),
                other => Err(invalid(format!("label {other} is not 0 or 1"))),
            })
            .collect::<Result<Vec<_>, _>>()?;
        *out_arg(out, "out")? = roc_auc(slice_arg(scores, n, "scores")?, &labels)?;
        Ok(())
    })
}

/// Weighted F-measure `1 / (alpha/P + (1-alpha)/R)`; 0 when P or R is 0.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ml_f_measure(precision: f64, recall: f64, alpha: f64, out: *mut f64) -> MlStatus {
    guard(|| {
        *out_arg(out, "out")? = f_measure(precision, recall, alpha)?;
        Ok(())
    })
}

/// Index of the representative frame among `frame_count` frames.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ml_select_percentile_frame(frame_count: usize, out: *mut usize) -> MlStatus {
    guard(|| {
        *out_arg(out, "out")? = select_percentile_frame(frame_count)?;
        Ok(())
    })
}

/// Clip verdict from per-frame probabilities: writes the mean probability
/// and 1 if it reaches `threshold` (exceeds it when `strict`), else 0.
///
/// # Safety
/// `probabilities` must point to `n` doubles; the out-pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn ml_timeline_verdict(
    probabilities: *const f64,
    n: usize,
    threshold: f64,
    strict: bool,
    out_mean: *mut f64,
    out_verdict: *mut u8,
) -> MlStatus {
    guard(|| {
        let probabilities = slice_arg(probabilities, n, "probabilities")?;
        let out_mean = out_arg(out_mean, "out_mean")?;
        let out_verdict = out_arg(out_verdict, "out_verdict")?;
        if !(threshold > 0.0 && threshold < 1.0) {
            return Err(invalid(format!("threshold {threshold} outside (0, 1)")));
        }
        let options = TimelineOptions {
            threshold,
            tie_rule: if strict { TieRule::Strict } else { TieRule::Inclusive },
            ..TimelineOptions::default()
        };
        let timestamps: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let timeline = build_timeline("ffi", &timestamps, probabilities, &options)?;
        *out_mean = timeline.mean;
        *out_verdict = timeline.verdict as u8;
        Ok(())
    })
}
