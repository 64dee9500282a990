//! C ABI over `foresight-core`.
//!
//! Objects cross the boundary as opaque handles created by a `*_new` or
//! `*_load` function and released by the matching `*_free`. Every fallible
//! function returns an [`FsStatus`]; on failure a message describing the
//! error is kept per thread and can be copied out with
//! [`fs_last_error_message`]. Output parameters are written only on success.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, UnwindSafe};
use std::path::PathBuf;
use std::ptr;

use foresight_core::eval::{auc, gauc, ScoredExample};
use foresight_core::predictor::PredictorModel;
use foresight_core::quantizer::{Codebook, Sid};
use foresight_core::seqstore::{compress, AuthorStore, HistoryWindow, SharedAuthorStore};
use foresight_core::synth::Task;
use foresight_core::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ShapeMismatch = 3,
    OutOfRange = 4,
    NonFinite = 5,
    Empty = 6,
    Format = 7,
    Integrity = 8,
    Config = 9,
    Io = 10,
    /// A metric is undefined for the given input (for example one class only).
    Undefined = 11,
    BufferTooSmall = 12,
    Panic = 13,
}

impl From<&Error> for FsStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::InvalidArgument(_) => FsStatus::InvalidArgument,
            Error::ShapeMismatch { .. } => FsStatus::ShapeMismatch,
            Error::OutOfRange { .. } => FsStatus::OutOfRange,
            Error::NonFinite(_) => FsStatus::NonFinite,
            Error::FullyMasked | Error::Empty(_) => FsStatus::Empty,
            Error::NotScalar(_) | Error::Format(_) => FsStatus::Format,
            Error::Integrity(_) => FsStatus::Integrity,
            Error::Config(_) => FsStatus::Config,
            Error::Io(_) => FsStatus::Io,
        }
    }
}

/// Trained centroid table.
pub struct FsCodebook {
    inner: Codebook,
    hash: String,
}

/// Author → compressed id sequence. Appends and window reads may come from
/// different threads.
pub struct FsStore {
    inner: SharedAuthorStore,
}

/// Trained next-id predictor.
pub struct FsPredictor {
    inner: PredictorModel,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

struct Failure(FsStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(FsStatus::from(&e), e.to_string())
    }
}

fn fail(status: FsStatus, msg: impl Into<String>) -> Failure {
    Failure(status, msg.into())
}

fn guard<F: FnOnce() -> Result<(), Failure> + UnwindSafe>(f: F) -> FsStatus {
    match catch_unwind(f) {
        Ok(Ok(())) => {
            set_error("");
            FsStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            FsStatus::Panic
        }
    }
}

unsafe fn nonnull<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| fail(FsStatus::NullPointer, format!("{what} is null")))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(fail(FsStatus::NullPointer, format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(fail(FsStatus::NullPointer, "path is null"));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(FsStatus::InvalidArgument, "path is not valid UTF-8"))?;
    Ok(PathBuf::from(s))
}

unsafe fn out_slice<'a, T>(p: *mut T, len: usize, need: usize, what: &str) -> Result<&'a mut [T], Failure> {
    if need == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(fail(FsStatus::NullPointer, format!("{what} is null")));
    }
    if len < need {
        return Err(fail(
            FsStatus::BufferTooSmall,
            format!("{what} holds {len} values, {need} required"),
        ));
    }
    Ok(std::slice::from_raw_parts_mut(p, need))
}

unsafe fn write_out<T>(p: *mut T, v: T) {
    if !p.is_null() {
        *p = v;
    }
}

/// Copies the calling thread's last error message into `buf` as a
/// NUL-terminated string, truncating to `len - 1` bytes. Returns the full
/// message length excluding the terminator; empty after a successful call.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn fs_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

// codebook ------------------------------------------------------------------

/// Loads a codebook file written by the `quantize` stage.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fs_codebook_load(path: *const c_char, out: *mut *mut FsCodebook) -> FsStatus {
    guard(|| {
        if out.is_null() {
            return Err(fail(FsStatus::NullPointer, "out is null"));
        }
        let inner = Codebook::load(&path_arg(path)?)?;
        let hash = inner.content_hash();
        *out = Box::into_raw(Box::new(FsCodebook { inner, hash }));
        Ok(())
    })
}

/// Builds a codebook from `size` row-major centroids of dimension `dim`.
///
/// # Safety
/// `centroids` must point to `size * dim` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fs_codebook_from_centroids(
    centroids: *const f64,
    size: usize,
    dim: usize,
    out: *mut *mut FsCodebook,
) -> FsStatus {
    guard(|| {
        if out.is_null() {
            return Err(fail(FsStatus::NullPointer, "out is null"));
        }
        if size == 0 || dim == 0 {
            return Err(fail(FsStatus::Empty, "codebook needs at least one centroid of positive dimension"));
        }
        let n = size
            .checked_mul(dim)
            .ok_or_else(|| fail(FsStatus::InvalidArgument, "size * dim overflows"))?;
        let flat = slice(centroids, n, "centroids")?;
        let rows: Vec<Vec<f64>> = flat.chunks(dim).map(<[f64]>::to_vec).collect();
        let inner = Codebook::from_f64_rows(&rows)?;
        let hash = inner.content_hash();
        *out = Box::into_raw(Box::new(FsCodebook { inner, hash }));
        Ok(())
    })
}

/// # Safety
/// `cb` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fs_codebook_free(cb: *mut FsCodebook) {
    if !cb.is_null() {
        drop(Box::from_raw(cb));
    }
}

/// Number of centroids, 0 for a null handle.
///
/// # Safety
/// `cb` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fs_codebook_size(cb: *const FsCodebook) -> usize {
    cb.as_ref().map_or(0, |c| c.inner.size())
}

/// Embedding dimension, 0 for a null handle.
///
/// # Safety
/// `cb` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fs_codebook_dim(cb: *const FsCodebook) -> usize {
    cb.as_ref().map_or(0, |c| c.inner.dim())
}

/// Semantic id of the centroid nearest to `embedding` (lowest id on ties).
///
/// # Safety
/// `cb` must be a live handle, `embedding` must point to `len` values and
/// `out_sid` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fs_codebook_nearest(
    cb: *const FsCodebook,
    embedding: *const f64,
    len: usize,
    out_sid: *mut u32,
) -> FsStatus {
    guard(|| {
        let cb = nonnull(cb, "codebook")?;
        if out_sid.is_null() {
            return Err(fail(FsStatus::NullPointer, "out_sid is null"));
        }
        let e = slice(embedding, len, "embedding")?;
        *out_sid = cb.inner.nearest_code(e)?.0;
        Ok(())
    })
}

// store ---------------------------------------------------------------------

/// Empty store whose windows pad with id `pad`; use the codebook size.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fs_store_new(pad: u32, out: *mut *mut FsStore) -> FsStatus {
    guard(|| {
        if out.is_null() {
            return Err(fail(FsStatus::NullPointer, "out is null"));
        }
        let inner = SharedAuthorStore::new(AuthorStore::new(Sid(pad)));
        *out = Box::into_raw(Box::new(FsStore { inner }));
        Ok(())
    })
}

/// Rebuilds a store by replaying an append log.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fs_store_replay(pad: u32, path: *const c_char, out: *mut *mut FsStore) -> FsStatus {
    guard(|| {
        if out.is_null() {
            return Err(fail(FsStatus::NullPointer, "out is null"));
        }
        let store = AuthorStore::replay_file(Sid(pad), &path_arg(path)?)?;
        *out = Box::into_raw(Box::new(FsStore {
            inner: SharedAuthorStore::new(store),
        }));
        Ok(())
    })
}

/// # Safety
/// `store` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fs_store_free(store: *mut FsStore) {
    if !store.is_null() {
        drop(Box::from_raw(store));
    }
}

/// Appends one segment id to an author's stream.
///
/// # Safety
/// `store` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn fs_store_append(store: *const FsStore, author_id: u64, sid: u32) -> FsStatus {
    guard(|| {
        nonnull(store, "store")?.inner.append(author_id, Sid(sid))?;
        Ok(())
    })
}

/// Writes the author's last `l_max` runs, front-padded, into `sids` and
/// `freqs` (each `l_max` long) and the number of real runs into `valid_len`.
/// An unknown author yields a fully padded window.
///
/// # Safety
/// `store` must be a live handle, `sids` and `freqs` must each point to
/// `l_max` writable values and `valid_len` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fs_store_window(
    store: *const FsStore,
    author_id: u64,
    l_max: usize,
    sids: *mut u32,
    freqs: *mut u32,
    valid_len: *mut usize,
) -> FsStatus {
    guard(|| {
        let store = nonnull(store, "store")?;
        if l_max == 0 {
            return Err(fail(FsStatus::InvalidArgument, "l_max must be positive"));
        }
        if valid_len.is_null() {
            return Err(fail(FsStatus::NullPointer, "valid_len is null"));
        }
        let w = store.inner.window(author_id, l_max)?;
        let s = out_slice(sids, l_max, l_max, "sids")?;
        let f = out_slice(freqs, l_max, l_max, "freqs")?;
        s.iter_mut().zip(&w.sids).for_each(|(d, v)| *d = v.0);
        f.copy_from_slice(&w.freqs);
        *valid_len = w.valid_len;
        Ok(())
    })
}

// predictor -----------------------------------------------------------------

/// Loads a predictor checkpoint. The load is refused with
/// [`FsStatus::Integrity`] unless the checkpoint was trained against `cb`.
///
/// # Safety
/// `path` must be a NUL-terminated string, `cb` a live handle and `out`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn fs_predictor_load(
    path: *const c_char,
    cb: *const FsCodebook,
    out: *mut *mut FsPredictor,
) -> FsStatus {
    guard(|| {
        let cb = nonnull(cb, "codebook")?;
        if out.is_null() {
            return Err(fail(FsStatus::NullPointer, "out is null"));
        }
        let inner = PredictorModel::load(&path_arg(path)?, &cb.hash)?;
        *out = Box::into_raw(Box::new(FsPredictor { inner }));
        Ok(())
    })
}

/// # Safety
/// `p` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fs_predictor_free(p: *mut FsPredictor) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Number of real ids the predictor distinguishes, 0 for a null handle.
///
/// # Safety
/// `p` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fs_predictor_num_codes(p: *const FsPredictor) -> usize {
    p.as_ref().map_or(0, |p| p.inner.config().num_codes)
}

/// Width of the history and foresight embeddings, 0 for a null handle.
///
/// # Safety
/// `p` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fs_predictor_model_dim(p: *const FsPredictor) -> usize {
    p.as_ref().map_or(0, |p| p.inner.config().d_m)
}

/// Window length the predictor was built for, 0 for a null handle.
///
/// # Safety
/// `p` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fs_predictor_window_len(p: *const FsPredictor) -> usize {
    p.as_ref().map_or(0, |p| p.inner.config().l_max)
}

/// Caller-owned buffers receiving one prediction. Any buffer may be null to
/// skip it; a non-null buffer must be at least as long as its `*_len` says
/// and that length must cover the predictor's size.
#[repr(C)]
pub struct FsPrediction {
    /// Most probable next id.
    pub predicted: u32,
    /// `num_codes` probabilities.
    pub probs: *mut f64,
    pub probs_len: usize,
    /// `model_dim` values: encoder output pooled over the real positions.
    pub history: *mut f64,
    pub history_len: usize,
    /// `model_dim` values: decoder output.
    pub foresight: *mut f64,
    pub foresight_len: usize,
}

unsafe fn predict_into(p: &FsPredictor, w: &HistoryWindow, out: *mut FsPrediction) -> Result<(), Failure> {
    let out = out
        .as_mut()
        .ok_or_else(|| fail(FsStatus::NullPointer, "prediction is null"))?;
    let n = p.inner.config().num_codes;
    let d = p.inner.config().d_m;
    let check = |ptr: *mut f64, len: usize, need: usize, what: &str| -> Result<(), Failure> {
        if !ptr.is_null() && len < need {
            return Err(fail(FsStatus::BufferTooSmall, format!("{what} holds {len} values, {need} required")));
        }
        Ok(())
    };
    check(out.probs, out.probs_len, n, "probs")?;
    check(out.history, out.history_len, d, "history")?;
    check(out.foresight, out.foresight_len, d, "foresight")?;
    let r = p.inner.predict_next(w)?;
    for (ptr, src) in [(out.probs, &r.probs), (out.history, &r.history_encoding), (out.foresight, &r.foresight_embedding)] {
        if !ptr.is_null() {
            ptr::copy_nonoverlapping(src.as_ptr(), ptr, src.len());
        }
    }
    out.predicted = r.predicted.0;
    Ok(())
}

/// Predicts the id following an author's current stream.
///
/// # Safety
/// `p` and `store` must be live handles; `out` must satisfy the contract of
/// [`FsPrediction`].
#[no_mangle]
pub unsafe extern "C" fn fs_predictor_predict_author(
    p: *const FsPredictor,
    store: *const FsStore,
    author_id: u64,
    out: *mut FsPrediction,
) -> FsStatus {
    guard(|| {
        let p = nonnull(p, "predictor")?;
        let store = nonnull(store, "store")?;
        let w = store.inner.window(author_id, p.inner.config().l_max)?;
        predict_into(p, &w, out)
    })
}

/// Predicts the id following a raw, uncompressed id sequence of length `len`.
///
/// # Safety
/// `p` must be a live handle, `sids` must point to `len` values and `out`
/// must satisfy the contract of [`FsPrediction`].
#[no_mangle]
pub unsafe extern "C" fn fs_predictor_predict_raw(
    p: *const FsPredictor,
    sids: *const u32,
    len: usize,
    out: *mut FsPrediction,
) -> FsStatus {
    guard(|| {
        let p = nonnull(p, "predictor")?;
        let raw: Vec<Sid> = slice(sids, len, "sids")?.iter().map(|&s| Sid(s)).collect();
        let cfg = p.inner.config();
        if let Some(bad) = raw.iter().find(|s| s.index() >= cfg.num_codes) {
            return Err(fail(
                FsStatus::OutOfRange,
                format!("id {} out of range for {} codes", bad.0, cfg.num_codes),
            ));
        }
        let w = HistoryWindow::from_compressed(&compress(&raw), cfg.l_max, cfg.pad());
        predict_into(p, &w, out)
    })
}

// metrics -------------------------------------------------------------------

unsafe fn examples(
    users: *const u64,
    scores: *const f64,
    labels: *const u8,
    n: usize,
) -> Result<Vec<ScoredExample>, Failure> {
    let s = slice(scores, n, "scores")?;
    let l = slice(labels, n, "labels")?;
    let u = if users.is_null() { None } else { Some(slice(users, n, "users")?) };
    if let Some(i) = s.iter().position(|v| v.is_nan()) {
        return Err(fail(FsStatus::NonFinite, format!("score {i} is NaN")));
    }
    if let Some(i) = l.iter().position(|&v| v > 1) {
        return Err(fail(FsStatus::InvalidArgument, format!("label {i} is neither 0 nor 1")));
    }
    Ok((0..n)
        .map(|i| ScoredExample {
            user_id: u.map_or(0, |u| u[i]),
            score: s[i],
            label: l[i],
            task: Task::Ctr,
        })
        .collect())
}

fn metric_out(v: Option<f64>, out: *mut f64, what: &str) -> Result<(), Failure> {
    let v = v.ok_or_else(|| fail(FsStatus::Undefined, format!("{what} is undefined without both classes")))?;
    // SAFETY: callers check `out` before computing.
    unsafe { write_out(out, v) };
    Ok(())
}

/// Area under the ROC curve; ties count one half. Returns
/// [`FsStatus::Undefined`] when either class is absent.
///
/// # Safety
/// `scores` and `labels` must point to `n` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fs_auc(scores: *const f64, labels: *const u8, n: usize, out: *mut f64) -> FsStatus {
    guard(|| {
        if out.is_null() {
            return Err(fail(FsStatus::NullPointer, "out is null"));
        }
        metric_out(auc(&examples(ptr::null(), scores, labels, n)?), out, "AUC")
    })
}

/// Per-user AUC averaged with weights equal to each user's example count;
/// users with a single class are left out. Returns [`FsStatus::Undefined`]
/// when no user has both classes.
///
/// # Safety
/// `users`, `scores` and `labels` must point to `n` values; `out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn fs_gauc(
    users: *const u64,
    scores: *const f64,
    labels: *const u8,
    n: usize,
    out: *mut f64,
) -> FsStatus {
    guard(|| {
        if out.is_null() {
            return Err(fail(FsStatus::NullPointer, "out is null"));
        }
        if users.is_null() && n > 0 {
            return Err(fail(FsStatus::NullPointer, "users is null"));
        }
        metric_out(gauc(&examples(users, scores, labels, n)?), out, "GAUC")
    })
}
