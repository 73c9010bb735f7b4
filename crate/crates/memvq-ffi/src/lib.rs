//! C ABI over the memvq codec: opaque handles for models and code matrices,
//! status-code error reporting with a per-thread message buffer, and plain
//! C structs for configuration and storage accounting.
//!
//! Every function returns an [`MvqStatus`]; out-parameters are written only
//! on `Ok`. Pointers returned through out-parameters own their allocation
//! and must be released with the matching `_free` function. The string from
//! [`mvq_last_error_message`] is valid until the same thread's next call
//! into this library.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use memvq::error::Error;
use memvq::pq::{CodeMatrix, PqModel};
use memvq::training::TrainConfig;
use memvq::{costcalc, eval, memstore, pq, training};
use ndarray::ArrayView2;

/// Result of every FFI call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MvqStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// A string argument was not valid UTF-8.
    InvalidString = 2,
    /// Matrix shapes are inconsistent.
    Shape = 3,
    /// Input contains NaN or infinity.
    NonFinite = 4,
    /// Too few vectors for the requested codebook size.
    InsufficientSample = 5,
    /// Invalid configuration value.
    Config = 6,
    /// A code id is out of range for the model.
    CorruptCodes = 7,
    /// Malformed shard bytes.
    Format = 8,
    /// Shard shorter than its header implies.
    Truncated = 9,
    /// Shard checksum mismatch.
    Corruption = 10,
    /// Underlying I/O failure.
    Io = 11,
    /// A numeric result does not fit the C field width.
    Overflow = 12,
    /// Internal panic; state may be inconsistent.
    Panic = 13,
}

/// Opaque trained codec handle.
pub struct MvqModel {
    inner: PqModel,
}

/// Opaque compressed-codes handle.
pub struct MvqCodes {
    inner: CodeMatrix,
}

/// Training configuration; obtain defaults from `mvq_train_config_default`.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct MvqTrainConfig {
    pub subspaces: usize,
    pub codes: usize,
    pub ema: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub usage_threshold: f64,
    pub seed: u64,
    pub commitment_beta: f64,
}

impl From<MvqTrainConfig> for TrainConfig {
    fn from(c: MvqTrainConfig) -> Self {
        TrainConfig {
            g: c.subspaces,
            c: c.codes,
            gamma: c.ema,
            epochs: c.epochs,
            batch_size: c.batch_size,
            usage_threshold: c.usage_threshold,
            seed: c.seed,
            commitment_beta: c.commitment_beta,
        }
    }
}

/// Exact storage accounting for the three memory regimes. Byte totals are
/// rounded up from bits.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct MvqStorageReport {
    pub fid_bits_per_token: u64,
    pub lumen_bits_per_token: u64,
    pub lumen_vq_bits_per_token: u64,
    pub fid_total_bytes: u64,
    pub lumen_total_bytes: u64,
    pub lumen_vq_total_bytes: u64,
    pub compression_rate_vs_lumen: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: &str) {
    let sanitized = message.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn status_of(error: &Error) -> MvqStatus {
    match error {
        Error::Shape(_) => MvqStatus::Shape,
        Error::NonFinite(_) => MvqStatus::NonFinite,
        Error::InsufficientSample { .. } => MvqStatus::InsufficientSample,
        Error::Config(_) => MvqStatus::Config,
        Error::CorruptCodes(_) => MvqStatus::CorruptCodes,
        Error::Format(_) => MvqStatus::Format,
        Error::Truncated(_) => MvqStatus::Truncated,
        Error::Corruption { .. } => MvqStatus::Corruption,
        Error::Io(_) => MvqStatus::Io,
    }
}

fn fail(error: &Error) -> MvqStatus {
    set_error(&error.to_string());
    status_of(error)
}

fn fail_with(status: MvqStatus, message: &str) -> MvqStatus {
    set_error(message);
    status
}

/// Run `body` with panics converted to `MvqStatus::Panic`.
fn guarded(body: impl FnOnce() -> MvqStatus) -> MvqStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(_) => fail_with(MvqStatus::Panic, "internal panic"),
    }
}

/// # Safety
/// `vectors` must point to `n * d` readable floats.
unsafe fn view_matrix<'a>(
    vectors: *const f32,
    n: usize,
    d: usize,
) -> Result<ArrayView2<'a, f32>, MvqStatus> {
    if vectors.is_null() {
        return Err(fail_with(MvqStatus::NullArgument, "vectors pointer is null"));
    }
    let len = n
        .checked_mul(d)
        .ok_or_else(|| fail_with(MvqStatus::Config, "n * d overflows"))?;
    let slice = std::slice::from_raw_parts(vectors, len);
    ArrayView2::from_shape((n, d), slice)
        .map_err(|e| fail_with(MvqStatus::Shape, &e.to_string()))
}

unsafe fn path_arg<'a>(path: *const c_char) -> Result<&'a Path, MvqStatus> {
    if path.is_null() {
        return Err(fail_with(MvqStatus::NullArgument, "path pointer is null"));
    }
    let s = CStr::from_ptr(path)
        .to_str()
        .map_err(|_| fail_with(MvqStatus::InvalidString, "path is not valid UTF-8"))?;
    Ok(Path::new(s))
}

macro_rules! require_nonnull {
    ($ptr:expr, $name:literal) => {
        match unsafe { $ptr.as_ref() } {
            Some(r) => r,
            None => return fail_with(MvqStatus::NullArgument, concat!($name, " pointer is null")),
        }
    };
}

macro_rules! require_out {
    ($ptr:expr, $name:literal) => {
        match unsafe { $ptr.as_mut() } {
            Some(r) => r,
            None => return fail_with(MvqStatus::NullArgument, concat!($name, " pointer is null")),
        }
    };
}

/// Message for the current thread's most recent error; empty if none.
#[no_mangle]
pub extern "C" fn mvq_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Fill `out` with the default training configuration.
#[no_mangle]
pub unsafe extern "C" fn mvq_train_config_default(out: *mut MvqTrainConfig) -> MvqStatus {
    let out = require_out!(out, "out");
    let d = TrainConfig::default();
    *out = MvqTrainConfig {
        subspaces: d.g,
        codes: d.c,
        ema: d.gamma,
        epochs: d.epochs,
        batch_size: d.batch_size,
        usage_threshold: d.usage_threshold,
        seed: d.seed,
        commitment_beta: d.commitment_beta,
    };
    MvqStatus::Ok
}

/// Train a codec on `n` vectors of dimension `d` and return an owned model.
///
/// # Safety
/// `vectors` must point to `n * d` floats; `config` and `out_model` must be
/// valid pointers.
#[no_mangle]
pub unsafe extern "C" fn mvq_fit(
    vectors: *const f32,
    n: usize,
    d: usize,
    config: *const MvqTrainConfig,
    out_model: *mut *mut MvqModel,
) -> MvqStatus {
    let config = *require_nonnull!(config, "config");
    let out_model = require_out!(out_model, "out_model");
    let data = match view_matrix(vectors, n, d) {
        Ok(v) => v,
        Err(status) => return status,
    };
    guarded(|| match training::fit_matrix(data, &config.into()) {
        Ok((model, _)) => {
            *out_model = Box::into_raw(Box::new(MvqModel { inner: model }));
            MvqStatus::Ok
        }
        Err(e) => fail(&e),
    })
}

/// Compress `n` vectors of dimension `d` into an owned code matrix.
///
/// # Safety
/// `model` must be a live handle; `vectors` must point to `n * d` floats.
#[no_mangle]
pub unsafe extern "C" fn mvq_compress(
    model: *const MvqModel,
    vectors: *const f32,
    n: usize,
    d: usize,
    out_codes: *mut *mut MvqCodes,
) -> MvqStatus {
    let model = require_nonnull!(model, "model");
    let out_codes = require_out!(out_codes, "out_codes");
    let data = match view_matrix(vectors, n, d) {
        Ok(v) => v,
        Err(status) => return status,
    };
    guarded(|| match pq::compress(&model.inner, data) {
        Ok(codes) => {
            *out_codes = Box::into_raw(Box::new(MvqCodes { inner: codes }));
            MvqStatus::Ok
        }
        Err(e) => fail(&e),
    })
}

/// Reconstruct vectors into `out`, which must hold `rows * dim` floats
/// (`out_len` is checked against that product).
///
/// # Safety
/// `model` and `codes` must be live handles; `out` must point to `out_len`
/// writable floats.
#[no_mangle]
pub unsafe extern "C" fn mvq_decompress(
    model: *const MvqModel,
    codes: *const MvqCodes,
    out: *mut f32,
    out_len: usize,
) -> MvqStatus {
    let model = require_nonnull!(model, "model");
    let codes = require_nonnull!(codes, "codes");
    if out.is_null() {
        return fail_with(MvqStatus::NullArgument, "out pointer is null");
    }
    let needed = codes.inner.rows() * model.inner.partition().dim();
    if out_len != needed {
        return fail_with(
            MvqStatus::Shape,
            &format!("out_len {out_len} does not match rows * dim = {needed}"),
        );
    }
    guarded(|| match pq::decompress(&model.inner, &codes.inner) {
        Ok(matrix) => {
            let out_slice = std::slice::from_raw_parts_mut(out, out_len);
            for (slot, &v) in out_slice.iter_mut().zip(matrix.iter()) {
                *slot = v;
            }
            MvqStatus::Ok
        }
        Err(e) => fail(&e),
    })
}

/// Mean squared reconstruction error of the model over `n` vectors.
///
/// # Safety
/// `model` must be a live handle; `vectors` must point to `n * d` floats.
#[no_mangle]
pub unsafe extern "C" fn mvq_recon_mse(
    model: *const MvqModel,
    vectors: *const f32,
    n: usize,
    d: usize,
    out_mse: *mut f64,
) -> MvqStatus {
    let model = require_nonnull!(model, "model");
    let out_mse = require_out!(out_mse, "out_mse");
    let data = match view_matrix(vectors, n, d) {
        Ok(v) => v,
        Err(status) => return status,
    };
    guarded(|| match eval::recon_mse(&model.inner, data) {
        Ok(mse) => {
            *out_mse = mse;
            MvqStatus::Ok
        }
        Err(e) => fail(&e),
    })
}

/// Write model and codes as a shard file; reports bytes written.
///
/// # Safety
/// `path` must be a NUL-terminated string; handles must be live.
#[no_mangle]
pub unsafe extern "C" fn mvq_write_shard(
    path: *const c_char,
    model: *const MvqModel,
    codes: *const MvqCodes,
    out_written: *mut u64,
) -> MvqStatus {
    let model = require_nonnull!(model, "model");
    let codes = require_nonnull!(codes, "codes");
    let out_written = require_out!(out_written, "out_written");
    let path = match path_arg(path) {
        Ok(p) => p,
        Err(status) => return status,
    };
    guarded(|| match memstore::write_shard(path, &model.inner, &codes.inner) {
        Ok(written) => {
            *out_written = written;
            MvqStatus::Ok
        }
        Err(e) => fail(&e),
    })
}

/// Read a shard file into owned model and codes handles.
///
/// # Safety
/// `path` must be a NUL-terminated string; out-pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn mvq_read_shard(
    path: *const c_char,
    out_model: *mut *mut MvqModel,
    out_codes: *mut *mut MvqCodes,
) -> MvqStatus {
    let out_model = require_out!(out_model, "out_model");
    let out_codes = require_out!(out_codes, "out_codes");
    let path = match path_arg(path) {
        Ok(p) => p,
        Err(status) => return status,
    };
    guarded(|| match memstore::read_shard(path) {
        Ok((model, codes)) => {
            *out_model = Box::into_raw(Box::new(MvqModel { inner: model }));
            *out_codes = Box::into_raw(Box::new(MvqCodes { inner: codes }));
            MvqStatus::Ok
        }
        Err(e) => fail(&e),
    })
}

/// Exact storage accounting; fails with `Overflow` if a byte total exceeds
/// the 64-bit field.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mvq_storage_report(
    tokens: u64,
    dim: u64,
    subspaces: u64,
    codes: u64,
    out: *mut MvqStorageReport,
) -> MvqStatus {
    let out = require_out!(out, "out");
    let report = match costcalc::storage_report(tokens, dim, subspaces, codes) {
        Ok(r) => r,
        Err(e) => return fail(&e),
    };
    let narrow = |bytes: u128| -> Result<u64, MvqStatus> {
        u64::try_from(bytes)
            .map_err(|_| fail_with(MvqStatus::Overflow, "byte total exceeds 64 bits"))
    };
    let fid = match narrow(report.fid_total_bytes) {
        Ok(v) => v,
        Err(s) => return s,
    };
    let lumen = match narrow(report.lumen_total_bytes) {
        Ok(v) => v,
        Err(s) => return s,
    };
    let lumen_vq = match narrow(report.lumen_vq_total_bytes) {
        Ok(v) => v,
        Err(s) => return s,
    };
    *out = MvqStorageReport {
        fid_bits_per_token: report.fid_bits_per_token,
        lumen_bits_per_token: report.lumen_bits_per_token,
        lumen_vq_bits_per_token: report.lumen_vq_bits_per_token,
        fid_total_bytes: fid,
        lumen_total_bytes: lumen,
        lumen_vq_total_bytes: lumen_vq,
        compression_rate_vs_lumen: report.compression_rate_vs_lumen,
    };
    MvqStatus::Ok
}

/// Vector dimension d of the model.
///
/// # Safety
/// `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn mvq_model_dim(model: *const MvqModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.partition().dim())
}

/// Subspace count g of the model.
///
/// # Safety
/// `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn mvq_model_subspaces(model: *const MvqModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.partition().subspaces())
}

/// Codes per subspace C of the model.
///
/// # Safety
/// `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn mvq_model_code_count(model: *const MvqModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.code_count())
}

/// Number of compressed vectors in the code matrix.
///
/// # Safety
/// `codes` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn mvq_codes_rows(codes: *const MvqCodes) -> usize {
    codes.as_ref().map_or(0, |c| c.inner.rows())
}

/// Subspace count of the code matrix.
///
/// # Safety
/// `codes` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn mvq_codes_subspaces(codes: *const MvqCodes) -> usize {
    codes.as_ref().map_or(0, |c| c.inner.subspaces())
}

/// Release a model handle; null is a no-op.
///
/// # Safety
/// `model` must have come from this library and not been freed before.
#[no_mangle]
pub unsafe extern "C" fn mvq_model_free(model: *mut MvqModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Release a codes handle; null is a no-op.
///
/// # Safety
/// `codes` must have come from this library and not been freed before.
#[no_mangle]
pub unsafe extern "C" fn mvq_codes_free(codes: *mut MvqCodes) {
    if !codes.is_null() {
        drop(Box::from_raw(codes));
    }
}
