//! C ABI over the trusted-side pieces: load an encoder artifact, encode raw
//! rows to 32-bit latents, and read or write latent batch files.
//!
//! Every function returns a [`VeilStatus`]. On failure the message is kept
//! per thread and can be read with [`veil_last_error`]. Handles are opaque
//! and must be released with their `_free` function.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use veil::io::LatentBatchFile;
use veil::numeric::Matrix;
use veil::scrae::{artifact, encode_batch, EncoderModel, LatentBatch};
use veil::VeilError;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VeilStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    Io = 4,
    Format = 5,
    NonFinite = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

/// A loaded encoder.
pub struct VeilModel {
    inner: EncoderModel,
}

/// A latent batch read from disk.
pub struct VeilLatentFile {
    inner: LatentBatchFile,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &VeilError) -> VeilStatus {
    match e {
        VeilError::DimensionMismatch { .. } => VeilStatus::DimensionMismatch,
        VeilError::NonFinite(_) => VeilStatus::NonFinite,
        VeilError::Io(_) => VeilStatus::Io,
        VeilError::Format(_) | VeilError::Json(_) => VeilStatus::Format,
        _ => VeilStatus::InvalidArgument,
    }
}

struct Fail(VeilStatus, String);

impl From<VeilError> for Fail {
    fn from(e: VeilError) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> VeilStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            VeilStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            VeilStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(VeilStatus::NullPointer, format!("{what} is null"))
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Fail> {
    if p.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(VeilStatus::InvalidArgument, "path is not valid UTF-8".into()))?;
    Ok(PathBuf::from(s))
}

/// Message for the last failed call on this thread, or null. Valid until the
/// next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn veil_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Static name of a status code.
#[no_mangle]
pub extern "C" fn veil_status_name(status: VeilStatus) -> *const c_char {
    let s: &'static CStr = match status {
        VeilStatus::Ok => c"ok",
        VeilStatus::NullPointer => c"null_pointer",
        VeilStatus::InvalidArgument => c"invalid_argument",
        VeilStatus::DimensionMismatch => c"dimension_mismatch",
        VeilStatus::Io => c"io",
        VeilStatus::Format => c"format",
        VeilStatus::NonFinite => c"non_finite",
        VeilStatus::BufferTooSmall => c"buffer_too_small",
        VeilStatus::Panic => c"panic",
    };
    s.as_ptr()
}

#[no_mangle]
pub extern "C" fn veil_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads an encoder artifact from `path` into `*out`.
#[no_mangle]
pub unsafe extern "C" fn veil_model_load(path: *const c_char, out: *mut *mut VeilModel) -> VeilStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let model = artifact::load_model(&path_arg(path)?)?;
        *out = Box::into_raw(Box::new(VeilModel { inner: model }));
        Ok(())
    })
}

/// Loads an encoder artifact from memory.
#[no_mangle]
pub unsafe extern "C" fn veil_model_load_bytes(data: *const u8, len: usize, out: *mut *mut VeilModel) -> VeilStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        if data.is_null() {
            return Err(null("data"));
        }
        let bytes = std::slice::from_raw_parts(data, len);
        let model = artifact::from_bytes(bytes)?;
        *out = Box::into_raw(Box::new(VeilModel { inner: model }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn veil_model_free(model: *mut VeilModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Raw feature count D, or 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn veil_model_input_dim(model: *const VeilModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.input_dim())
}

/// Latent width E, or 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn veil_model_latent_dim(model: *const VeilModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.latent_dim())
}

/// Encodes `rows` row-major raw records of `cols` doubles into `out`, which
/// must hold `rows * latent_dim` floats.
#[no_mangle]
pub unsafe extern "C" fn veil_model_encode(
    model: *const VeilModel,
    x: *const f64,
    rows: usize,
    cols: usize,
    out: *mut f32,
    out_len: usize,
) -> VeilStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        if x.is_null() {
            return Err(null("x"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let need = rows
            .checked_mul(m.inner.latent_dim())
            .ok_or_else(|| Fail(VeilStatus::InvalidArgument, "rows too large".into()))?;
        if out_len < need {
            return Err(Fail(VeilStatus::BufferTooSmall, format!("output holds {out_len} floats, need {need}")));
        }
        let n = rows
            .checked_mul(cols)
            .ok_or_else(|| Fail(VeilStatus::InvalidArgument, "rows * cols overflows".into()))?;
        let xm = Matrix::new(rows, cols, std::slice::from_raw_parts(x, n).to_vec())?;
        xm.ensure_finite("raw records")?;
        let z = encode_batch(&m.inner, &xm)?;
        std::slice::from_raw_parts_mut(out, need).copy_from_slice(&z.data);
        Ok(())
    })
}

/// Writes a latent batch file. `targets` may be null; otherwise it holds
/// `rows` doubles.
#[no_mangle]
pub unsafe extern "C" fn veil_latent_file_write(
    path: *const c_char,
    latents: *const f32,
    rows: usize,
    dim: usize,
    targets: *const f64,
) -> VeilStatus {
    guard(|| {
        let path = path_arg(path)?;
        let n = rows
            .checked_mul(dim)
            .ok_or_else(|| Fail(VeilStatus::InvalidArgument, "rows * dim overflows".into()))?;
        if latents.is_null() && n > 0 {
            return Err(null("latents"));
        }
        let data = if n == 0 { Vec::new() } else { std::slice::from_raw_parts(latents, n).to_vec() };
        let t = (!targets.is_null()).then(|| std::slice::from_raw_parts(targets, rows).to_vec());
        LatentBatchFile::new(LatentBatch { rows, dim, data }, t)?.write(&path)?;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn veil_latent_file_read(path: *const c_char, out: *mut *mut VeilLatentFile) -> VeilStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let f = LatentBatchFile::read(&path_arg(path)?)?;
        *out = Box::into_raw(Box::new(VeilLatentFile { inner: f }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn veil_latent_file_free(file: *mut VeilLatentFile) {
    if !file.is_null() {
        drop(Box::from_raw(file));
    }
}

#[no_mangle]
pub unsafe extern "C" fn veil_latent_file_rows(file: *const VeilLatentFile) -> usize {
    file.as_ref().map_or(0, |f| f.inner.latents.rows)
}

#[no_mangle]
pub unsafe extern "C" fn veil_latent_file_dim(file: *const VeilLatentFile) -> usize {
    file.as_ref().map_or(0, |f| f.inner.latents.dim)
}

/// Row-major latents owned by the handle; null for a null handle.
#[no_mangle]
pub unsafe extern "C" fn veil_latent_file_latents(file: *const VeilLatentFile) -> *const f32 {
    file.as_ref().map_or(ptr::null(), |f| f.inner.latents.data.as_ptr())
}

/// Targets owned by the handle, or null when the file has none.
#[no_mangle]
pub unsafe extern "C" fn veil_latent_file_targets(file: *const VeilLatentFile) -> *const f64 {
    file.as_ref()
        .and_then(|f| f.inner.targets.as_ref())
        .map_or(ptr::null(), |t| t.as_ptr())
}
