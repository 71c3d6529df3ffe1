//! C ABI over the segmentation pipeline.
//!
//! Every fallible call returns an [`OctsegStatus`] and, on failure, stores a
//! message retrievable through [`octseg_last_error_message`]; the stored
//! message is thread-local, so concurrent callers never see each other's
//! errors. Successful segmentation hands back an opaque
//! [`OctsegSegmentation`] pointer that stays valid until
//! [`octseg_segmentation_free`]. Strings returned as `char*` are owned by
//! the caller and must be released with [`octseg_string_free`]; the pointer
//! returned by [`octseg_version`] is static and must not be freed. Panics
//! never cross the boundary — they are caught and reported as
//! [`OctsegStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use octseg_core::image_io::load_grayscale;
use octseg_core::{segment_all, BScan, Error, RunConfig, SegmentationResult};

/// Outcome of a C API call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OctsegStatus {
    /// The call succeeded.
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// An argument was malformed: bad dimensions, intensities outside
    /// [0, 1], an invalid config document, or a buffer of the wrong length.
    InvalidArgument = 2,
    /// The input file could not be read or decoded.
    IoFailed = 3,
    /// The pipeline could not segment the scan.
    SegmentationFailed = 4,
    /// An internal panic was caught at the boundary.
    Panic = 5,
}

/// Boundary selector for [`octseg_segmentation_boundary`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OctsegBoundary {
    /// Inner limiting membrane.
    Ilm = 0,
    /// Lower edge of the retinal nerve fiber layer.
    Rnfl = 1,
    /// Retinal pigment epithelium.
    Rpe = 2,
}

/// One segmented scan behind an opaque pointer.
pub struct OctsegSegmentation {
    result: SegmentationResult,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: impl std::fmt::Display) {
    let text = message.to_string().replace('\0', " ");
    let stored = CString::new(text).unwrap_or_else(|_| CString::new("error").unwrap());
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(stored));
}

fn clear_last_error() {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
}

fn status_of(error: &Error) -> OctsegStatus {
    match error {
        Error::Config(_)
        | Error::EmptyImage
        | Error::PixelCountMismatch { .. }
        | Error::IntensityOutOfRange { .. }
        | Error::ImageTooSmall { .. } => OctsegStatus::InvalidArgument,
        Error::Io { .. } | Error::MalformedImage { .. } | Error::UnsupportedImage { .. } => {
            OctsegStatus::IoFailed
        }
        _ => OctsegStatus::SegmentationFailed,
    }
}

/// Runs `body` with panics converted to [`OctsegStatus::Panic`].
fn guarded(body: impl FnOnce() -> OctsegStatus) -> OctsegStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(_) => {
            set_last_error("internal panic");
            OctsegStatus::Panic
        }
    }
}

/// Parses an optional NUL-terminated TOML config; null means defaults.
///
/// # Safety
///
/// `config_toml` must be null or point to a NUL-terminated string.
unsafe fn parse_config(config_toml: *const c_char) -> Result<RunConfig, OctsegStatus> {
    if config_toml.is_null() {
        return Ok(RunConfig::default());
    }
    let text = CStr::from_ptr(config_toml).to_str().map_err(|e| {
        set_last_error(format!("config is not valid UTF-8: {e}"));
        OctsegStatus::InvalidArgument
    })?;
    RunConfig::from_toml_str(text).map_err(|e| {
        set_last_error(&e);
        OctsegStatus::InvalidArgument
    })
}

fn store(result: SegmentationResult, out: *mut *mut OctsegSegmentation) -> OctsegStatus {
    let handle = Box::new(OctsegSegmentation { result });
    unsafe { *out = Box::into_raw(handle) };
    clear_last_error();
    OctsegStatus::Ok
}

/// Version of the library as a static NUL-terminated string. Never freed by
/// the caller.
#[no_mangle]
pub extern "C" fn octseg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message of the calling thread's most recent failure, or null when the
/// last call on this thread succeeded. The caller owns the returned string
/// and must release it with [`octseg_string_free`].
#[no_mangle]
pub extern "C" fn octseg_last_error_message() -> *mut c_char {
    LAST_ERROR.with(|slot| match &*slot.borrow() {
        Some(message) => message.clone().into_raw(),
        None => std::ptr::null_mut(),
    })
}

/// Segments a row-major buffer of `rows * cols` intensities in `[0, 1]`.
///
/// `config_toml` may be null for the built-in defaults. On success `*out`
/// receives the segmentation handle.
///
/// # Safety
///
/// `data` must point to `rows * cols` doubles, `config_toml` must be null or
/// NUL-terminated, and `out` must point to writable pointer storage.
#[no_mangle]
pub unsafe extern "C" fn octseg_segment_buffer(
    data: *const f64,
    rows: usize,
    cols: usize,
    config_toml: *const c_char,
    out: *mut *mut OctsegSegmentation,
) -> OctsegStatus {
    guarded(|| {
        if data.is_null() || out.is_null() {
            set_last_error("data and out must not be null");
            return OctsegStatus::NullArgument;
        }
        let Some(len) = rows.checked_mul(cols) else {
            set_last_error(format!("{rows} x {cols} pixels overflow an address"));
            return OctsegStatus::InvalidArgument;
        };
        let config = match parse_config(config_toml) {
            Ok(config) => config,
            Err(status) => return status,
        };
        let samples = std::slice::from_raw_parts(data, len).to_vec();
        let scan = match BScan::new(rows, cols, samples, "buffer".to_string()) {
            Ok(scan) => scan,
            Err(e) => {
                set_last_error(&e);
                return status_of(&e);
            }
        };
        match segment_all(&scan, &config) {
            Ok(result) => store(result, out),
            Err(e) => {
                set_last_error(&e);
                return status_of(&e);
            }
        }
    })
}

/// Loads a grayscale PNG or PGM and segments it.
///
/// `config_toml` may be null for the built-in defaults. On success `*out`
/// receives the segmentation handle.
///
/// # Safety
///
/// `path` must be NUL-terminated, `config_toml` null or NUL-terminated, and
/// `out` must point to writable pointer storage.
#[no_mangle]
pub unsafe extern "C" fn octseg_segment_file(
    path: *const c_char,
    config_toml: *const c_char,
    out: *mut *mut OctsegSegmentation,
) -> OctsegStatus {
    guarded(|| {
        if path.is_null() || out.is_null() {
            set_last_error("path and out must not be null");
            return OctsegStatus::NullArgument;
        }
        let path = match CStr::from_ptr(path).to_str() {
            Ok(text) => Path::new(text),
            Err(e) => {
                set_last_error(format!("path is not valid UTF-8: {e}"));
                return OctsegStatus::InvalidArgument;
            }
        };
        let config = match parse_config(config_toml) {
            Ok(config) => config,
            Err(status) => return status,
        };
        let scan = match load_grayscale(path) {
            Ok(scan) => scan,
            Err(e) => {
                set_last_error(&e);
                return status_of(&e);
            }
        };
        match segment_all(&scan, &config) {
            Ok(result) => store(result, out),
            Err(e) => {
                set_last_error(&e);
                return status_of(&e);
            }
        }
    })
}

/// Number of rows of the segmented scan, or 0 for a null handle.
///
/// # Safety
///
/// `seg` must be null or a live handle from a segment call.
#[no_mangle]
pub unsafe extern "C" fn octseg_segmentation_rows(seg: *const OctsegSegmentation) -> usize {
    if seg.is_null() {
        return 0;
    }
    (*seg).result.rows
}

/// Number of columns of the segmented scan, or 0 for a null handle. Every
/// boundary spans exactly this many entries.
///
/// # Safety
///
/// `seg` must be null or a live handle from a segment call.
#[no_mangle]
pub unsafe extern "C" fn octseg_segmentation_cols(seg: *const OctsegSegmentation) -> usize {
    if seg.is_null() {
        return 0;
    }
    (*seg).result.cols
}

/// Copies one boundary's per-column rows into `out_rows`, which must hold
/// exactly [`octseg_segmentation_cols`] entries.
///
/// # Safety
///
/// `seg` must be a live handle and `out_rows` must point to `len` writable
/// entries.
#[no_mangle]
pub unsafe extern "C" fn octseg_segmentation_boundary(
    seg: *const OctsegSegmentation,
    which: OctsegBoundary,
    out_rows: *mut usize,
    len: usize,
) -> OctsegStatus {
    guarded(|| {
        if seg.is_null() || out_rows.is_null() {
            set_last_error("seg and out_rows must not be null");
            return OctsegStatus::NullArgument;
        }
        let result = &(*seg).result;
        if len != result.cols {
            set_last_error(format!(
                "boundary buffer holds {len} entries but the scan has {} columns",
                result.cols
            ));
            return OctsegStatus::InvalidArgument;
        }
        let rows = match which {
            OctsegBoundary::Ilm => &result.ilm.row,
            OctsegBoundary::Rnfl => &result.rnfl.row,
            OctsegBoundary::Rpe => &result.rpe.row,
        };
        std::slice::from_raw_parts_mut(out_rows, len).copy_from_slice(rows);
        clear_last_error();
        OctsegStatus::Ok
    })
}

/// Serializes the whole segmentation — boundaries, metrics, correction
/// records, flags — as a JSON document. Returns null on failure; the caller
/// owns the string and must release it with [`octseg_string_free`].
///
/// # Safety
///
/// `seg` must be null or a live handle from a segment call.
#[no_mangle]
pub unsafe extern "C" fn octseg_segmentation_to_json(
    seg: *const OctsegSegmentation,
) -> *mut c_char {
    if seg.is_null() {
        set_last_error("seg must not be null");
        return std::ptr::null_mut();
    }
    let json = match serde_json::to_string(&(*seg).result) {
        Ok(json) => json,
        Err(e) => {
            set_last_error(format!("cannot serialize segmentation: {e}"));
            return std::ptr::null_mut();
        }
    };
    match CString::new(json) {
        Ok(text) => {
            clear_last_error();
            text.into_raw()
        }
        Err(e) => {
            set_last_error(format!("serialized JSON holds a NUL byte: {e}"));
            std::ptr::null_mut()
        }
    }
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
///
/// `s` must be null or a string obtained from this library and not yet
/// freed.
#[no_mangle]
pub unsafe extern "C" fn octseg_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Releases a segmentation handle. Null is ignored.
///
/// # Safety
///
/// `seg` must be null or a handle obtained from a segment call and not yet
/// freed.
#[no_mangle]
pub unsafe extern "C" fn octseg_segmentation_free(seg: *mut OctsegSegmentation) {
    if !seg.is_null() {
        drop(Box::from_raw(seg));
    }
}
