//! C ABI over the fingerprint toolkit: opaque handles for templates and
//! galleries, status-code errors, and a generated `include/fpmatch.h`.
//!
//! Conventions:
//! - Every fallible call returns an [`FpStatus`]; out-parameters are written
//!   only on `FP_STATUS_OK`.
//! - Handles returned through out-parameters are owned by the caller and
//!   must be released with the matching `*_free` function exactly once.
//! - All functions tolerate NULL handles and strings by returning
//!   `FP_STATUS_NULL_ARGUMENT` (the `*_free` functions accept NULL as a
//!   no-op), and no call ever unwinds across the boundary.

use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use fpmatch::eval;
use fpmatch::features::Template;
use fpmatch::gallery::{load_gallery, GalleryIndex};
use fpmatch::matcher::similarity;
use fpmatch::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FpStatus {
    /// Success; out-parameters are valid.
    Ok = 0,
    /// A required pointer argument was NULL.
    NullArgument = 1,
    /// A path or string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// The file or directory could not be read.
    Io = 3,
    /// The file exists but does not parse as what it claims to be.
    Corrupt = 4,
    /// A template with no feature tuples was passed to the matcher.
    EmptyTemplate = 5,
    /// Inputs were well-formed but violate a precondition.
    InvalidInput = 6,
    /// An unexpected internal failure.
    Internal = 7,
}

fn status_of(err: &Error) -> FpStatus {
    match err {
        Error::Io { .. } => FpStatus::Io,
        Error::Json { .. } | Error::CorruptTemplate { .. } | Error::Image { .. } => {
            FpStatus::Corrupt
        }
        Error::EmptyTemplate => FpStatus::EmptyTemplate,
        Error::EmptyRoi
        | Error::TooFewMinutiae { .. }
        | Error::NotEnrollable { .. }
        | Error::SpecTooLarge { .. }
        | Error::EmptyScoreList
        | Error::SpecInfeasible(_)
        | Error::Config(_) => FpStatus::InvalidInput,
        Error::OutOfBounds { .. } | Error::TruncatedRidge { .. } => FpStatus::Internal,
    }
}

/// Run a body that returns an FpStatus, turning panics into `Internal`
/// instead of unwinding across the ABI.
fn guarded(body: impl FnOnce() -> FpStatus) -> FpStatus {
    catch_unwind(AssertUnwindSafe(body)).unwrap_or(FpStatus::Internal)
}

/// Opaque handle to one loaded partial-print template.
pub struct FpTemplate {
    inner: Template,
}

/// Opaque handle to an enrolled gallery (manifest plus templates).
pub struct FpGallery {
    inner: GalleryIndex,
}

unsafe fn path_arg<'a>(ptr: *const c_char) -> Result<&'a Path, FpStatus> {
    if ptr.is_null() {
        return Err(FpStatus::NullArgument);
    }
    match unsafe { CStr::from_ptr(ptr) }.to_str() {
        Ok(s) => Ok(Path::new(s)),
        Err(_) => Err(FpStatus::InvalidUtf8),
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn fp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Static human-readable description of a status code.
#[no_mangle]
pub extern "C" fn fp_status_message(status: FpStatus) -> *const c_char {
    let msg: &'static str = match status {
        FpStatus::Ok => "ok\0",
        FpStatus::NullArgument => "a required pointer argument was NULL\0",
        FpStatus::InvalidUtf8 => "a string argument was not valid UTF-8\0",
        FpStatus::Io => "file or directory could not be read\0",
        FpStatus::Corrupt => "file did not parse as the expected format\0",
        FpStatus::EmptyTemplate => "template has no feature tuples\0",
        FpStatus::InvalidInput => "inputs violate a precondition\0",
        FpStatus::Internal => "internal error\0",
    };
    msg.as_ptr() as *const c_char
}

/// Load one template from a JSON file written by the toolkit.
///
/// On success, writes a caller-owned handle to `out`.
#[no_mangle]
pub unsafe extern "C" fn fp_template_load(
    path: *const c_char,
    out: *mut *mut FpTemplate,
) -> FpStatus {
    guarded(|| {
        if out.is_null() {
            return FpStatus::NullArgument;
        }
        let path = match unsafe { path_arg(path) } {
            Ok(p) => p,
            Err(s) => return s,
        };
        let text = match std::fs::read_to_string(path) {
            Ok(t) => t,
            Err(_) => return FpStatus::Io,
        };
        match serde_json::from_str::<Template>(&text) {
            Ok(t) => {
                unsafe { *out = Box::into_raw(Box::new(FpTemplate { inner: t })) };
                FpStatus::Ok
            }
            Err(_) => FpStatus::Corrupt,
        }
    })
}

/// Number of good-quality feature tuples in the template; 0 for NULL.
#[no_mangle]
pub unsafe extern "C" fn fp_template_tuple_count(template: *const FpTemplate) -> usize {
    if template.is_null() {
        return 0;
    }
    unsafe { &*template }.inner.tuples.len()
}

/// Release a template handle. NULL is a no-op.
#[no_mangle]
pub unsafe extern "C" fn fp_template_free(template: *mut FpTemplate) {
    if !template.is_null() {
        drop(unsafe { Box::from_raw(template) });
    }
}

/// Score two templates; writes the similarity in [0, 1] to `score_out`.
#[no_mangle]
pub unsafe extern "C" fn fp_match(
    a: *const FpTemplate,
    b: *const FpTemplate,
    score_out: *mut f64,
) -> FpStatus {
    guarded(|| {
        if a.is_null() || b.is_null() || score_out.is_null() {
            return FpStatus::NullArgument;
        }
        match similarity(&unsafe { &*a }.inner, &unsafe { &*b }.inner) {
            Ok(m) => {
                unsafe { *score_out = m.score };
                FpStatus::Ok
            }
            Err(e) => status_of(&e),
        }
    })
}

/// Load an enrolled gallery directory (manifest.json plus *.tpl.json).
///
/// Files that fail validation are skipped, exactly as the evaluation
/// harness does. On success, writes a caller-owned handle to `out`.
#[no_mangle]
pub unsafe extern "C" fn fp_gallery_load(dir: *const c_char, out: *mut *mut FpGallery) -> FpStatus {
    guarded(|| {
        if out.is_null() {
            return FpStatus::NullArgument;
        }
        let dir = match unsafe { path_arg(dir) } {
            Ok(p) => p,
            Err(s) => return s,
        };
        match load_gallery(dir) {
            Ok((index, _corrupt)) => {
                unsafe { *out = Box::into_raw(Box::new(FpGallery { inner: index })) };
                FpStatus::Ok
            }
            Err(e) => status_of(&e),
        }
    })
}

/// Number of enrolled templates; 0 for NULL.
#[no_mangle]
pub unsafe extern "C" fn fp_gallery_len(gallery: *const FpGallery) -> usize {
    if gallery.is_null() {
        return 0;
    }
    unsafe { &*gallery }.inner.len()
}

/// Release a gallery handle. NULL is a no-op.
#[no_mangle]
pub unsafe extern "C" fn fp_gallery_free(gallery: *mut FpGallery) {
    if !gallery.is_null() {
        drop(unsafe { Box::from_raw(gallery) });
    }
}

/// Identify a probe against the gallery at the given threshold.
///
/// Writes the top-ranked subject id to `subject_out` and its score to
/// `score_out`. When no subject reaches the threshold, writes subject 0
/// (enrolled ids start at 1) and the best score seen.
#[no_mangle]
pub unsafe extern "C" fn fp_identify(
    gallery: *const FpGallery,
    probe: *const FpTemplate,
    threshold: f64,
    subject_out: *mut u32,
    score_out: *mut f64,
) -> FpStatus {
    guarded(|| {
        if gallery.is_null() || probe.is_null() || subject_out.is_null() || score_out.is_null() {
            return FpStatus::NullArgument;
        }
        let id = eval::identify(
            &unsafe { &*gallery }.inner,
            &unsafe { &*probe }.inner,
            threshold,
        );
        let (subject, score) = match id.ranked.first() {
            Some(&(s, v)) if v >= threshold => (s, v),
            Some(&(_, v)) => (0, v),
            None => (0, f64::NEG_INFINITY),
        };
        unsafe {
            *subject_out = subject;
            *score_out = score;
        }
        FpStatus::Ok
    })
}

/// Count the enrolled partials that match at least `fraction` of the other
/// subjects at the given threshold.
#[no_mangle]
pub unsafe extern "C" fn fp_masterprint_count(
    gallery: *const FpGallery,
    threshold: f64,
    fraction: f64,
    count_out: *mut usize,
) -> FpStatus {
    guarded(|| {
        if gallery.is_null() || count_out.is_null() {
            return FpStatus::NullArgument;
        }
        let flagged = eval::masterprint_scan(&unsafe { &*gallery }.inner, threshold, fraction);
        unsafe { *count_out = flagged.len() };
        FpStatus::Ok
    })
}
