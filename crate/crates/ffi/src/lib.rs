//! C ABI over `dts-core`.
//!
//! Every function returns a [`DtsStatus`]; on failure the message is kept in
//! a thread-local slot readable through [`dts_last_error`]. Objects cross the
//! boundary as opaque handles that the caller frees with the matching
//! `*_free` function. Strings returned to the caller are owned by the caller
//! and released with [`dts_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use dts_core::layout::{iou, numerical_matching, parse_scene_layout, BoundingBox, ExpectedCounts, SceneLayout};
use dts_core::run::{run_generate, GenerateParams};
use dts_core::{Error, LatentTensor};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DtsStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Schema = 3,
    Geometry = 4,
    DimMismatch = 5,
    Plan = 6,
    StepOutOfRange = 7,
    Backend = 8,
    Overlap = 9,
    Infeasible = 10,
    Config = 11,
    Format = 12,
    Io = 13,
    Panic = 14,
}

impl From<&Error> for DtsStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Schema(_) => DtsStatus::Schema,
            Error::Geometry(_) => DtsStatus::Geometry,
            Error::DimMismatch(_) => DtsStatus::DimMismatch,
            Error::WindowTooLarge { .. } | Error::InvalidStride { .. } | Error::Coverage { .. } => DtsStatus::Plan,
            Error::StepOutOfRange { .. } => DtsStatus::StepOutOfRange,
            Error::Backend { .. } => DtsStatus::Backend,
            Error::Overlap { .. } => DtsStatus::Overlap,
            Error::Infeasible(_) => DtsStatus::Infeasible,
            Error::Config(_) => DtsStatus::Config,
            Error::Format(_) => DtsStatus::Format,
            Error::Io(_) => DtsStatus::Io,
        }
    }
}

/// Parsed, validated scene layout.
pub struct DtsLayout(SceneLayout);

/// Latent tensor, `height x width x channels`, channel index fastest.
pub struct DtsTensor(LatentTensor);

/// Precision, recall and F1 of a count match.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DtsScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

struct Failure(DtsStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(DtsStatus::from(&e), e.to_string())
    }
}

/// Run `f`, clearing the error slot first; failures and panics are recorded.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> DtsStatus {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DtsStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            DtsStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(DtsStatus::NullArgument, format!("{what} is null"))
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(DtsStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn write_out<T>(out: *mut T, value: T, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

fn owned_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).expect("interior NULs removed").into_raw()
}

/// Message of the last failed call on this thread, or null after a success.
/// The pointer stays valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn dts_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn dts_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `s` must be null or a string returned by this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn dts_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parse and validate a layout document.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dts_layout_parse(json: *const c_char, out: *mut *mut DtsLayout) -> DtsStatus {
    guard(|| {
        let doc = text(json, "json")?;
        let layout = parse_scene_layout(doc)?;
        write_out(out, Box::into_raw(Box::new(DtsLayout(layout))), "out")
    })
}

/// Canonical JSON of a layout; free with [`dts_string_free`].
///
/// # Safety
/// `layout` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dts_layout_to_json(layout: *const DtsLayout, out: *mut *mut c_char) -> DtsStatus {
    guard(|| {
        let l = handle(layout, "layout")?;
        write_out(out, owned_string(l.0.to_json()), "out")
    })
}

/// Count matching against expected counts; a negative count leaves that
/// category unscored.
///
/// # Safety
/// `layout` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dts_layout_metrics(
    layout: *const DtsLayout,
    groups: i64,
    humans: i64,
    objects: i64,
    out: *mut DtsScores,
) -> DtsStatus {
    guard(|| {
        let l = handle(layout, "layout")?;
        let want = |n: i64| usize::try_from(n).ok();
        let expected = ExpectedCounts {
            groups: want(groups),
            humans: want(humans),
            objects: want(objects),
        };
        let r = numerical_matching(&expected, &l.0);
        write_out(
            out,
            DtsScores {
                precision: r.precision,
                recall: r.recall,
                f1: r.f1,
            },
            "out",
        )
    })
}

/// # Safety
/// `layout` must be null or a handle from [`dts_layout_parse`], freed once.
#[no_mangle]
pub unsafe extern "C" fn dts_layout_free(layout: *mut DtsLayout) {
    if !layout.is_null() {
        drop(Box::from_raw(layout));
    }
}

/// Intersection over union of two `[x0, y0, x1, y1]` boxes.
///
/// # Safety
/// `a` and `b` must point at four doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dts_iou(a: *const f64, b: *const f64, out: *mut f64) -> DtsStatus {
    guard(|| {
        let read = |p: *const f64, what: &str| -> Result<BoundingBox, Failure> {
            if p.is_null() {
                return Err(null(what));
            }
            let v = std::slice::from_raw_parts(p, 4);
            Ok(BoundingBox::new(v[0], v[1], v[2], v[3])?)
        };
        let value = iou(&read(a, "a")?, &read(b, "b")?);
        write_out(out, value, "out")
    })
}

/// Run a generation from JSON parameters, writing the latent to `out_path`
/// and its manifest beside it. The manifest JSON is returned through
/// `manifest_out` when that pointer is non-null.
///
/// # Safety
/// `params_json` and `out_path` must be NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn dts_generate(
    params_json: *const c_char,
    out_path: *const c_char,
    manifest_out: *mut *mut c_char,
) -> DtsStatus {
    guard(|| {
        let params: GenerateParams = serde_json::from_str(text(params_json, "params_json")?)
            .map_err(|e| Failure(DtsStatus::Schema, format!("generation parameters: {e}")))?;
        let manifest = run_generate(&params, Path::new(text(out_path, "out_path")?))?;
        if !manifest_out.is_null() {
            let json = serde_json::to_string(&manifest).expect("manifest serializes");
            manifest_out.write(owned_string(json));
        }
        Ok(())
    })
}

/// Tensor from `height * width * channels` values in storage order.
///
/// # Safety
/// `data` must point at that many doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dts_tensor_from_data(
    height: usize,
    width: usize,
    channels: usize,
    data: *const f64,
    out: *mut *mut DtsTensor,
) -> DtsStatus {
    guard(|| {
        if data.is_null() {
            return Err(null("data"));
        }
        let n = height
            .checked_mul(width)
            .and_then(|v| v.checked_mul(channels))
            .ok_or_else(|| Failure(DtsStatus::DimMismatch, "tensor size overflows".into()))?;
        let values = std::slice::from_raw_parts(data, n).to_vec();
        let t = LatentTensor::from_vec(height, width, channels, values)?;
        write_out(out, Box::into_raw(Box::new(DtsTensor(t))), "out")
    })
}

/// Load a tensor file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dts_tensor_load(path: *const c_char, out: *mut *mut DtsTensor) -> DtsStatus {
    guard(|| {
        let t = LatentTensor::load(text(path, "path")?)?;
        write_out(out, Box::into_raw(Box::new(DtsTensor(t))), "out")
    })
}

/// Save a tensor file; values are stored as `f32`.
///
/// # Safety
/// `tensor` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn dts_tensor_save(tensor: *const DtsTensor, path: *const c_char) -> DtsStatus {
    guard(|| {
        let t = handle(tensor, "tensor")?;
        t.0.save(text(path, "path")?)?;
        Ok(())
    })
}

/// # Safety
/// `tensor` must be a live handle; the out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn dts_tensor_dims(
    tensor: *const DtsTensor,
    height: *mut usize,
    width: *mut usize,
    channels: *mut usize,
) -> DtsStatus {
    guard(|| {
        let (h, w, d) = handle(tensor, "tensor")?.0.dims();
        write_out(height, h, "height")?;
        write_out(width, w, "width")?;
        write_out(channels, d, "channels")
    })
}

/// Borrowed view of the values in storage order; valid while the handle
/// lives. Null when `tensor` is null.
///
/// # Safety
/// `tensor` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dts_tensor_data(tensor: *const DtsTensor) -> *const f64 {
    tensor.as_ref().map_or(ptr::null(), |t| t.0.as_slice().as_ptr())
}

/// Hex SHA-256 of the tensor's file encoding; free with [`dts_string_free`].
///
/// # Safety
/// `tensor` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dts_tensor_digest(tensor: *const DtsTensor, out: *mut *mut c_char) -> DtsStatus {
    guard(|| {
        let t = handle(tensor, "tensor")?;
        write_out(out, owned_string(t.0.digest()), "out")
    })
}

/// # Safety
/// `tensor` must be null or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn dts_tensor_free(tensor: *mut DtsTensor) {
    if !tensor.is_null() {
        drop(Box::from_raw(tensor));
    }
}
