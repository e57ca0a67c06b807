//! C ABI over a loaded session bundle.
//!
//! Every function returns a [`CfStatus`]. On failure a message is kept per
//! thread and can be read with [`cf_last_error`]. Handles are opaque and must
//! be released with [`cf_bundle_free`]. Point clouds are flat `x y z` triples.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use concept_forge::explore::blend;
use concept_forge::service::SessionBundle;
use concept_forge::shapes::PointCloud;
use concept_forge::Error;

/// Result codes shared by every entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    DimensionMismatch = 3,
    NotFound = 4,
    Io = 5,
    ArtifactMismatch = 6,
    Internal = 7,
}

/// Opaque handle to an immutable bundle.
pub struct CfBundle {
    inner: SessionBundle,
    names: Vec<CString>,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let msg = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(err: &Error) -> CfStatus {
    match err {
        Error::Dimension(_) => CfStatus::DimensionMismatch,
        Error::NotFound(_) => CfStatus::NotFound,
        Error::Io { .. } => CfStatus::Io,
        Error::ArtifactMismatch(_) => CfStatus::ArtifactMismatch,
        _ => CfStatus::InvalidInput,
    }
}

fn fail(status: CfStatus, msg: &str) -> CfStatus {
    set_error(msg);
    status
}

/// Runs `f`, mapping errors and panics onto status codes.
fn guard(f: impl FnOnce() -> Result<(), (CfStatus, String)>) -> CfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            CfStatus::Ok
        }
        Ok(Err((status, msg))) => fail(status, &msg),
        Err(_) => fail(CfStatus::Internal, "panic inside concept-forge"),
    }
}

fn lib(err: Error) -> (CfStatus, String) {
    (status_of(&err), err.to_string())
}

fn null(what: &str) -> (CfStatus, String) {
    (CfStatus::NullPointer, format!("{what} is null"))
}

unsafe fn bundle_ref<'a>(b: *const CfBundle) -> Result<&'a CfBundle, (CfStatus, String)> {
    b.as_ref().ok_or_else(|| null("bundle"))
}

unsafe fn slice<'a>(ptr: *const f64, len: usize, what: &str) -> Result<&'a [f64], (CfStatus, String)> {
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

unsafe fn slice_mut<'a>(ptr: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], (CfStatus, String)> {
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(ptr, len))
}

fn expect_len(got: usize, want: usize, what: &str) -> Result<(), (CfStatus, String)> {
    if got != want {
        return Err((CfStatus::DimensionMismatch, format!("{what} has length {got}, expected {want}")));
    }
    Ok(())
}

/// Message for the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn cf_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Loads the bundle directory at `dir` (a UTF-8 path) into `*out`.
///
/// # Safety
/// `dir` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cf_bundle_load(dir: *const c_char, out: *mut *mut CfBundle) -> CfStatus {
    guard(|| {
        if dir.is_null() {
            return Err(null("dir"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let dir = CStr::from_ptr(dir)
            .to_str()
            .map_err(|_| (CfStatus::InvalidInput, "dir is not UTF-8".to_string()))?;
        let inner = SessionBundle::load(Path::new(dir)).map_err(lib)?;
        let names = inner
            .cavs
            .keys()
            .map(|k| CString::new(k.as_str()).unwrap_or_default())
            .collect();
        *out = Box::into_raw(Box::new(CfBundle { inner, names }));
        Ok(())
    })
}

/// Releases a handle from [`cf_bundle_load`]. Null is ignored.
///
/// # Safety
/// `bundle` must come from [`cf_bundle_load`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn cf_bundle_free(bundle: *mut CfBundle) {
    if !bundle.is_null() {
        drop(Box::from_raw(bundle));
    }
}

/// Points per cloud, or 0 for a null handle.
///
/// # Safety
/// `bundle` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cf_bundle_points(bundle: *const CfBundle) -> usize {
    bundle.as_ref().map_or(0, |b| b.inner.ae.points())
}

/// Latent dimension, or 0 for a null handle.
///
/// # Safety
/// `bundle` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cf_bundle_latent_dim(bundle: *const CfBundle) -> usize {
    bundle.as_ref().map_or(0, |b| b.inner.ae.latent_dim())
}

/// Number of registered concepts, or 0 for a null handle.
///
/// # Safety
/// `bundle` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cf_concept_count(bundle: *const CfBundle) -> usize {
    bundle.as_ref().map_or(0, |b| b.names.len())
}

/// Name of concept `index` in sorted order, owned by the bundle. Null when out
/// of range.
///
/// # Safety
/// `bundle` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cf_concept_name(bundle: *const CfBundle, index: usize) -> *const c_char {
    bundle
        .as_ref()
        .and_then(|b| b.names.get(index))
        .map_or(std::ptr::null(), |n| n.as_ptr())
}

/// Encodes `3 * points` coordinates into `latent_len` latent values.
///
/// # Safety
/// Buffers must hold the stated number of doubles.
#[no_mangle]
pub unsafe extern "C" fn cf_encode(
    bundle: *const CfBundle,
    points: *const f64,
    points_len: usize,
    latent_out: *mut f64,
    latent_len: usize,
) -> CfStatus {
    guard(|| {
        let b = bundle_ref(bundle)?;
        expect_len(points_len, 3 * b.inner.ae.points(), "points")?;
        expect_len(latent_len, b.inner.ae.latent_dim(), "latent_out")?;
        let cloud = PointCloud::from_flat(slice(points, points_len, "points")?).map_err(lib)?;
        let z = b.inner.ae.encode(&cloud).map_err(lib)?;
        slice_mut(latent_out, latent_len, "latent_out")?.copy_from_slice(&z);
        Ok(())
    })
}

/// Decodes a latent code into `3 * points` coordinates.
///
/// # Safety
/// Buffers must hold the stated number of doubles.
#[no_mangle]
pub unsafe extern "C" fn cf_decode(
    bundle: *const CfBundle,
    latent: *const f64,
    latent_len: usize,
    points_out: *mut f64,
    points_len: usize,
) -> CfStatus {
    guard(|| {
        let b = bundle_ref(bundle)?;
        expect_len(latent_len, b.inner.ae.latent_dim(), "latent")?;
        expect_len(points_len, 3 * b.inner.ae.points(), "points_out")?;
        let cloud = b.inner.ae.decode(slice(latent, latent_len, "latent")?).map_err(lib)?;
        slice_mut(points_out, points_len, "points_out")?.copy_from_slice(&cloud.to_flat());
        Ok(())
    })
}

/// Predicted drag for a latent code.
///
/// # Safety
/// `latent` must hold `latent_len` doubles; `drag_out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn cf_predict_drag(
    bundle: *const CfBundle,
    latent: *const f64,
    latent_len: usize,
    drag_out: *mut f64,
) -> CfStatus {
    guard(|| {
        let b = bundle_ref(bundle)?;
        expect_len(latent_len, b.inner.regressor.latent_dim(), "latent")?;
        if drag_out.is_null() {
            return Err(null("drag_out"));
        }
        *drag_out = b.inner.regressor.predict(slice(latent, latent_len, "latent")?).map_err(lib)?;
        Ok(())
    })
}

/// Moves `latent` along the named concepts by the matching `eps` values and
/// writes the edited code. `out_of_box` (optional) reports whether the result
/// left the latent box.
///
/// # Safety
/// `names` and `eps` must hold `n_terms` entries, names NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn cf_blend(
    bundle: *const CfBundle,
    latent: *const f64,
    latent_len: usize,
    names: *const *const c_char,
    eps: *const f64,
    n_terms: usize,
    latent_out: *mut f64,
    out_of_box: *mut bool,
) -> CfStatus {
    guard(|| {
        let b = bundle_ref(bundle)?;
        expect_len(latent_len, b.inner.ae.latent_dim(), "latent")?;
        let z = slice(latent, latent_len, "latent")?;
        let mut terms = Vec::with_capacity(n_terms);
        if n_terms > 0 {
            if names.is_null() {
                return Err(null("names"));
            }
            let eps = slice(eps, n_terms, "eps")?;
            for (k, &e) in eps.iter().enumerate() {
                let name = *names.add(k);
                if name.is_null() {
                    return Err(null("concept name"));
                }
                let name = CStr::from_ptr(name).to_string_lossy();
                let cav = b
                    .inner
                    .cavs
                    .get(name.as_ref())
                    .ok_or_else(|| (CfStatus::NotFound, format!("unknown concept `{name}`")))?;
                terms.push((cav, e));
            }
        }
        let edited = blend(z, &terms).map_err(lib)?;
        slice_mut(latent_out, latent_len, "latent_out")?.copy_from_slice(&edited.latent);
        if !out_of_box.is_null() {
            *out_of_box = edited.out_of_box;
        }
        Ok(())
    })
}
