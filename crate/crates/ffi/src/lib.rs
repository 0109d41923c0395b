//! C ABI over `rwrs`.
//!
//! Objects cross the boundary as opaque handles created by `rwrs_*_new`-style
//! constructors and released with the matching `*_free`. Every fallible call
//! returns an [`RwrsStatus`]; on failure the message is available from
//! [`rwrs_last_error_message`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::fs::File;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use rwrs::inference::{changepoint_statistic, changepoint_test, Decision};
use rwrs::limits::{limit_constant, pillow_sup_quantiles, PillowQuantiles};
use rwrs::scenery::{evaluate_along, Scenery};
use rwrs::walk::{sample_path, ModelSpec, Path, Regime, WalkModel};
use rwrs::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RwrsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidLaw = 3,
    NotAperiodic = 4,
    RegimeUndetermined = 5,
    Numerical = 6,
    Io = 7,
    MissingQuantiles = 8,
    BufferTooSmall = 9,
    Panic = 10,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RwrsRegime {
    Transient = 0,
    Cauchy = 1,
    Planar = 2,
}

/// Outcome of [`rwrs_changepoint_test`].
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RwrsTestResult {
    pub t_n: f64,
    /// `T_n / (a_n sqrt(c))`.
    pub normalized: f64,
    pub critical_value: f64,
    pub p_value: f64,
    pub reject: bool,
}

/// Walk model handle.
pub struct RwrsModel(WalkModel);

/// Sampled path handle.
pub struct RwrsPath(Path);

/// Pillow-supremum quantile table handle.
pub struct RwrsQuantiles(PillowQuantiles);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> RwrsStatus {
    match e {
        Error::InvalidLaw(_) => RwrsStatus::InvalidLaw,
        Error::NotAperiodic => RwrsStatus::NotAperiodic,
        Error::RegimeUndetermined(_) | Error::MissingParameter(_) => RwrsStatus::RegimeUndetermined,
        Error::SingularCovariance(_)
        | Error::ConvolutionTooLarge { .. }
        | Error::NotTransient
        | Error::NoConvergence(_)
        | Error::FitDiverged(_)
        | Error::CoordinateOverflow => RwrsStatus::Numerical,
        Error::Io(_) | Error::Csv(_) => RwrsStatus::Io,
        Error::MissingQuantiles(_) => RwrsStatus::MissingQuantiles,
        _ => RwrsStatus::InvalidArgument,
    }
}

/// Runs `f`, recording errors and panics.
fn guard(f: impl FnOnce() -> Result<(), (RwrsStatus, String)>) -> RwrsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => RwrsStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside rwrs".into());
            RwrsStatus::Panic
        }
    }
}

fn lift<T>(r: rwrs::Result<T>) -> Result<T, (RwrsStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (RwrsStatus, String) {
    (RwrsStatus::NullPointer, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, (RwrsStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (RwrsStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn out_slice<'a, T>(
    buf: *mut T,
    len: usize,
    need: usize,
) -> Result<&'a mut [T], (RwrsStatus, String)> {
    if buf.is_null() {
        return Err(null("buffer"));
    }
    if len < need {
        return Err((
            RwrsStatus::BufferTooSmall,
            format!("buffer holds {len} elements, {need} needed"),
        ));
    }
    Ok(std::slice::from_raw_parts_mut(buf, need))
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn rwrs_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn rwrs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Builds a model from its JSON specification.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rwrs_model_from_json(
    json: *const c_char,
    out: *mut *mut RwrsModel,
) -> RwrsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let text = str_arg(json, "json")?;
        let model = lift(ModelSpec::from_json(text).and_then(|s| s.build()))?;
        *out = Box::into_raw(Box::new(RwrsModel(model)));
        Ok(())
    })
}

/// # Safety
/// `model` must come from [`rwrs_model_from_json`] and not be used again.
#[no_mangle]
pub unsafe extern "C" fn rwrs_model_free(model: *mut RwrsModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// # Safety
/// `model` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn rwrs_model_regime(
    model: *const RwrsModel,
    out: *mut RwrsRegime,
) -> RwrsStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = match m.0.regime {
            Regime::Transient => RwrsRegime::Transient,
            Regime::Cauchy => RwrsRegime::Cauchy,
            Regime::Planar => RwrsRegime::Planar,
        };
        Ok(())
    })
}

/// Lattice dimension of the model, 0 for a null handle.
///
/// # Safety
/// `model` must be null or valid.
#[no_mangle]
pub unsafe extern "C" fn rwrs_model_dim(model: *const RwrsModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.dim())
}

/// Limit constant `c` and its error bound.
///
/// # Safety
/// All pointers must be valid; `error_bound` may be null.
#[no_mangle]
pub unsafe extern "C" fn rwrs_limit_constant(
    model: *const RwrsModel,
    c: *mut f64,
    error_bound: *mut f64,
) -> RwrsStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        if c.is_null() {
            return Err(null("c"));
        }
        let lc = lift(limit_constant(&m.0))?;
        *c = lc.c;
        if !error_bound.is_null() {
            *error_bound = lc.error_bound;
        }
        Ok(())
    })
}

/// Samples `S_1..S_n`.
///
/// # Safety
/// `model` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn rwrs_sample_path(
    model: *const RwrsModel,
    n: usize,
    seed: u64,
    out: *mut *mut RwrsPath,
) -> RwrsStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let path = lift(sample_path(&m.0, n, seed))?;
        *out = Box::into_raw(Box::new(RwrsPath(path)));
        Ok(())
    })
}

/// # Safety
/// `path` must come from [`rwrs_sample_path`] and not be used again.
#[no_mangle]
pub unsafe extern "C" fn rwrs_path_free(path: *mut RwrsPath) {
    if !path.is_null() {
        drop(Box::from_raw(path));
    }
}

/// Number of steps, 0 for a null handle.
///
/// # Safety
/// `path` must be null or valid.
#[no_mangle]
pub unsafe extern "C" fn rwrs_path_len(path: *const RwrsPath) -> usize {
    path.as_ref().map_or(0, |p| p.0.len())
}

/// # Safety
/// `path` must be null or valid.
#[no_mangle]
pub unsafe extern "C" fn rwrs_path_dim(path: *const RwrsPath) -> usize {
    path.as_ref().map_or(0, |p| p.0.dim())
}

/// Copies the `len * dim` coordinates, step-major, into `buf`.
///
/// # Safety
/// `buf` must point to `buf_len` writable elements.
#[no_mangle]
pub unsafe extern "C" fn rwrs_path_coords(
    path: *const RwrsPath,
    buf: *mut i64,
    buf_len: usize,
) -> RwrsStatus {
    guard(|| {
        let p = path.as_ref().ok_or_else(|| null("path"))?;
        let coords = p.0.coords();
        out_slice(buf, buf_len, coords.len())?.copy_from_slice(coords);
        Ok(())
    })
}

/// Uniform scenery marks `ξ_{S_1}, ..., ξ_{S_n}` for `scenery_seed`.
///
/// # Safety
/// `buf` must point to `buf_len` writable elements.
#[no_mangle]
pub unsafe extern "C" fn rwrs_scenery_marks(
    path: *const RwrsPath,
    scenery_seed: u64,
    buf: *mut f64,
    buf_len: usize,
) -> RwrsStatus {
    guard(|| {
        let p = path.as_ref().ok_or_else(|| null("path"))?;
        let marks = lift(evaluate_along(&p.0, &Scenery::new(scenery_seed, p.0.dim())))?;
        out_slice(buf, buf_len, marks.len())?.copy_from_slice(&marks);
        Ok(())
    })
}

/// Change-point statistic `T_n` of `values[0..n]`.
///
/// # Safety
/// `values` must point to `n` readable elements and `out` be valid.
#[no_mangle]
pub unsafe extern "C" fn rwrs_changepoint_statistic(
    values: *const f64,
    n: usize,
    out: *mut f64,
) -> RwrsStatus {
    guard(|| {
        if values.is_null() {
            return Err(null("values"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        *out = lift(changepoint_statistic(std::slice::from_raw_parts(values, n)))?;
        Ok(())
    })
}

/// Simulates pillow-supremum quantiles at resolution `m` with `r`
/// replicates.
///
/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn rwrs_pillow_quantiles(
    m: usize,
    r: usize,
    seed: u64,
    out: *mut *mut RwrsQuantiles,
) -> RwrsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let q = lift(pillow_sup_quantiles(m, r, seed))?;
        *out = Box::into_raw(Box::new(RwrsQuantiles(q)));
        Ok(())
    })
}

/// Loads a `level,sup_value` CSV table.
///
/// # Safety
/// `csv_path` must be a NUL-terminated string and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn rwrs_quantiles_from_csv(
    csv_path: *const c_char,
    out: *mut *mut RwrsQuantiles,
) -> RwrsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let p = str_arg(csv_path, "csv_path")?;
        let file = File::open(p).map_err(|e| (RwrsStatus::Io, format!("{p}: {e}")))?;
        let q = lift(PillowQuantiles::read_csv(file))?;
        *out = Box::into_raw(Box::new(RwrsQuantiles(q)));
        Ok(())
    })
}

/// # Safety
/// `q` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn rwrs_quantiles_value(
    q: *const RwrsQuantiles,
    level: f64,
    out: *mut f64,
) -> RwrsStatus {
    guard(|| {
        let q = q.as_ref().ok_or_else(|| null("quantiles"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = lift(q.0.quantile(level))?;
        Ok(())
    })
}

/// # Safety
/// `q` must come from this library and not be used again.
#[no_mangle]
pub unsafe extern "C" fn rwrs_quantiles_free(q: *mut RwrsQuantiles) {
    if !q.is_null() {
        drop(Box::from_raw(q));
    }
}

/// Change-point test at level `alpha`.
///
/// # Safety
/// `values` must point to `n` readable elements; handles and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn rwrs_changepoint_test(
    values: *const f64,
    n: usize,
    model: *const RwrsModel,
    alpha: f64,
    quantiles: *const RwrsQuantiles,
    out: *mut RwrsTestResult,
) -> RwrsStatus {
    guard(|| {
        if values.is_null() {
            return Err(null("values"));
        }
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let q = quantiles.as_ref().ok_or_else(|| null("quantiles"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let rep = lift(changepoint_test(
            std::slice::from_raw_parts(values, n),
            &m.0,
            alpha,
            &q.0,
        ))?;
        *out = RwrsTestResult {
            t_n: rep.t_n,
            normalized: rep.normalized,
            critical_value: rep.critical_value,
            p_value: rep.p_value,
            reject: rep.decision == Decision::Reject,
        };
        Ok(())
    })
}
