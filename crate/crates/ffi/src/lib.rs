//! C ABI over `homwalk`.
//!
//! Measures and subgroup specs are opaque handles created from JSON and
//! released with the matching `_free`. Every call returns an [`HwStatus`];
//! on failure the message is available from [`hw_last_error`] until the
//! next failing call on the same thread. Matrices cross the boundary as
//! row-major `double` arrays.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use homwalk::classify::{classify, Reason, VerdictKind};
use homwalk::decomp::{cartan_projection, iwasawa_cocycle, AVector, FlagPoint};
use homwalk::group::{matrix_from_rows, parse_measure, FiniteMeasure, GroupElement};
use homwalk::lyapunov::{estimate_lyapunov, LyapunovEstimate};
use homwalk::subgroup::{parse_subgroup, SubgroupSpec};
use homwalk::transfer::stationary_measure;
use homwalk::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HwStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Parse = 3,
    InvalidInput = 4,
    DimensionMismatch = 5,
    Numerical = 6,
    NoConvergence = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HwVerdictKind {
    Recurrent = 0,
    Transient = 1,
    Indeterminate = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HwReason {
    ProperUnipotent = 0,
    DriftOffAprime = 1,
    CodimAtLeast3 = 2,
    CriterionMet = 3,
    StatisticallyAmbiguous = 4,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HwVerdict {
    pub kind: HwVerdictKind,
    pub reason: HwReason,
    pub distance_to_aprime: f64,
    pub threshold: f64,
    pub codim: usize,
}

/// Opaque finite probability measure on SL(d,R).
pub struct HwMeasure(FiniteMeasure);

/// Opaque subgroup `A'N'` in normal form.
pub struct HwSpec(SubgroupSpec);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> HwStatus {
    match e {
        Error::Parse(_) => HwStatus::Parse,
        Error::DimensionMismatch { .. } | Error::UnsupportedDimension(_) | Error::NonSquare { .. } => {
            HwStatus::DimensionMismatch
        }
        Error::NumericalBreakdown(_) | Error::SvdFailure | Error::NonFinite => HwStatus::Numerical,
        Error::NoConvergence { .. } | Error::NoContraction { .. } => HwStatus::NoConvergence,
        _ => HwStatus::InvalidInput,
    }
}

/// Runs `f`, converting errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), (HwStatus, String)>) -> HwStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => HwStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            HwStatus::Panic
        }
    }
}

fn lift(e: Error) -> (HwStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (HwStatus, String) {
    (HwStatus::NullPointer, format!("{what} is null"))
}

unsafe fn read_str<'a>(s: *const c_char) -> Result<&'a str, (HwStatus, String)> {
    if s.is_null() {
        return Err(null("string argument"));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| (HwStatus::InvalidUtf8, "string is not valid UTF-8".into()))
}

unsafe fn read_matrix(d: usize, data: *const f64) -> Result<Vec<Vec<f64>>, (HwStatus, String)> {
    if data.is_null() {
        return Err(null("matrix"));
    }
    let flat = std::slice::from_raw_parts(data, d * d);
    Ok(flat.chunks(d).map(<[f64]>::to_vec).collect())
}

unsafe fn out_slice<'a>(p: *mut f64, n: usize, what: &str) -> Result<&'a mut [f64], (HwStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, n))
}

/// Message of the last failing call on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn hw_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn hw_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parses a measure file (`{"dim": d, "atoms": [{"weight", "matrix"}]}`).
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hw_measure_from_json(json: *const c_char, out: *mut *mut HwMeasure) -> HwStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let m = parse_measure(read_str(json)?).map_err(lift)?;
        *out = Box::into_raw(Box::new(HwMeasure(m)));
        Ok(())
    })
}

/// # Safety
/// `m` must come from [`hw_measure_from_json`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn hw_measure_free(m: *mut HwMeasure) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Matrix size `d` of the measure, 0 for a null handle.
///
/// # Safety
/// `m` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hw_measure_dim(m: *const HwMeasure) -> usize {
    m.as_ref().map_or(0, |m| m.0.dim())
}

/// Parses a subgroup file (`{"dim", "a_prime_basis", "unipotent_part"}`).
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hw_spec_from_json(json: *const c_char, out: *mut *mut HwSpec) -> HwStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let s = parse_subgroup(read_str(json)?).map_err(lift)?;
        *out = Box::into_raw(Box::new(HwSpec(s)));
        Ok(())
    })
}

/// # Safety
/// `s` must come from [`hw_spec_from_json`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn hw_spec_free(s: *mut HwSpec) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Dimension of `E = a/a'`, 0 for a null handle.
///
/// # Safety
/// `s` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hw_spec_codim(s: *const HwSpec) -> usize {
    s.as_ref().map_or(0, |s| s.0.codim())
}

/// `sigma(g, eta)` and `g . eta`. `eta` is an orthonormal frame (row-major,
/// columns are the frame vectors) or null for the base flag; `eta_out`
/// may be null.
///
/// # Safety
/// `g` and a non-null `eta`/`eta_out` point to `d*d` doubles; `sigma_out`
/// to `d` doubles.
#[no_mangle]
pub unsafe extern "C" fn hw_iwasawa_cocycle(
    d: usize,
    g: *const f64,
    eta: *const f64,
    sigma_out: *mut f64,
    eta_out: *mut f64,
) -> HwStatus {
    guard(|| {
        let g = GroupElement::new(matrix_from_rows(&read_matrix(d, g)?).map_err(lift)?).map_err(lift)?;
        let eta = if eta.is_null() {
            FlagPoint::base(d)
        } else {
            FlagPoint::from_frame(matrix_from_rows(&read_matrix(d, eta)?).map_err(lift)?).map_err(lift)?
        };
        let (sigma, image) = iwasawa_cocycle(&g, &eta).map_err(lift)?;
        out_slice(sigma_out, d, "sigma_out")?.copy_from_slice(sigma.coords());
        if !eta_out.is_null() {
            let rows = image.to_rows();
            let out = out_slice(eta_out, d * d, "eta_out")?;
            for (o, x) in out.iter_mut().zip(rows.iter().flatten()) {
                *o = *x;
            }
        }
        Ok(())
    })
}

/// Cartan projection `kappa(g)`, sorted decreasing.
///
/// # Safety
/// `g` points to `d*d` doubles and `kappa_out` to `d` doubles.
#[no_mangle]
pub unsafe extern "C" fn hw_cartan_projection(d: usize, g: *const f64, kappa_out: *mut f64) -> HwStatus {
    guard(|| {
        let g = GroupElement::new(matrix_from_rows(&read_matrix(d, g)?).map_err(lift)?).map_err(lift)?;
        let k = cartan_projection(&g).map_err(lift)?;
        out_slice(kappa_out, d, "kappa_out")?.copy_from_slice(k.coords());
        Ok(())
    })
}

/// Lyapunov vector estimate from the base flag.
///
/// # Safety
/// `m` is a live handle; `mean_out` and `stderr_out` point to `d` doubles.
#[no_mangle]
pub unsafe extern "C" fn hw_estimate_lyapunov(
    m: *const HwMeasure,
    n_steps: usize,
    n_trajectories: usize,
    master_seed: u64,
    mean_out: *mut f64,
    stderr_out: *mut f64,
) -> HwStatus {
    guard(|| {
        let m = m.as_ref().ok_or_else(|| null("measure"))?;
        let est = estimate_lyapunov(&m.0, n_steps, n_trajectories, master_seed).map_err(lift)?;
        let d = m.0.dim();
        out_slice(mean_out, d, "mean_out")?.copy_from_slice(est.mean.coords());
        out_slice(stderr_out, d, "stderr_out")?.copy_from_slice(&est.stderr);
        Ok(())
    })
}

/// Recurrence verdict from a Lyapunov estimate (`d` entries each).
///
/// # Safety
/// `s` is a live handle; `mean`, `stderr` point to `d` doubles; `out` is
/// valid.
#[no_mangle]
pub unsafe extern "C" fn hw_classify(
    s: *const HwSpec,
    d: usize,
    mean: *const f64,
    stderr: *const f64,
    z: f64,
    out: *mut HwVerdict,
) -> HwStatus {
    guard(|| {
        let s = s.as_ref().ok_or_else(|| null("spec"))?;
        if mean.is_null() || stderr.is_null() {
            return Err(null("mean/stderr"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let mean = AVector::new(std::slice::from_raw_parts(mean, d).to_vec()).map_err(lift)?;
        let se = std::slice::from_raw_parts(stderr, d).to_vec();
        let est = LyapunovEstimate::from_parts(mean, se, 0, 0).map_err(lift)?;
        let v = classify(&s.0, &est, z).map_err(lift)?;
        *out = HwVerdict {
            kind: match v.kind {
                VerdictKind::Recurrent => HwVerdictKind::Recurrent,
                VerdictKind::Transient => HwVerdictKind::Transient,
                VerdictKind::Indeterminate => HwVerdictKind::Indeterminate,
            },
            reason: match v.reason {
                Reason::ProperUnipotent => HwReason::ProperUnipotent,
                Reason::DriftOffAprime => HwReason::DriftOffAprime,
                Reason::CodimAtLeast3 => HwReason::CodimAtLeast3,
                Reason::CriterionMet => HwReason::CriterionMet,
                Reason::StatisticallyAmbiguous => HwReason::StatisticallyAmbiguous,
            },
            distance_to_aprime: v.distance_to_aprime,
            threshold: v.threshold,
            codim: v.codim,
        };
        Ok(())
    })
}

/// Grid stationary measure for `d = 2` (weights at angles `i pi / n`).
///
/// # Safety
/// `m` is a live handle and `weights_out` points to `n_points` doubles.
#[no_mangle]
pub unsafe extern "C" fn hw_stationary_measure(
    m: *const HwMeasure,
    n_points: usize,
    tol: f64,
    max_iter: usize,
    weights_out: *mut f64,
) -> HwStatus {
    guard(|| {
        let m = m.as_ref().ok_or_else(|| null("measure"))?;
        let nu = stationary_measure(&m.0, n_points, tol, max_iter).map_err(lift)?;
        out_slice(weights_out, n_points, "weights_out")?.copy_from_slice(&nu);
        Ok(())
    })
}
