//! C ABI over rbm-kpz.
//!
//! Every function returns an [`RbmStatus`]; results go through out-pointers.
//! Objects with state are exposed as opaque handles that the caller releases
//! with the matching `*_free` function. The message of the last failure on
//! the calling thread is available from [`rbm_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use rbm_kpz::airylim::{cdf_limit, LimitOptions, LimitProcess, PointConfig};
use rbm_kpz::dynamics::{rescaled_samples, SampleOptions, ScaledSample, SupRule};
use rbm_kpz::finitet::{finite_t_cdf_with, kernel_finite, FiniteOptions, FiniteTimeKernelSpec};
use rbm_kpz::paths::Flavor;
use rbm_kpz::Error;

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RbmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Domain = 3,
    NonFinite = 4,
    IndexRange = 5,
    Contour = 6,
    Derivative = 7,
    Singular = 8,
    Io = 9,
    Panic = 10,
}

/// Families of initial data.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RbmFlavor {
    Packed = 0,
    Flat = 1,
    Stat = 2,
    HalfFlat = 3,
    HalfStat = 4,
    StatFlat = 5,
}

/// Limit processes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RbmProcess {
    Airy2 = 0,
    Airy2Prime = 1,
    Airy1 = 2,
    Airy2To1 = 3,
    Airy2ToBm = 4,
    AiryBmTo1 = 5,
    FiniteStep = 6,
    AiryStat = 7,
}

/// Supremum rules of the simulation.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RbmSupRule {
    Grid = 0,
    Corrected = 1,
    Bridge = 2,
}

/// One rescaled observation.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RbmSample {
    pub replica: u64,
    pub r: f64,
    pub theta: f64,
    pub value: f64,
}

/// Finite-time kernel specification (flavor, time, contours).
pub struct RbmKernelSpec {
    inner: FiniteTimeKernelSpec,
}

/// Simulated rescaled samples, ordered by replica and then by target.
pub struct RbmSamples {
    inner: Vec<RbmSample>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> RbmStatus {
    match e {
        Error::Domain(_) | Error::BranchCut { .. } => RbmStatus::Domain,
        Error::NonFinite(_) | Error::NonFiniteKernel { .. } => RbmStatus::NonFinite,
        Error::EmptyRange { .. } | Error::RangeMismatch(_) | Error::IndexUnderflow(_) | Error::OffGrid(_) => {
            RbmStatus::IndexRange
        }
        Error::Contour(_) => RbmStatus::Contour,
        Error::Derivative(_) => RbmStatus::Derivative,
        Error::Singular(_) => RbmStatus::Singular,
        Error::Config(_) => RbmStatus::InvalidArgument,
        Error::Io(_) => RbmStatus::Io,
    }
}

/// Runs `f`, translating errors and panics into status codes.
fn guard<F: FnOnce() -> Result<(), RbmStatus>>(f: F) -> RbmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => RbmStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("internal panic".into());
            RbmStatus::Panic
        }
    }
}

fn fail(e: Error) -> RbmStatus {
    let s = status_of(&e);
    set_error(e.to_string());
    s
}

fn null(what: &str) -> RbmStatus {
    set_error(format!("{what} is null"));
    RbmStatus::NullPointer
}

/// # Safety
/// `p` must be null or point to `len` readable values.
unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], RbmStatus> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

fn flavor(f: RbmFlavor, lambda: f64, rho: f64) -> Result<Flavor, RbmStatus> {
    let f = match f {
        RbmFlavor::Packed => Flavor::Packed,
        RbmFlavor::Flat => Flavor::Flat,
        RbmFlavor::Stat => Flavor::Stat { lambda, rho },
        RbmFlavor::HalfFlat => Flavor::HalfFlat,
        RbmFlavor::HalfStat => Flavor::HalfStat { lambda },
        RbmFlavor::StatFlat => Flavor::StatFlat { rho },
    };
    f.validate().map_err(fail)?;
    Ok(f)
}

fn process(p: RbmProcess, delta: f64) -> Result<LimitProcess, RbmStatus> {
    let p = match p {
        RbmProcess::Airy2 => LimitProcess::Airy2,
        RbmProcess::Airy2Prime => LimitProcess::Airy2Prime,
        RbmProcess::Airy1 => LimitProcess::Airy1,
        RbmProcess::Airy2To1 => LimitProcess::Airy2To1,
        RbmProcess::Airy2ToBm => LimitProcess::Airy2ToBm,
        RbmProcess::AiryBmTo1 => LimitProcess::AiryBmTo1,
        RbmProcess::FiniteStep => LimitProcess::FiniteStep { delta },
        RbmProcess::AiryStat => LimitProcess::AiryStat,
    };
    p.validate().map_err(fail)?;
    Ok(p)
}

/// Message of the last failure on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn rbm_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn rbm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Creates a kernel specification. `lambda` and `rho` are read only by the
/// flavors that use them.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn rbm_kernel_spec_new(
    flavor_id: RbmFlavor,
    lambda: f64,
    rho: f64,
    t: f64,
    out: *mut *mut RbmKernelSpec,
) -> RbmStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let f = flavor(flavor_id, lambda, rho)?;
        let inner = FiniteTimeKernelSpec::new(f, t).map_err(fail)?;
        *out = Box::into_raw(Box::new(RbmKernelSpec { inner }));
        Ok(())
    })
}

/// Releases a kernel specification. Null is ignored.
///
/// # Safety
/// `spec` must be null or a handle from [`rbm_kernel_spec_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rbm_kernel_spec_free(spec: *mut RbmKernelSpec) {
    if !spec.is_null() {
        drop(Box::from_raw(spec));
    }
}

/// Kernel value K_t(n1, xi1; n2, xi2).
///
/// # Safety
/// `spec` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rbm_kernel_eval(
    spec: *const RbmKernelSpec,
    n1: i64,
    xi1: f64,
    n2: i64,
    xi2: f64,
    out: *mut f64,
) -> RbmStatus {
    guard(|| {
        let spec = spec.as_ref().ok_or_else(|| null("spec"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = kernel_finite(&spec.inner, n1, xi1, n2, xi2).map_err(fail)?;
        Ok(())
    })
}

/// P(x_{n_k}(t) ≤ a_k for k < len). `order` 0 and `lcut` ≤ 0 select the
/// defaults.
///
/// # Safety
/// `spec` must be a live handle, `n` and `a` must point to `len` values and
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rbm_finite_cdf(
    spec: *const RbmKernelSpec,
    n: *const i64,
    a: *const f64,
    len: usize,
    order: usize,
    lcut: f64,
    out: *mut f64,
) -> RbmStatus {
    guard(|| {
        let spec = spec.as_ref().ok_or_else(|| null("spec"))?;
        let n = slice(n, len, "n")?;
        let a = slice(a, len, "a")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let d = FiniteOptions::default();
        let opts = FiniteOptions {
            order: if order == 0 { d.order } else { order },
            lcut: if lcut > 0.0 { lcut } else { d.lcut },
        };
        *out = finite_t_cdf_with(&spec.inner, n, a, opts).map_err(fail)?;
        Ok(())
    })
}

/// Joint CDF of a limit process at the points (r_k, s_k). `delta` is read
/// only by the finite-step process; `order` 0 and `lcut` ≤ 0 select the
/// defaults.
///
/// # Safety
/// `r` and `s` must point to `len` values and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rbm_limit_cdf(
    process_id: RbmProcess,
    delta: f64,
    r: *const f64,
    s: *const f64,
    len: usize,
    order: usize,
    lcut: f64,
    out: *mut f64,
) -> RbmStatus {
    guard(|| {
        let p = process(process_id, delta)?;
        let r = slice(r, len, "r")?;
        let s = slice(s, len, "s")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let d = LimitOptions::default();
        let opts = LimitOptions {
            order: if order == 0 { d.order } else { order },
            lcut: if lcut > 0.0 { lcut } else { d.lcut },
        };
        let cfg = PointConfig::new(r.to_vec(), s.to_vec()).map_err(fail)?;
        *out = cdf_limit(p, &cfg, opts).map_err(fail)?;
        Ok(())
    })
}

/// Simulates rescaled positions at the targets (r_k, theta_k). `theta` may
/// be null for all-zero shifts; `dt` ≤ 0 selects the default step and
/// `sup_rule` selects how suprema between grid points are taken.
///
/// # Safety
/// `r` (and `theta` unless null) must point to `len` values; `out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn rbm_simulate(
    flavor_id: RbmFlavor,
    lambda: f64,
    rho: f64,
    t: f64,
    r: *const f64,
    theta: *const f64,
    len: usize,
    samples: usize,
    seed: u64,
    dt: f64,
    sup_rule: RbmSupRule,
    out: *mut *mut RbmSamples,
) -> RbmStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let f = flavor(flavor_id, lambda, rho)?;
        let r = slice(r, len, "r")?;
        let theta = if theta.is_null() { vec![0.0; len] } else { slice(theta, len, "theta")?.to_vec() };
        let opts = SampleOptions {
            dt: if dt > 0.0 { Some(dt) } else { None },
            sup_rule: match sup_rule {
                RbmSupRule::Grid => SupRule::Grid,
                RbmSupRule::Corrected => SupRule::Corrected,
                RbmSupRule::Bridge => SupRule::Bridge,
            },
            ..SampleOptions::default()
        };
        let rows = rescaled_samples(f, t, r, &theta, samples, seed, opts).map_err(fail)?;
        let inner = rows
            .into_iter()
            .flatten()
            .map(|s: ScaledSample| RbmSample { replica: s.replica, r: s.r, theta: s.theta, value: s.value })
            .collect();
        *out = Box::into_raw(Box::new(RbmSamples { inner }));
        Ok(())
    })
}

/// Number of samples held by a handle (0 for null).
///
/// # Safety
/// `samples` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rbm_samples_len(samples: *const RbmSamples) -> usize {
    samples.as_ref().map_or(0, |s| s.inner.len())
}

/// Copies sample `index` into `out`.
///
/// # Safety
/// `samples` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rbm_samples_get(samples: *const RbmSamples, index: usize, out: *mut RbmSample) -> RbmStatus {
    guard(|| {
        let s = samples.as_ref().ok_or_else(|| null("samples"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        match s.inner.get(index) {
            Some(v) => {
                *out = *v;
                Ok(())
            }
            None => {
                set_error(format!("index {index} outside 0..{}", s.inner.len()));
                Err(RbmStatus::IndexRange)
            }
        }
    })
}

/// Releases a sample handle. Null is ignored.
///
/// # Safety
/// `samples` must be null or a handle from [`rbm_simulate`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rbm_samples_free(samples: *mut RbmSamples) {
    if !samples.is_null() {
        drop(Box::from_raw(samples));
    }
}
