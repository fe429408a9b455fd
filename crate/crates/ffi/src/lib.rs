//! C ABI for the `cldp` library.
//!
//! Distributions and channels cross the boundary as opaque heap handles that
//! the caller releases with the matching `*_free` function. Every fallible
//! call returns a [`CldpStatus`]; on failure the message is available from
//! [`cldp_last_error`] on the same thread until the next failing call.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use cldp::channels::{default_audit_grids, make_rr_channel, privacy_audit, ChannelSpec, PrivacyBudget};
use cldp::contraction::{equal_marginals_bound, verify_contraction};
use cldp::effective_privacy::{effective_level, leakage_report};
use cldp::measures::{divergence, tv_distance, DiscreteDist, Divergence};
use cldp::Error;

/// Opaque finite joint distribution.
pub struct CldpDist(DiscreteDist);

/// Opaque privacy channel for one component.
pub struct CldpChannel(ChannelSpec);

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CldpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    SupportMismatch = 3,
    /// A divergence is infinite or undefined for the given pair.
    Undefined = 4,
    /// JSON or UTF-8 input could not be decoded.
    Parse = 5,
    Panic = 6,
}

/// Divergence selector for [`cldp_divergence`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CldpDivergence {
    Kl = 0,
    Jeffreys = 1,
    /// `sum q |p/q - 1|^l`; the order is passed separately.
    FL = 2,
}

/// Both sides of the KL contraction bound for one pair of priors.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct CldpContraction {
    pub lhs_jeffreys: f64,
    pub rhs: f64,
    /// Nonzero when the KL bound or any default f_l bound is exceeded.
    pub violation: bool,
}

/// Leakage summary for component 1.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct CldpLeakage {
    pub delta_ind: f64,
    pub effective_alpha: f64,
    pub sound_alpha: f64,
    /// Audited supremum of the likelihood ratio (not its log).
    pub audited_sup: f64,
    pub violation: bool,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(CldpStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::SupportMismatch | Error::GridMismatch(_) => CldpStatus::SupportMismatch,
            Error::DivergenceUndefined(_) => CldpStatus::Undefined,
            Error::Json(_) => CldpStatus::Parse,
            _ => CldpStatus::InvalidArgument,
        };
        Failure(code, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(CldpStatus::NullPointer, format!("{what} is null"))
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> CldpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CldpStatus::Ok,
        Ok(Err(Failure(code, msg))) => {
            set_error(msg);
            code
        }
        Err(_) => {
            set_error("internal panic".into());
            CldpStatus::Panic
        }
    }
}

unsafe fn array<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn write<T>(out: *mut T, v: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    out.write(v);
    Ok(())
}

unsafe fn text<'a>(s: *const c_char) -> Result<&'a str, Failure> {
    if s.is_null() {
        return Err(null("string"));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|e| Failure(CldpStatus::Parse, e.to_string()))
}

unsafe fn channel_list(chs: *const *const CldpChannel, n: usize) -> Result<Vec<ChannelSpec>, Failure> {
    array(chs, n, "channel array")?
        .iter()
        .map(|&c| handle(c, "channel").map(|c| c.0.clone()))
        .collect()
}

/// Message of the last failed call on this thread, or null if none.
///
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn cldp_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Builds a distribution from a dense row-major table.
///
/// `supports` holds the support points of every axis back to back, with axis
/// `j` contributing `shape[j]` values; `probs` has `prod(shape)` entries.
///
/// # Safety
/// All pointers must reference arrays of the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn cldp_dist_new(
    dim: usize,
    shape: *const usize,
    supports: *const f64,
    probs: *const f64,
    out: *mut *mut CldpDist,
) -> CldpStatus {
    guard(|| {
        let shape = array(shape, dim, "shape")?;
        let total_support: usize = shape.iter().sum();
        let cells: usize = shape.iter().product();
        let flat = array(supports, total_support, "supports")?;
        let probs = array(probs, cells, "probs")?;
        let mut axes = Vec::with_capacity(dim);
        let mut at = 0;
        for &m in shape {
            axes.push(flat[at..at + m].to_vec());
            at += m;
        }
        let d = DiscreteDist::from_dense(axes, probs.to_vec())?;
        write(out, Box::into_raw(Box::new(CldpDist(d))))
    })
}

/// Parses a distribution from its JSON form.
///
/// # Safety
/// `json` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn cldp_dist_from_json(json: *const c_char, out: *mut *mut CldpDist) -> CldpStatus {
    guard(|| {
        let d = DiscreteDist::from_json(text(json)?)?;
        write(out, Box::into_raw(Box::new(CldpDist(d))))
    })
}

/// Releases a distribution; null is ignored.
///
/// # Safety
/// `d` must come from a `cldp_dist_*` constructor and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cldp_dist_free(d: *mut CldpDist) {
    if !d.is_null() {
        drop(Box::from_raw(d));
    }
}

/// Number of components, or 0 for a null handle.
///
/// # Safety
/// `d` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cldp_dist_dim(d: *const CldpDist) -> usize {
    d.as_ref().map_or(0, |d| d.0.dim())
}

/// Total variation (L1, in `[0, 2]`) between two distributions.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cldp_tv(p: *const CldpDist, q: *const CldpDist, out: *mut f64) -> CldpStatus {
    guard(|| {
        let v = tv_distance(&handle(p, "p")?.0, &handle(q, "q")?.0)?;
        write(out, v)
    })
}

/// Divergence of `p` from `q` in nats; `l` is read only for [`CldpDivergence::FL`].
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cldp_divergence(
    p: *const CldpDist,
    q: *const CldpDist,
    kind: CldpDivergence,
    l: f64,
    out: *mut f64,
) -> CldpStatus {
    guard(|| {
        let kind = match kind {
            CldpDivergence::Kl => Divergence::Kl,
            CldpDivergence::Jeffreys => Divergence::Jeffreys,
            CldpDivergence::FL => Divergence::FL { l },
        };
        let v = divergence(&handle(p, "p")?.0, &handle(q, "q")?.0, kind)?;
        write(out, v)
    })
}

/// Randomized response at level `alpha` on `m` support points.
///
/// # Safety
/// `support` must reference `m` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cldp_channel_rr(
    support: *const f64,
    m: usize,
    alpha: f64,
    out: *mut *mut CldpChannel,
) -> CldpStatus {
    guard(|| {
        let ch = make_rr_channel(array(support, m, "support")?.to_vec(), alpha)?;
        write(out, Box::into_raw(Box::new(CldpChannel(ch))))
    })
}

/// Truncate to `[-t, t]` and add Laplace noise of scale `2t / alpha`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cldp_channel_laplace(t: f64, alpha: f64, out: *mut *mut CldpChannel) -> CldpStatus {
    guard(|| {
        let ch = ChannelSpec::laplace_trunc(t, alpha)?;
        write(out, Box::into_raw(Box::new(CldpChannel(ch))))
    })
}

/// Parses any channel variant from its JSON form.
///
/// # Safety
/// `json` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn cldp_channel_from_json(json: *const c_char, out: *mut *mut CldpChannel) -> CldpStatus {
    guard(|| {
        let ch = ChannelSpec::from_json(text(json)?)?;
        write(out, Box::into_raw(Box::new(CldpChannel(ch))))
    })
}

/// Releases a channel; null is ignored.
///
/// # Safety
/// `c` must come from a `cldp_channel_*` constructor and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cldp_channel_free(c: *mut CldpChannel) {
    if !c.is_null() {
        drop(Box::from_raw(c));
    }
}

/// Declared level, or NaN for a null handle.
///
/// # Safety
/// `c` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cldp_channel_alpha(c: *const CldpChannel) -> f64 {
    c.as_ref().map_or(f64::NAN, |c| c.0.alpha())
}

/// Largest likelihood ratio found on the default audit grids.
///
/// # Safety
/// `c` must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cldp_audit(c: *const CldpChannel, out_max_ratio: *mut f64) -> CldpStatus {
    guard(|| {
        let ch = &handle(c, "channel")?.0;
        let (xs, zs) = default_audit_grids(ch);
        write(out_max_ratio, privacy_audit(ch, &xs, &zs).max_ratio)
    })
}

/// Checks the KL contraction bound for priors `p`, `q` through one channel per axis.
///
/// # Safety
/// Handles must be live and `channels` must hold `n_channels` handles.
#[no_mangle]
pub unsafe extern "C" fn cldp_verify_contraction(
    p: *const CldpDist,
    q: *const CldpDist,
    channels: *const *const CldpChannel,
    n_channels: usize,
    out: *mut CldpContraction,
) -> CldpStatus {
    guard(|| {
        let chs = channel_list(channels, n_channels)?;
        let r = verify_contraction(
            &handle(p, "p")?.0,
            &handle(q, "q")?.0,
            &chs,
            &cldp::contraction::DEFAULT_F_ORDERS,
        )?;
        write(
            out,
            CldpContraction {
                lhs_jeffreys: r.lhs_jeffreys,
                rhs: r.rhs,
                violation: r.any_violation(),
            },
        )
    })
}

/// KL bound for priors that share every proper marginal and differ by `tv` jointly.
///
/// # Safety
/// `alphas` must reference `d` levels; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cldp_equal_marginals_bound(
    tv: f64,
    alphas: *const f64,
    d: usize,
    out: *mut f64,
) -> CldpStatus {
    guard(|| {
        let budget = PrivacyBudget::new(array(alphas, d, "alphas")?.to_vec())?;
        write(out, equal_marginals_bound(tv, &budget))
    })
}

/// Closed-form effective and sound levels for component 1.
///
/// # Safety
/// Output pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn cldp_effective_level(
    alpha1: f64,
    alpha_max: f64,
    d: usize,
    delta_ind: f64,
    out_effective: *mut f64,
    out_sound: *mut f64,
) -> CldpStatus {
    guard(|| {
        let prof = effective_level(alpha1, alpha_max, d, delta_ind)?;
        write(out_effective, prof.effective_alpha)?;
        write(out_sound, prof.sound_alpha)
    })
}

/// Exact leakage audit of component 1 of `p` through one channel per axis.
///
/// # Safety
/// Handles must be live and `channels` must hold `n_channels` handles.
#[no_mangle]
pub unsafe extern "C" fn cldp_leakage(
    p: *const CldpDist,
    channels: *const *const CldpChannel,
    n_channels: usize,
    out: *mut CldpLeakage,
) -> CldpStatus {
    guard(|| {
        let chs = channel_list(channels, n_channels)?;
        let r = leakage_report(&handle(p, "p")?.0, &chs)?;
        write(
            out,
            CldpLeakage {
                delta_ind: r.delta_ind,
                effective_alpha: r.effective_alpha,
                sound_alpha: r.sound_alpha,
                audited_sup: r.audited_sup,
                violation: r.violation,
            },
        )
    })
}
