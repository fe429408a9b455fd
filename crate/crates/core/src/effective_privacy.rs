//! Leakage about one component through the channels of the others.

use serde::Serialize;

use crate::channels::ChannelSpec;
use crate::error::{invalid, Error, Result};
use crate::measures::{apply_axis, tv_distance, DiscreteDist};

/// Leakage summary for component 1 (axis 0).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LeakageProfile {
    pub alpha1: f64,
    pub alpha_max: f64,
    pub d: usize,
    pub delta_ind: f64,
    /// `alpha1 + alpha_max (d - 1) delta_ind`.
    pub effective_alpha: f64,
    /// `alpha1 + ln(1 + (e^{alpha_max (d-1)} - 1) delta_ind / 2)`, a bound
    /// that holds for every level (see [`effective_level`]).
    pub sound_alpha: f64,
}

/// Conditional law of axes `1..d` given `X^1 = supports[0][i]`.
fn conditional_rest(p: &DiscreteDist, i: usize) -> Result<Vec<f64>> {
    let shape = p.shape();
    let rest: usize = shape[1..].iter().product();
    let row = &p.probs()[i * rest..(i + 1) * rest];
    let mass: f64 = row.iter().sum();
    if mass <= 0.0 {
        return Err(Error::ZeroMass(p.supports()[0][i]));
    }
    Ok(row.iter().map(|v| v / mass).collect())
}

/// `sup_{x, x'} tv(L(X^2..X^d | X^1 = x), L(X^2..X^d | X^1 = x'))`.
pub fn delta_ind(p: &DiscreteDist) -> Result<f64> {
    if p.dim() < 2 {
        return Ok(0.0);
    }
    let m = p.shape()[0];
    let conds = (0..m).map(|i| conditional_rest(p, i)).collect::<Result<Vec<_>>>()?;
    let rest_supports = p.supports()[1..].to_vec();
    let mut best: f64 = 0.0;
    for a in &conds {
        for b in &conds {
            let pa = DiscreteDist::from_dense(rest_supports.clone(), a.clone())?;
            let pb = DiscreteDist::from_dense(rest_supports.clone(), b.clone())?;
            best = best.max(tv_distance(&pa, &pb)?);
        }
    }
    Ok(best)
}

/// Leakage exponent bound `alpha1 + alpha_max (d - 1) delta_ind`.
///
/// The exponential form relies on `1 + (e^A - 1) q <= e^{A q}`, which holds
/// for `q = 0`, `q >= 1`, or when `e^A - 1 <= 2A` (`A <= 1.2564`). Outside
/// that region the audited leakage can exceed it; `sound_alpha` is the
/// exponent that always holds.
pub fn effective_level(alpha1: f64, alpha_max: f64, d: usize, delta_ind: f64) -> Result<LeakageProfile> {
    if !(alpha1 >= 0.0) || !(alpha_max >= 0.0) || d == 0 {
        return Err(invalid("levels must be nonnegative and d >= 1"));
    }
    if !(0.0..=2.0 + 1e-12).contains(&delta_ind) {
        return Err(invalid(format!("delta_ind {delta_ind} outside [0, 2]")));
    }
    let a = alpha_max * (d - 1) as f64;
    Ok(LeakageProfile {
        alpha1,
        alpha_max,
        d,
        delta_ind,
        effective_alpha: alpha1 + a * delta_ind,
        sound_alpha: alpha1 + (a.exp_m1() * delta_ind / 2.0).ln_1p(),
    })
}

/// Largest `A = alpha_max (d - 1)` for which the exponential bound is valid
/// at every `delta_ind`; root of `e^A - 1 = 2A`.
pub fn exponential_form_limit() -> f64 {
    let (mut lo, mut hi) = (0.5f64, 2.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid.exp_m1() > 2.0 * mid {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    lo
}

/// Best achievable average error when guessing between two values of a
/// secret protected at level `alpha`: `1 / (1 + e^alpha)`.
pub fn misprediction_floor(alpha: f64) -> f64 {
    1.0 / (1.0 + alpha.exp())
}

/// Exact law `m(z | X^1 = x1)` over the full output grid (row-major).
fn output_law_given_first(p: &DiscreteDist, channels: &[ChannelSpec], x1: f64) -> Result<Vec<f64>> {
    let i = p
        .support_index(0, x1)
        .ok_or_else(|| invalid(format!("{x1} is not a support point of X^1")))?;
    let mut table = conditional_rest(p, i)?;
    let mut shape: Vec<usize> = p.shape()[1..].to_vec();
    for (axis, ch) in channels.iter().enumerate().skip(1) {
        let (inputs, outputs, kernel) = ch.finite_table().ok_or(Error::NonFiniteChannel)?;
        let matrix = p.supports()[axis]
            .iter()
            .map(|x| {
                inputs
                    .iter()
                    .position(|v| v == x)
                    .map(|r| kernel[r].clone())
                    .ok_or_else(|| invalid(format!("channel {axis} does not cover {x}")))
            })
            .collect::<Result<Vec<_>>>()?;
        table = apply_axis(&table, &shape, axis - 1, &matrix);
        shape[axis - 1] = outputs.len();
    }
    let (inputs, _, kernel) = channels[0].finite_table().ok_or(Error::NonFiniteChannel)?;
    let row = inputs
        .iter()
        .position(|&v| v == x1)
        .ok_or_else(|| invalid(format!("channel 0 does not cover {x1}")))?;
    Ok(kernel[row]
        .iter()
        .flat_map(|&q1| table.iter().map(move |&m| q1 * m))
        .collect())
}

/// Brute-force `sup_z m(z | X^1 = x1) / m(z | X^1 = x1p)` over every output.
pub fn audit_marginal_leakage(p: &DiscreteDist, channels: &[ChannelSpec], x1: f64, x1p: f64) -> Result<f64> {
    if channels.len() != p.dim() {
        return Err(invalid("one channel per axis is required"));
    }
    if channels.iter().any(|c| !c.is_finite()) {
        return Err(Error::NonFiniteChannel);
    }
    let a = output_law_given_first(p, channels, x1)?;
    let b = output_law_given_first(p, channels, x1p)?;
    let mut best: f64 = 0.0;
    for (&ma, &mb) in a.iter().zip(&b) {
        if ma == 0.0 {
            continue;
        }
        if mb == 0.0 {
            return Ok(f64::INFINITY);
        }
        best = best.max(ma / mb);
    }
    Ok(best)
}

/// [`audit_marginal_leakage`] maximized over all pairs of first-axis values.
pub fn audit_marginal_leakage_sup(p: &DiscreteDist, channels: &[ChannelSpec]) -> Result<f64> {
    let mut best: f64 = 1.0;
    for &x in &p.supports()[0] {
        for &xp in &p.supports()[0] {
            best = best.max(audit_marginal_leakage(p, channels, x, xp)?);
        }
    }
    Ok(best)
}

/// Smallest average misprediction over all decision rules distinguishing
/// `x1` from `x1p` based on the full release.
pub fn bayes_risk(p: &DiscreteDist, channels: &[ChannelSpec], x1: f64, x1p: f64) -> Result<f64> {
    let a = output_law_given_first(p, channels, x1)?;
    let b = output_law_given_first(p, channels, x1p)?;
    Ok(0.5 * a.iter().zip(&b).map(|(u, v)| u.min(*v)).sum::<f64>())
}

/// Output of `cldp leakage`.
#[derive(Debug, Clone, Serialize)]
pub struct LeakageReport {
    pub delta_ind: f64,
    pub effective_alpha: f64,
    pub sound_alpha: f64,
    pub audited_sup: f64,
    /// Misprediction floor at the effective level.
    pub floor: f64,
    /// Misprediction floor at the audited level.
    pub audited_floor: f64,
    pub violation: bool,
}

pub fn leakage_report(p: &DiscreteDist, channels: &[ChannelSpec]) -> Result<LeakageReport> {
    if channels.len() != p.dim() {
        return Err(invalid("one channel per axis is required"));
    }
    let delta = delta_ind(p)?;
    let alpha_max = channels[1..].iter().map(ChannelSpec::alpha).fold(0.0, f64::max);
    let prof = effective_level(channels[0].alpha(), alpha_max, p.dim(), delta)?;
    let sup = audit_marginal_leakage_sup(p, channels)?;
    Ok(LeakageReport {
        delta_ind: delta,
        effective_alpha: prof.effective_alpha,
        sound_alpha: prof.sound_alpha,
        audited_sup: sup,
        floor: misprediction_floor(prof.effective_alpha),
        audited_floor: misprediction_floor(sup.ln()),
        violation: sup > prof.effective_alpha.exp() * (1.0 + 1e-9),
    })
}
