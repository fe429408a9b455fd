//! Two-point constructions behind the minimax lower bounds, with numerical
//! checks of their defining properties.

use serde::Serialize;

use crate::channels::{ChannelSpec, PrivacyBudget};
use crate::contraction::{cldp_inner_sum, tensorized_bound, MarginalTvTable};
use crate::error::{invalid, Error, Result};
use crate::estimators::{HolderClass, MomentProfile};
use crate::measures::{divergence, pushforward, tv_distance, DiscreteDist, Divergence};

/// Width parameter of the base density `c exp(-eta |x|^2)`.
pub const DEFAULT_ETA: f64 = 0.05;
/// Target bound on the per-sample divergence budget for density instances.
pub const DEFAULT_EPS0: f64 = 1.9;
/// Constant linking the bump amplitude to the divergence budget.
pub const DEFAULT_CK: f64 = 4.0;

/// Pair of moment-class laws whose joint moments differ by `separation`.
#[derive(Debug, Clone, Serialize)]
pub struct MomentTwoPoint {
    pub p: DiscreteDist,
    pub p_star: DiscreteDist,
    pub delta: f64,
    pub separation: f64,
    pub n: usize,
    pub budget: Vec<f64>,
}

/// Pair of densities that agree on every strict marginal.
#[derive(Debug, Clone, Serialize)]
pub struct DensityTwoPoint {
    pub d: usize,
    pub beta: f64,
    pub eta: f64,
    pub c_pi: f64,
    /// Bump amplitude `1 / M_n`.
    pub amplitude: f64,
    pub h_n: f64,
    pub eps0: f64,
    pub c_k: f64,
    pub separation: f64,
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TwoPointInstance {
    Moment(MomentTwoPoint),
    Density(DensityTwoPoint),
}

impl TwoPointInstance {
    pub fn separation(&self) -> f64 {
        match self {
            TwoPointInstance::Moment(m) => m.separation,
            TwoPointInstance::Density(m) => m.separation,
        }
    }
}

fn prod_expm1_sq(budget: &PrivacyBudget) -> f64 {
    budget.expm1().iter().map(|e| e * e).product()
}

/// `P` puts `1 - delta` at the origin and `delta / 2^d` on each sign corner
/// `(a_j delta^{-1/k_j})`; `P*` tilts corner `a` by `(delta/2) 2^{-d} prod a_j`.
pub fn moment_two_point(profile: &MomentProfile, budget: &PrivacyBudget, n: usize) -> Result<MomentTwoPoint> {
    let d = profile.dim();
    if budget.dim() != d {
        return Err(invalid("budget and moment profile dimensions differ"));
    }
    let scale = n as f64 * prod_expm1_sq(budget);
    if !(scale >= 1.0) {
        return Err(Error::RegimeViolated(format!(
            "n prod (e^alpha - 1)^2 = {scale} is below 1"
        )));
    }
    let delta = (2.0 * scale).powf(-0.5);
    let supports: Vec<Vec<f64>> = profile
        .ks()
        .iter()
        .map(|k| {
            let r = delta.powf(-1.0 / k);
            vec![-r, 0.0, r]
        })
        .collect();
    let corner = delta / 2f64.powi(d as i32);
    let mut p_entries = vec![(vec![1; d], 1.0 - delta)];
    let mut q_entries = p_entries.clone();
    for mask in 0..1usize << d {
        let idx: Vec<usize> = (0..d).map(|j| if mask >> j & 1 == 1 { 2 } else { 0 }).collect();
        let sign = if mask.count_ones() % 2 == (d as u32) % 2 { 1.0 } else { -1.0 };
        p_entries.push((idx.clone(), corner));
        q_entries.push((idx, corner * (1.0 + sign / 2.0)));
    }
    let inv_sum: f64 = profile.ks().iter().map(|k| 1.0 / k).sum();
    Ok(MomentTwoPoint {
        p: DiscreteDist::new(supports.clone(), p_entries)?,
        p_star: DiscreteDist::new(supports, q_entries)?,
        delta,
        separation: 0.5 * delta.powf(1.0 - inv_sum),
        n,
        budget: budget.alphas().to_vec(),
    })
}

/// Standard bump `exp(-1/(1 - x^2))` on `(-1, 1)`.
pub fn smooth_bump(x: f64) -> f64 {
    if x.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - x * x)).exp()
    }
}

/// Zero-mean bump with `psi(0) = 1`: `e (2 b(2x) - b(x))`.
pub fn psi_tilde(x: f64) -> f64 {
    std::f64::consts::E * (2.0 * smooth_bump(2.0 * x) - smooth_bump(x))
}

/// Builds the density pair for `H(beta, L)` at the origin.
pub fn density_two_point(
    hc: &HolderClass,
    budget: &PrivacyBudget,
    n: usize,
    eps0: f64,
    c_k: f64,
    eta: f64,
) -> Result<DensityTwoPoint> {
    if budget.dim() != hc.d {
        return Err(invalid("budget and Hölder class dimensions differ"));
    }
    if !(eps0 > 0.0 && eps0 < 2.0) {
        return Err(invalid("eps0 must lie in (0, 2)"));
    }
    if !(c_k > 0.0 && eta > 0.0) {
        return Err(invalid("c_k and eta must be positive"));
    }
    let d = hc.d as f64;
    let scale = n as f64 * prod_expm1_sq(budget);
    let amplitude = (eps0 / (c_k * scale)).powf(hc.beta / (2.0 * (d + hc.beta)));
    let h_n = amplitude.powf(1.0 / hc.beta);
    if !(h_n < 1.0) {
        return Err(Error::SampleTooSmall(format!("bump width {h_n} is not below 1")));
    }
    let inst = DensityTwoPoint {
        d: hc.d,
        beta: hc.beta,
        eta,
        c_pi: (eta / std::f64::consts::PI).powf(d / 2.0),
        amplitude,
        h_n,
        eps0,
        c_k,
        separation: amplitude,
    };
    if inst.nonnegativity_margin() < 0.0 {
        return Err(invalid("bump is too tall for the base density; increase n"));
    }
    Ok(inst)
}

impl DensityTwoPoint {
    pub fn pi(&self, x: &[f64]) -> f64 {
        self.c_pi * (-self.eta * x.iter().map(|v| v * v).sum::<f64>()).exp()
    }

    pub fn bump(&self, x: &[f64]) -> f64 {
        self.amplitude * x.iter().map(|v| psi_tilde(v / self.h_n)).product::<f64>()
    }

    pub fn pi_star(&self, x: &[f64]) -> f64 {
        self.pi(x) + self.bump(x)
    }

    /// Lower bound on `min pi*`: base density on the bump's box minus the
    /// largest possible downward excursion of the bump.
    pub fn nonnegativity_margin(&self) -> f64 {
        let sup_psi = (0..=20_000)
            .map(|i| psi_tilde(-1.0 + i as f64 / 10_000.0).abs())
            .fold(0.0, f64::max);
        let floor = self.c_pi * (-self.eta * self.d as f64 * self.h_n * self.h_n).exp();
        floor - self.amplitude * sup_psi.powi(self.d as i32)
    }
}

/// Composite Simpson rule with `2m` panels.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, m: usize) -> f64 {
    let panels = 2 * m.max(1);
    let h = (b - a) / panels as f64;
    let mut acc = f(a) + f(b);
    for i in 1..panels {
        acc += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    acc * h / 3.0
}

/// Quadrature summary for a density pair.
#[derive(Debug, Clone, Serialize)]
pub struct DensityQuadrature {
    /// `∫ psi_tilde`, which makes every strict marginal agree.
    pub bump_axis_integral: f64,
    pub mass_pi: f64,
    pub mass_pi_star: f64,
    pub min_pi_star: f64,
    pub separation_at_origin: f64,
}

/// Tensor quadrature of `pi` and `pi*` on `[-radius, radius]^d`.
///
/// Each axis is split at `±h_n` so the bump is resolved by its own panels.
pub fn density_quadrature(inst: &DensityTwoPoint, radius: f64, panels: usize) -> Result<DensityQuadrature> {
    if inst.d > 3 {
        return Err(invalid("tensor quadrature is limited to d <= 3"));
    }
    let h = inst.h_n;
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    for (a, b) in [(-radius, -h), (-h, h), (h, radius)] {
        let k = 2 * panels;
        let step = (b - a) / k as f64;
        for i in 0..=k {
            let w = if i == 0 || i == k { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
            nodes.push(a + i as f64 * step);
            weights.push(w * step / 3.0);
        }
    }
    let m = nodes.len();
    let total = m.pow(inst.d as u32);
    let mut x = vec![0.0; inst.d];
    let (mut mass, mut mass_star, mut min_star) = (0.0, 0.0, f64::INFINITY);
    for flat in 0..total {
        let mut rest = flat;
        let mut w = 1.0;
        for slot in x.iter_mut() {
            let i = rest % m;
            rest /= m;
            *slot = nodes[i];
            w *= weights[i];
        }
        let base = inst.pi(&x);
        let star = base + inst.bump(&x);
        mass += w * base;
        mass_star += w * star;
        min_star = min_star.min(star);
    }
    Ok(DensityQuadrature {
        bump_axis_integral: simpson(psi_tilde, -1.0, 1.0, 20_000),
        mass_pi: mass,
        mass_pi_star: mass_star,
        min_pi_star: min_star,
        separation_at_origin: (inst.pi_star(&vec![0.0; inst.d]) - inst.pi(&vec![0.0; inst.d])).abs(),
    })
}

/// Outcome of the divergence check on a moment instance.
#[derive(Debug, Clone, Serialize)]
pub struct TwoPointReport {
    pub per_sample_jeffreys: f64,
    pub n_times_jeffreys: f64,
    pub bound: f64,
    pub condition3_ok: bool,
}

/// Largest admissible value of the tensorized bound.
pub const CONDITION3_LIMIT: f64 = 0.125;

/// Checks `n J(M, M*) <= n * kl_bound <= 1/8` for the privatized pair.
pub fn verify_two_point(inst: &TwoPointInstance, channels: &[ChannelSpec], n: usize) -> Result<TwoPointReport> {
    let TwoPointInstance::Moment(m) = inst else {
        return Err(Error::DensityInstance);
    };
    if channels.len() != m.p.dim() || channels.iter().any(|c| !c.is_finite()) {
        return Err(invalid("one finite channel per component is required"));
    }
    let budget = PrivacyBudget::new(channels.iter().map(ChannelSpec::alpha).collect())?;
    let mp = pushforward(&m.p, channels)?;
    let mq = pushforward(&m.p_star, channels)?;
    let j = divergence(&mp, &mq, Divergence::Jeffreys)?;
    let tvs = MarginalTvTable::from_dists(&m.p, &m.p_star)?;
    let bound = tensorized_bound(&[cldp_inner_sum(&tvs, &budget)?], n)?;
    let nj = n as f64 * j;
    Ok(TwoPointReport {
        per_sample_jeffreys: j,
        n_times_jeffreys: nj,
        bound,
        condition3_ok: nj <= bound * (1.0 + 1e-9) + 1e-15 && bound <= CONDITION3_LIMIT * (1.0 + 1e-12),
    })
}

/// Randomized-response channels on the instance's own supports.
pub fn two_point_channels(inst: &MomentTwoPoint) -> Result<Vec<ChannelSpec>> {
    inst.p
        .supports()
        .iter()
        .zip(&inst.budget)
        .map(|(s, a)| crate::channels::make_rr_channel(s.clone(), *a))
        .collect()
}

/// L1 distance between the two laws of a moment instance.
pub fn moment_tv(inst: &MomentTwoPoint) -> Result<f64> {
    tv_distance(&inst.p, &inst.p_star)
}
