//! Divergence contraction bounds for componentwise channels and their
//! brute-force verification on finite instances.

use rand::Rng;
use serde::Serialize;

use crate::channels::{make_rr_channel, ChannelSpec, PrivacyBudget};
use crate::error::{invalid, Error, Result};
use crate::measures::{divergence, marginal, pushforward, tv_distance, DiscreteDist, Divergence, SubsetIndex};

/// Marginal total variations `tv(L_{X^S}, L_{X~^S})` for every nonempty `S`.
///
/// Entries are stored by subset bitmask; slot 0 (the empty set) is unused.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarginalTvTable {
    d: usize,
    entries: Vec<Option<f64>>,
}

impl MarginalTvTable {
    pub fn empty(d: usize) -> Result<Self> {
        if d == 0 || d > 20 {
            return Err(invalid(format!("unsupported dimension {d}")));
        }
        Ok(Self {
            d,
            entries: vec![None; 1 << d],
        })
    }

    /// Table where every subset has the same total variation `t`.
    pub fn uniform(d: usize, t: f64) -> Result<Self> {
        let mut table = Self::empty(d)?;
        for mask in 1..1 << d {
            table.set(&SubsetIndex::from_mask(mask), t)?;
        }
        Ok(table)
    }

    pub fn set(&mut self, subset: &SubsetIndex, tv: f64) -> Result<()> {
        if subset.is_empty() {
            return Err(invalid("the empty subset has no entry"));
        }
        if let Some(&axis) = subset.members().iter().find(|&&a| a >= self.d) {
            return Err(Error::AxisOutOfRange { axis, dim: self.d });
        }
        if !(0.0..=2.0 + 1e-12).contains(&tv) {
            return Err(invalid(format!("total variation {tv} outside [0, 2]")));
        }
        self.entries[subset.mask()] = Some(tv);
        Ok(())
    }

    pub fn get(&self, subset: &SubsetIndex) -> Result<f64> {
        self.entries
            .get(subset.mask())
            .copied()
            .flatten()
            .ok_or_else(|| Error::MissingSubset(subset.members().to_vec()))
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// Exact table for two distributions on the same support.
    pub fn from_dists(p: &DiscreteDist, q: &DiscreteDist) -> Result<Self> {
        let mut table = Self::empty(p.dim())?;
        for mask in 1..1usize << p.dim() {
            let s = SubsetIndex::from_mask(mask);
            let tv = tv_distance(&marginal(p, &s)?, &marginal(q, &s)?)?;
            table.set(&s, tv)?;
        }
        Ok(table)
    }

    fn complete(&self) -> Result<()> {
        for mask in 1..1usize << self.d {
            if self.entries[mask].is_none() {
                return Err(Error::MissingSubset(SubsetIndex::from_mask(mask).members().to_vec()));
            }
        }
        Ok(())
    }

    /// `sum_S prod_{j in S} w_j * tv_S`.
    fn weighted_sum(&self, weights: &[f64]) -> Result<f64> {
        self.complete()?;
        if weights.len() != self.d {
            return Err(invalid(format!(
                "{} weights for dimension {}",
                weights.len(),
                self.d
            )));
        }
        Ok((1..1usize << self.d)
            .map(|mask| {
                let w: f64 = (0..self.d)
                    .filter(|j| mask >> j & 1 == 1)
                    .map(|j| weights[j])
                    .product();
                w * self.entries[mask].unwrap_or(0.0)
            })
            .sum())
    }
}

/// Inner sum `sum_S prod_{h in S}(e^{alpha_h} - 1) tv_S` of the KL bound.
pub fn cldp_inner_sum(tvs: &MarginalTvTable, budget: &PrivacyBudget) -> Result<f64> {
    tvs.weighted_sum(&budget.expm1())
}

/// Bound on the (symmetric) KL divergence between the channel outputs.
pub fn cldp_kl_bound(tvs: &MarginalTvTable, budget: &PrivacyBudget) -> Result<f64> {
    Ok(cldp_inner_sum(tvs, budget)?.powi(2))
}

/// Bound when every strict-subset marginal agrees: `(prod(e^a - 1))^2 tv^2`.
pub fn equal_marginals_bound(tv_full: f64, budget: &PrivacyBudget) -> f64 {
    let w: f64 = budget.expm1().iter().product();
    (w * tv_full).powi(2)
}

/// Bound for paired independent samples: `sum_h term_h^2`.
///
/// `per_sample_terms` holds each sample's inner sum. A single term with
/// `n > 1` stands for `n` identically distributed pairs.
pub fn tensorized_bound(per_sample_terms: &[f64], n: usize) -> Result<f64> {
    if n == 0 {
        return Err(invalid("n must be at least 1"));
    }
    match per_sample_terms.len() {
        1 => Ok(n as f64 * per_sample_terms[0].powi(2)),
        len if len == n => Ok(per_sample_terms.iter().map(|t| t * t).sum()),
        len => Err(invalid(format!("{len} per-sample terms for n = {n}"))),
    }
}

/// Bound on `D_{f_l}(M || M~)`: `(sum_S prod_{j in S} eps_j tv_S)^l`.
pub fn f_divergence_bound(tvs: &MarginalTvTable, eps: &[f64], l: f64) -> Result<f64> {
    if !(l > 1.0) {
        return Err(invalid(format!("f_l bound needs l > 1, got {l}")));
    }
    if eps.iter().any(|e| !(*e >= 0.0)) {
        return Err(invalid("eps_j must be nonnegative"));
    }
    Ok(tvs.weighted_sum(eps)?.powf(l))
}

/// `eps_j`: largest `D_{f_l}(Q(.|x') || Q(.|x))^{1/l}` over input pairs.
pub fn channel_f_epsilon(ch: &ChannelSpec, l: f64) -> Result<f64> {
    let (_, _, table) = ch.finite_table().ok_or(Error::NonFiniteChannel)?;
    let mut best: f64 = 0.0;
    for reference in table {
        for other in table {
            let d = crate::measures::divergence_slices(other, reference, Divergence::FL { l })?;
            best = best.max(d);
        }
    }
    Ok(best.powf(1.0 / l))
}

/// One f_l check inside a [`VerificationReport`].
#[derive(Debug, Clone, Serialize)]
pub struct FCheck {
    pub l: f64,
    pub eps: Vec<f64>,
    pub lhs: f64,
    pub rhs: f64,
    pub violation: bool,
}

/// Outcome of checking the bounds on one pair of priors.
#[derive(Debug, Clone, Serialize)]
pub struct VerificationReport {
    pub alphas: Vec<f64>,
    pub tvs: Vec<(Vec<usize>, f64)>,
    pub lhs_jeffreys: f64,
    pub lhs_kl_forward: f64,
    pub lhs_kl_backward: f64,
    pub rhs: f64,
    pub violation: bool,
    pub f_checks: Vec<FCheck>,
}

impl VerificationReport {
    pub fn any_violation(&self) -> bool {
        self.violation || self.f_checks.iter().any(|f| f.violation)
    }
}

/// Absolute slack allowed between exact left-hand sides and bounds.
pub const VIOLATION_TOL: f64 = 1e-9;

/// Exponents checked by default for the f_l bound.
pub const DEFAULT_F_ORDERS: [f64; 3] = [1.5, 2.0, 3.0];

/// Computes both sides of the KL and f_l bounds for priors `p`, `pt`.
pub fn verify_contraction(
    p: &DiscreteDist,
    pt: &DiscreteDist,
    channels: &[ChannelSpec],
    f_orders: &[f64],
) -> Result<VerificationReport> {
    if channels.iter().any(|c| !c.is_finite()) {
        return Err(Error::NonFiniteChannel);
    }
    if p.supports() != pt.supports() {
        return Err(Error::SupportMismatch);
    }
    let m = pushforward(p, channels)?;
    let mt = pushforward(pt, channels)?;
    let kl_f = divergence(&m, &mt, Divergence::Kl)?;
    let kl_b = divergence(&mt, &m, Divergence::Kl)?;
    let lhs = kl_f + kl_b;
    let budget = PrivacyBudget::new(channels.iter().map(ChannelSpec::alpha).collect())?;
    let tvs = MarginalTvTable::from_dists(p, pt)?;
    let rhs = cldp_kl_bound(&tvs, &budget)?;
    let mut f_checks = Vec::with_capacity(f_orders.len());
    for &l in f_orders {
        let eps = channels
            .iter()
            .map(|c| channel_f_epsilon(c, l))
            .collect::<Result<Vec<_>>>()?;
        let lhs = divergence(&m, &mt, Divergence::FL { l })?;
        let rhs = f_divergence_bound(&tvs, &eps, l)?;
        f_checks.push(FCheck {
            l,
            eps,
            lhs,
            rhs,
            violation: lhs > rhs + VIOLATION_TOL,
        });
    }
    let tv_list = (1..1usize << p.dim())
        .map(|mask| {
            let s = SubsetIndex::from_mask(mask);
            let v = tvs.get(&s).unwrap_or(f64::NAN);
            (s.members().to_vec(), v)
        })
        .collect();
    Ok(VerificationReport {
        alphas: budget.alphas().to_vec(),
        tvs: tv_list,
        lhs_jeffreys: lhs,
        lhs_kl_forward: kl_f,
        lhs_kl_backward: kl_b,
        rhs,
        violation: lhs > rhs + VIOLATION_TOL,
        f_checks,
    })
}

/// Draws a random mass table with strictly positive cells.
pub fn random_table<R: Rng + ?Sized>(rng: &mut R, shape: &[usize]) -> Vec<f64> {
    let size: usize = shape.iter().product();
    let raw: Vec<f64> = (0..size).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

/// A random pair of priors with RR channels, as used by the soundness sweeps.
#[derive(Debug, Clone)]
pub struct RandomInstance {
    pub p: DiscreteDist,
    pub pt: DiscreteDist,
    pub channels: Vec<ChannelSpec>,
}

/// Samples an instance: dimension from `dims`, supports of size 2..=`max_support`,
/// levels uniform on `alpha_range`. Every third instance mixes the priors
/// so that marginals are close, which probes the bound's small-TV regime.
pub fn random_instance<R: Rng + ?Sized>(
    rng: &mut R,
    dims: &[usize],
    max_support: usize,
    alpha_range: (f64, f64),
    index: u64,
) -> Result<RandomInstance> {
    if dims.is_empty() || max_support < 2 {
        return Err(invalid("need at least one dimension and supports of size >= 2"));
    }
    let d = dims[rng.random_range(0..dims.len())];
    let shape: Vec<usize> = (0..d).map(|_| rng.random_range(2..=max_support)).collect();
    let supports: Vec<Vec<f64>> = shape.iter().map(|&m| (0..m).map(|v| v as f64).collect()).collect();
    let a = random_table(rng, &shape);
    let mut b = random_table(rng, &shape);
    if index % 3 == 0 {
        let w: f64 = rng.random();
        b.iter_mut().zip(&a).for_each(|(bv, av)| *bv = w * *av + (1.0 - w) * *bv);
    }
    let channels = supports
        .iter()
        .map(|s| make_rr_channel(s.clone(), rng.random_range(alpha_range.0..=alpha_range.1)))
        .collect::<Result<Vec<_>>>()?;
    Ok(RandomInstance {
        p: DiscreteDist::from_dense(supports.clone(), a)?,
        pt: DiscreteDist::from_dense(supports, b)?,
        channels,
    })
}
