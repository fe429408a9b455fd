//! Goldenshluger–Lepski selection of truncation levels and bandwidths.
//!
//! Both selectors work from multi-level releases: every candidate on the
//! dyadic grid gets its own release at level `beta_n = alpha / |grid|`, so the
//! whole table of candidate estimates comes out of one sample.
//!
//! Penalties carry the exact noise variance of each release. For truncation
//! level `T` the Laplace noise has variance `8 T^2 / beta^2`, for a kernel
//! release it is `8 kappa^2 / (h beta)^2`; the penalty is `c0 ln n` times the
//! product of these over the axes, divided by `n`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channels::ChannelKind;
use crate::error::{invalid, Error, Result};
use crate::estimators::MultiLevelSample;

/// Relative slack under which two criterion values count as tied.
pub const TIE_TOL: f64 = 1e-12;

/// Default penalty constant.
pub const DEFAULT_C0: f64 = 8.0;

fn levels_for(n: usize) -> Result<usize> {
    if n < 4 {
        return Err(invalid(format!("adaptive grids need n >= 4, got {n}")));
    }
    Ok(n.ilog2() as usize)
}

/// Per-axis truncation candidates `n / 2^r`, `r = 1..floor(log2 n)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TruncationGrid {
    levels: Vec<f64>,
}

impl TruncationGrid {
    pub fn new(n: usize) -> Result<Self> {
        let m = levels_for(n)?;
        Ok(Self {
            levels: (1..=m).map(|r| n as f64 / 2f64.powi(r as i32)).collect(),
        })
    }

    /// Decreasing candidates shared by every axis.
    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }
}

/// Bandwidth candidates `h = 2^r / n`, `r = 1..floor(log2 n)`, all in `(0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BandwidthGrid {
    levels: Vec<f64>,
}

impl BandwidthGrid {
    pub fn new(n: usize) -> Result<Self> {
        let m = levels_for(n)?;
        Ok(Self {
            levels: (1..=m)
                .map(|r| 2f64.powi(r as i32) / n as f64)
                .filter(|h| *h <= 1.0)
                .collect(),
        })
    }

    /// Increasing candidates.
    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GlConfig {
    pub c0: f64,
}

impl Default for GlConfig {
    fn default() -> Self {
        Self { c0: DEFAULT_C0 }
    }
}

impl GlConfig {
    pub fn new(c0: f64) -> Result<Self> {
        if !(c0 > 0.0 && c0.is_finite()) {
            return Err(invalid("c0 must be positive"));
        }
        Ok(Self { c0 })
    }

    /// `c0 ln n`; plays the role of both `kappa_n` and `a_n`.
    pub fn log_factor(&self, n: usize) -> f64 {
        self.c0 * (n as f64).ln()
    }
}

/// Per-level budget `alpha / floor(log2 n)`.
pub fn level_budget(alpha: f64, n: usize) -> Result<f64> {
    Ok(alpha / levels_for(n)? as f64)
}

/// Penalty for the truncation vector `ts` with per-axis level budgets `betas`.
pub fn truncation_penalty(cfg: &GlConfig, n: usize, ts: &[f64], betas: &[f64]) -> f64 {
    let noise: f64 = ts.iter().zip(betas).map(|(t, b)| 8.0 * t * t / (b * b)).product();
    cfg.log_factor(n) * noise / n as f64
}

/// Penalty for bandwidth `h` with kernel constant `kappa`.
pub fn bandwidth_penalty(cfg: &GlConfig, n: usize, h: f64, kappa: f64, betas: &[f64]) -> f64 {
    let d = betas.len() as i32;
    let noise: f64 = betas.iter().map(|b| 8.0 * kappa * kappa / (b * b)).product();
    cfg.log_factor(n) * noise / (n as f64 * h.powi(2 * d))
}

/// One row of the bias/penalty table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BvRow {
    /// Candidate: a truncation vector or a one-element bandwidth.
    pub candidate: Vec<f64>,
    pub estimate: f64,
    pub bias: f64,
    pub penalty: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TruncationSelection {
    pub t_hat: Vec<f64>,
    pub gamma_hat: f64,
    pub bv_table: Vec<BvRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BandwidthSelection {
    pub h_hat: f64,
    pub pi_hat: f64,
    pub bv_table: Vec<BvRow>,
}

/// Mixed-radix index over `d` axes of `m` levels each.
fn split_index(mut flat: usize, m: usize, d: usize) -> Vec<usize> {
    let mut idx = vec![0; d];
    for slot in idx.iter_mut().rev() {
        *slot = flat % m;
        flat /= m;
    }
    idx
}

fn join_index(idx: &[usize], m: usize) -> usize {
    idx.iter().fold(0, |acc, &i| acc * m + i)
}

/// Picks the smallest criterion; near-ties go to the largest `size`.
fn argmin_with_ties(crit: &[f64], size: &[f64]) -> usize {
    let best = crit.iter().copied().fold(f64::INFINITY, f64::min);
    let slack = TIE_TOL * best.abs().max(f64::MIN_POSITIVE);
    (0..crit.len())
        .filter(|&i| crit[i] <= best + slack)
        .max_by(|&a, &b| size[a].total_cmp(&size[b]).then(b.cmp(&a)))
        .expect("non-empty grid")
}

/// Truncation selection from a precomputed table.
///
/// `gammas[join(l_1..l_d)]` is the joint-moment estimate using level `l_j` on
/// axis `j`; `grid` is decreasing, so `T ∧ T'` is the index-wise maximum.
pub fn gl_truncation_from_table(
    gammas: &[f64],
    grid: &[f64],
    d: usize,
    betas: &[f64],
    n: usize,
    cfg: &GlConfig,
) -> Result<TruncationSelection> {
    let m = grid.len();
    if m == 0 || d == 0 || betas.len() != d || gammas.len() != m.pow(d as u32) {
        return Err(Error::GridMismatch("estimate table does not match the grid".into()));
    }
    let total = gammas.len();
    let cand: Vec<Vec<f64>> = (0..total)
        .map(|f| split_index(f, m, d).iter().map(|&l| grid[l]).collect())
        .collect();
    let pen: Vec<f64> = cand.iter().map(|t| truncation_penalty(cfg, n, t, betas)).collect();
    let bias: Vec<f64> = (0..total)
        .into_par_iter()
        .map(|f| {
            let a = split_index(f, m, d);
            (0..total)
                .map(|g| {
                    let b = split_index(g, m, d);
                    let meet: Vec<usize> = a.iter().zip(&b).map(|(x, y)| *x.max(y)).collect();
                    let diff = gammas[join_index(&meet, m)] - gammas[g];
                    (diff * diff - pen[g]).max(0.0)
                })
                .fold(0.0, f64::max)
        })
        .collect();
    let crit: Vec<f64> = bias.iter().zip(&pen).map(|(b, v)| b + v).collect();
    let size: Vec<f64> = cand.iter().map(|t| t.iter().product()).collect();
    let pick = argmin_with_ties(&crit, &size);
    Ok(TruncationSelection {
        t_hat: cand[pick].clone(),
        gamma_hat: gammas[pick],
        bv_table: (0..total)
            .map(|f| BvRow {
                candidate: cand[f].clone(),
                estimate: gammas[f],
                bias: bias[f],
                penalty: pen[f],
            })
            .collect(),
    })
}

/// Bandwidth selection from a precomputed table; `grid` is increasing, so
/// `pi_{h,eta}` is the estimate at `max(h, eta)`.
pub fn gl_bandwidth_from_table(
    pis: &[f64],
    grid: &[f64],
    kappa: f64,
    betas: &[f64],
    n: usize,
    cfg: &GlConfig,
) -> Result<BandwidthSelection> {
    let m = grid.len();
    if m == 0 || pis.len() != m || betas.is_empty() {
        return Err(Error::GridMismatch("estimate table does not match the grid".into()));
    }
    let pen: Vec<f64> = grid.iter().map(|&h| bandwidth_penalty(cfg, n, h, kappa, betas)).collect();
    let bias: Vec<f64> = (0..m)
        .map(|a| {
            (0..m)
                .map(|b| {
                    let diff = pis[a.max(b)] - pis[b];
                    (diff * diff - pen[b]).max(0.0)
                })
                .fold(0.0, f64::max)
        })
        .collect();
    let crit: Vec<f64> = bias.iter().zip(&pen).map(|(b, v)| b + v).collect();
    let pick = argmin_with_ties(&crit, grid);
    Ok(BandwidthSelection {
        h_hat: grid[pick],
        pi_hat: pis[pick],
        bv_table: (0..m)
            .map(|i| BvRow {
                candidate: vec![grid[i]],
                estimate: pis[i],
                bias: bias[i],
                penalty: pen[i],
            })
            .collect(),
    })
}

/// Joint-moment estimates for every combination of per-axis levels.
pub fn truncation_table(zm: &MultiLevelSample) -> Vec<f64> {
    let d = zm.d();
    let m = zm.channels()[0].levels();
    let n = zm.n() as f64;
    let vals = zm.values();
    (0..m.pow(d as u32))
        .into_par_iter()
        .map(|f| {
            let idx = split_index(f, m, d);
            let cols: Vec<&[f64]> = idx.iter().enumerate().map(|(j, &l)| vals[j][l].as_slice()).collect();
            let mut acc = 0.0;
            for i in 0..zm.n() {
                acc += cols.iter().map(|c| c[i]).product::<f64>();
            }
            acc / n
        })
        .collect()
}

/// Density estimates for every bandwidth (the same level on each axis).
pub fn bandwidth_table(zm: &MultiLevelSample) -> Vec<f64> {
    let m = zm.channels()[0].levels();
    let n = zm.n() as f64;
    let vals = zm.values();
    (0..m)
        .map(|l| {
            (0..zm.n())
                .map(|i| vals.iter().map(|axis| axis[l][i]).product::<f64>())
                .sum::<f64>()
                / n
        })
        .collect()
}

fn check_truncation_sample(zm: &MultiLevelSample) -> Result<(Vec<f64>, Vec<f64>)> {
    let expect = TruncationGrid::new(zm.n())?;
    let mut betas = Vec::with_capacity(zm.d());
    for ch in zm.channels() {
        let ChannelKind::MultiTrunc { grid, beta_n } = ch.kind() else {
            return Err(Error::GridMismatch("truncation selection needs multi_trunc channels".into()));
        };
        if grid.as_slice() != expect.levels() {
            return Err(Error::GridMismatch(format!(
                "channel grid has {} levels, sample size {} needs {}",
                grid.len(),
                zm.n(),
                expect.len()
            )));
        }
        betas.push(*beta_n);
    }
    Ok((expect.levels().to_vec(), betas))
}

/// Data-driven truncation vector and the matching joint-moment estimate.
pub fn gl_select_truncation(zm: &MultiLevelSample, cfg: &GlConfig) -> Result<TruncationSelection> {
    let (grid, betas) = check_truncation_sample(zm)?;
    gl_truncation_from_table(&truncation_table(zm), &grid, zm.d(), &betas, zm.n(), cfg)
}

/// Data-driven bandwidth and the matching density estimate.
pub fn gl_select_bandwidth(zm: &MultiLevelSample, cfg: &GlConfig) -> Result<BandwidthSelection> {
    let expect = BandwidthGrid::new(zm.n())?;
    let mut betas = Vec::with_capacity(zm.d());
    let mut shared: Option<(f64, f64)> = None;
    for ch in zm.channels() {
        let ChannelKind::MultiBandwidth { grid, beta_n, x0: _, kernel } = ch.kind() else {
            return Err(Error::GridMismatch("bandwidth selection needs multi_bandwidth channels".into()));
        };
        if grid.as_slice() != expect.levels() {
            return Err(Error::GridMismatch(format!(
                "channel grid has {} levels, sample size {} needs {}",
                grid.len(),
                zm.n(),
                expect.len()
            )));
        }
        match shared {
            None => shared = Some((kernel.kappa(), *beta_n)),
            Some((k, _)) if k != kernel.kappa() => {
                return Err(invalid("kernels differ across axes"));
            }
            _ => {}
        }
        betas.push(*beta_n);
    }
    let kappa = shared.map(|s| s.0).unwrap_or(1.0);
    gl_bandwidth_from_table(&bandwidth_table(zm), expect.levels(), kappa, &betas, zm.n(), cfg)
}
