//! Locally private estimators and their rate-driven tuning.

use serde::{Deserialize, Serialize};

use crate::channels::{ChannelKind, ChannelSpec, PrivacyBudget};
use crate::error::{invalid, Error, Result};
use crate::rng::NoiseSource;

/// Finite-moment orders `k_j` of the components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentProfile {
    ks: Vec<f64>,
}

impl MomentProfile {
    /// Requires `sum 1/k_j < 1`, which makes the harmonic mean exceed `d`.
    pub fn new(ks: Vec<f64>) -> Result<Self> {
        if ks.is_empty() || ks.iter().any(|k| !(*k > 1.0)) {
            return Err(invalid("moment orders must exceed 1"));
        }
        if ks.iter().map(|k| 1.0 / k).sum::<f64>() >= 1.0 {
            return Err(invalid("moment orders need sum 1/k_j < 1"));
        }
        Ok(Self { ks })
    }

    /// Orders for marginal estimation only, where `k_j > 1` suffices.
    pub fn marginal(ks: Vec<f64>) -> Result<Self> {
        if ks.is_empty() || ks.iter().any(|k| !(*k > 1.0)) {
            return Err(invalid("moment orders must exceed 1"));
        }
        Ok(Self { ks })
    }

    pub fn ks(&self) -> &[f64] {
        &self.ks
    }

    pub fn dim(&self) -> usize {
        self.ks.len()
    }

    /// Harmonic mean `d / sum(1/k_j)`.
    pub fn k_bar(&self) -> f64 {
        self.ks.len() as f64 / self.ks.iter().map(|k| 1.0 / k).sum::<f64>()
    }

    /// Joint-moment rate exponent `(k_bar - d) / k_bar`.
    pub fn joint_exponent(&self) -> f64 {
        let kb = self.k_bar();
        (kb - self.ks.len() as f64) / kb
    }
}

/// Hölder class `H(beta, L)` on `R^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HolderClass {
    pub beta: f64,
    pub l: f64,
    pub d: usize,
}

impl HolderClass {
    pub fn new(beta: f64, l: f64, d: usize) -> Result<Self> {
        if !(beta > 0.0) || !(l >= 1.0) || d == 0 {
            return Err(invalid("need beta > 0, L >= 1, d >= 1"));
        }
        Ok(Self { beta, l, d })
    }
}

/// `n x d` released values (row-major) with the channels that produced them.
#[derive(Debug, Clone)]
pub struct PrivatizedSample {
    n: usize,
    values: Vec<f64>,
    channels: Vec<ChannelSpec>,
}

impl PrivatizedSample {
    pub fn new(values: Vec<f64>, channels: Vec<ChannelSpec>) -> Result<Self> {
        let d = channels.len();
        if d == 0 || values.len() % d != 0 {
            return Err(invalid("values do not form an n x d matrix"));
        }
        if channels.iter().any(|c| c.levels() != 1) {
            return Err(invalid("single-release sample built from multi-level channels"));
        }
        Ok(Self {
            n: values.len() / d,
            values,
            channels,
        })
    }

    /// Releases every row of the raw `n x d` matrix through `channels`.
    pub fn privatize<N: NoiseSource + ?Sized>(raw: &[f64], channels: Vec<ChannelSpec>, noise: &mut N) -> Result<Self> {
        let d = channels.len();
        if d == 0 || raw.len() % d != 0 {
            return Err(invalid("raw data do not form an n x d matrix"));
        }
        let mut values = Vec::with_capacity(raw.len());
        for row in raw.chunks_exact(d) {
            for (x, ch) in row.iter().zip(&channels) {
                values.push(ch.privatize(*x, noise)?.as_slice()[0]);
            }
        }
        Self::new(values, channels)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.channels.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn channels(&self) -> &[ChannelSpec] {
        &self.channels
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().skip(j).step_by(self.d()).copied()
    }
}

/// Multi-level releases: `values[j][l][i]` for component `j`, level `l`, row `i`.
#[derive(Debug, Clone)]
pub struct MultiLevelSample {
    n: usize,
    values: Vec<Vec<Vec<f64>>>,
    channels: Vec<ChannelSpec>,
}

impl MultiLevelSample {
    pub fn new(values: Vec<Vec<Vec<f64>>>, channels: Vec<ChannelSpec>) -> Result<Self> {
        if values.len() != channels.len() || channels.is_empty() {
            return Err(invalid("one value block per channel is required"));
        }
        let n = values[0].first().map_or(0, Vec::len);
        for (block, ch) in values.iter().zip(&channels) {
            if block.len() != ch.levels() || block.iter().any(|v| v.len() != n) {
                return Err(invalid("value block shape does not match its channel"));
            }
        }
        Ok(Self { n, values, channels })
    }

    /// Releases the raw `n x d` matrix through multi-level channels.
    pub fn privatize<N: NoiseSource + ?Sized>(raw: &[f64], channels: Vec<ChannelSpec>, noise: &mut N) -> Result<Self> {
        let d = channels.len();
        if d == 0 || raw.len() % d != 0 {
            return Err(invalid("raw data do not form an n x d matrix"));
        }
        let n = raw.len() / d;
        let mut values: Vec<Vec<Vec<f64>>> = channels
            .iter()
            .map(|c| vec![Vec::with_capacity(n); c.levels()])
            .collect();
        for row in raw.chunks_exact(d) {
            for (j, (x, ch)) in row.iter().zip(&channels).enumerate() {
                let rel = ch.privatize(*x, noise)?;
                for (l, v) in rel.as_slice().iter().enumerate() {
                    values[j][l].push(*v);
                }
            }
        }
        Self::new(values, channels)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.channels.len()
    }

    pub fn values(&self) -> &[Vec<Vec<f64>>] {
        &self.values
    }

    pub fn channels(&self) -> &[ChannelSpec] {
        &self.channels
    }
}

/// Whether truncations serve marginal means or the joint moment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TruncationMode {
    Mean,
    Joint,
}

/// Rate-optimal truncation levels.
///
/// Mean mode: `T_j = (n alpha_j^2)^{1/(2 k_j)}`.
/// Joint mode: `T_j = (n prod_l alpha_l^2)^{1/(2 k_j)}`.
pub fn optimal_truncations(
    profile: &MomentProfile,
    budget: &PrivacyBudget,
    n: usize,
    mode: TruncationMode,
) -> Result<Vec<f64>> {
    if budget.dim() != profile.dim() {
        return Err(invalid("budget and moment profile dimensions differ"));
    }
    if n == 0 {
        return Err(invalid("n must be at least 1"));
    }
    let n = n as f64;
    let bases: Vec<f64> = match mode {
        TruncationMode::Mean => budget.alphas().iter().map(|a| n * a * a).collect(),
        TruncationMode::Joint => vec![n * budget.prod_sq(); profile.dim()],
    };
    if bases.iter().any(|b| *b < 1.0) {
        return Err(Error::RegimeViolated("effective sample size below 1".into()));
    }
    Ok(bases
        .iter()
        .zip(profile.ks())
        .map(|(b, k)| b.powf(1.0 / (2.0 * k)))
        .collect())
}

fn mean_of(it: impl Iterator<Item = f64>, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(invalid("empty sample"));
    }
    Ok(it.sum::<f64>() / n as f64)
}

/// Mean of column `j`.
pub fn private_mean(z: &PrivatizedSample, j: usize) -> Result<f64> {
    if j >= z.d() {
        return Err(Error::AxisOutOfRange { axis: j, dim: z.d() });
    }
    mean_of(z.column(j), z.n())
}

/// Mean of the row products.
pub fn private_joint_moment(z: &PrivatizedSample) -> Result<f64> {
    mean_of(z.values().chunks_exact(z.d()).map(|r| r.iter().product()), z.n())
}

/// Covariance and (optional) correlation estimates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CovCorr {
    pub theta: f64,
    pub corr: Option<f64>,
    pub diagnostic: Option<String>,
}

/// `theta = gamma - m1 m2`; with second-moment releases `z2` of `(X^j)^2`,
/// `corr = theta / sqrt(v1 v2)` clipped to `[-1, 1]`.
pub fn private_covariance_correlation(z: &PrivatizedSample, z2: Option<&PrivatizedSample>) -> Result<CovCorr> {
    if z.d() != 2 {
        return Err(invalid("covariance needs d = 2"));
    }
    let m1 = private_mean(z, 0)?;
    let m2 = private_mean(z, 1)?;
    let theta = private_joint_moment(z)? - m1 * m2;
    let Some(z2) = z2 else {
        return Ok(CovCorr {
            theta,
            corr: None,
            diagnostic: None,
        });
    };
    if z2.d() != 2 {
        return Err(invalid("second-moment releases need d = 2"));
    }
    let v1 = private_mean(z2, 0)? - m1 * m1;
    let v2 = private_mean(z2, 1)? - m2 * m2;
    if v1 <= 0.0 || v2 <= 0.0 {
        return Ok(CovCorr {
            theta,
            corr: None,
            diagnostic: Some(format!("nonpositive variance estimate (v1 = {v1}, v2 = {v2})")),
        });
    }
    Ok(CovCorr {
        theta,
        corr: Some((theta / (v1 * v2).sqrt()).clamp(-1.0, 1.0)),
        diagnostic: None,
    })
}

/// Mean of row products of kernel releases; may be negative.
pub fn private_kde(z: &PrivatizedSample) -> Result<f64> {
    let mut shared: Option<(f64, f64)> = None;
    for ch in z.channels() {
        let ChannelKind::KernelLaplace { h, x0, .. } = ch.kind() else {
            return Err(invalid("density estimate needs kernel channels"));
        };
        match shared {
            None => shared = Some((*h, *x0)),
            Some((h0, _)) if h0 != *h => return Err(invalid("bandwidths differ across columns")),
            _ => {}
        }
    }
    private_joint_moment(z)
}

/// Bandwidth regime selected by [`optimal_bandwidth`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Private,
    Nonprivate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Bandwidth {
    pub h_star: f64,
    pub regime: Regime,
}

/// Privacy level above which the data term dominates the noise.
pub fn nonprivate_threshold(hc: &HolderClass, n: usize) -> f64 {
    (n as f64).powf(1.0 / (2.0 * (2.0 * hc.beta + hc.d as f64)))
}

/// Rate-optimal bandwidth.
///
/// With a common level `alpha >= n^{1/(2(2 beta + d))}` the classical
/// `n^{-1/(2 beta + d)}` applies; otherwise `(n prod alpha^2)^{-1/(2(beta + d))}`.
pub fn optimal_bandwidth(hc: &HolderClass, budget: &PrivacyBudget, n: usize) -> Result<Bandwidth> {
    if budget.dim() != hc.d {
        return Err(invalid("budget and Hölder class dimensions differ"));
    }
    let nf = n as f64;
    let d = hc.d as f64;
    let nonprivate = budget
        .common()
        .is_some_and(|a| a >= nonprivate_threshold(hc, n));
    let bw = if nonprivate {
        Bandwidth {
            h_star: nf.powf(-1.0 / (2.0 * hc.beta + d)),
            regime: Regime::Nonprivate,
        }
    } else {
        let eff = nf * budget.prod_sq();
        if !(eff > 1.0) {
            return Err(Error::SampleTooSmall(format!("n prod alpha^2 = {eff} must exceed 1")));
        }
        Bandwidth {
            h_star: eff.powf(-1.0 / (2.0 * (hc.beta + d))),
            regime: Regime::Private,
        }
    };
    if !(bw.h_star < 1.0) {
        return Err(Error::SampleTooSmall(format!("optimal bandwidth {} >= 1", bw.h_star)));
    }
    Ok(bw)
}
