//! Synthetic raw data with known ground truths.

use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

use crate::error::{invalid, Result};
use crate::measures::DiscreteDist;

/// Sign-symmetric Pareto components that share one draw with probability `rho`.
///
/// Component `j` has tail index `a_j > k_j` and scale
/// `x_m = ((a_j - k_j)/a_j)^{1/k_j}`, which makes `E|X^j|^{k_j} = 1` exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoFactor {
    pub ks: Vec<f64>,
    pub tails: Vec<f64>,
    pub rho: f64,
}

impl ParetoFactor {
    pub fn new(ks: Vec<f64>, tails: Vec<f64>, rho: f64) -> Result<Self> {
        if ks.is_empty() || ks.len() != tails.len() {
            return Err(invalid("one tail index per moment order is required"));
        }
        if ks.iter().zip(&tails).any(|(k, a)| !(a > k) || !(*k > 0.0)) {
            return Err(invalid("tail indices must exceed the moment orders"));
        }
        if !(0.0..=1.0).contains(&rho) {
            return Err(invalid("rho must lie in [0, 1]"));
        }
        Ok(Self { ks, tails, rho })
    }

    /// Tail index `k_j + 0.5` on every axis.
    pub fn with_default_tails(ks: Vec<f64>, rho: f64) -> Result<Self> {
        let tails = ks.iter().map(|k| k + 0.5).collect();
        Self::new(ks, tails, rho)
    }

    pub fn dim(&self) -> usize {
        self.ks.len()
    }

    pub fn scales(&self) -> Vec<f64> {
        self.ks
            .iter()
            .zip(&self.tails)
            .map(|(k, a)| ((a - k) / a).powf(1.0 / k))
            .collect()
    }

    /// `E prod X^j`; finite when `sum 1/a_j < 1`.
    pub fn gamma(&self) -> Result<f64> {
        let s: f64 = self.tails.iter().map(|a| 1.0 / a).sum();
        if s >= 1.0 {
            return Err(invalid("joint moment is infinite for these tails"));
        }
        if self.dim() % 2 == 1 {
            return Ok(0.0);
        }
        Ok(self.rho * self.scales().iter().product::<f64>() / (1.0 - s))
    }

    /// `E (X^j)^2`; needs `a_j > 2`.
    pub fn second_moments(&self) -> Result<Vec<f64>> {
        self.tails
            .iter()
            .zip(self.scales())
            .map(|(a, xm)| {
                if *a > 2.0 {
                    Ok(a * xm * xm / (a - 2.0))
                } else {
                    Err(invalid("second moment is infinite"))
                }
            })
            .collect()
    }

    /// Covariance of the first two components (every mean is zero).
    pub fn covariance(&self) -> Result<f64> {
        if self.dim() != 2 {
            return Err(invalid("covariance needs d = 2"));
        }
        self.gamma()
    }

    pub fn correlation(&self) -> Result<f64> {
        let v = self.second_moments()?;
        Ok(self.covariance()? / (v[0] * v[1]).sqrt())
    }

    /// `n` rows, row-major.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<f64> {
        let d = self.dim();
        let xm = self.scales();
        let mut out = Vec::with_capacity(n * d);
        for _ in 0..n {
            if rng.random::<f64>() < self.rho {
                let u = 1.0 - rng.random::<f64>();
                let s = if rng.random::<bool>() { 1.0 } else { -1.0 };
                for j in 0..d {
                    out.push(s * xm[j] * u.powf(-1.0 / self.tails[j]));
                }
            } else {
                for j in 0..d {
                    let u = 1.0 - rng.random::<f64>();
                    let s = if rng.random::<bool>() { 1.0 } else { -1.0 };
                    out.push(s * xm[j] * u.powf(-1.0 / self.tails[j]));
                }
            }
        }
        out
    }
}

/// Product of two-component Gaussian mixtures truncated to `[-edge, edge]`.
///
/// Smooth of every order inside the box, so it lies in any Hölder ball around
/// points away from the edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HolderDensity {
    pub d: usize,
    pub beta: f64,
    /// Component means are `±shift`.
    pub shift: f64,
    pub sd: f64,
    pub edge: f64,
}

fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + erf(x / std::f64::consts::SQRT_2))
}

fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

impl HolderDensity {
    pub fn new(d: usize, beta: f64, shift: f64, sd: f64, edge: f64) -> Result<Self> {
        if ![1.0, 2.0, 3.0].contains(&beta) {
            return Err(invalid(format!("smoothness {beta} is not supported (use 1, 2 or 3)")));
        }
        if d == 0 || !(sd > 0.0) || !(edge > shift.abs()) {
            return Err(invalid("need d >= 1, sd > 0 and edge beyond the component means"));
        }
        Ok(Self { d, beta, shift, sd, edge })
    }

    /// Mixture of `N(±0.5, 0.5^2)` cut at `±4`.
    pub fn standard(d: usize, beta: f64) -> Result<Self> {
        Self::new(d, beta, 0.5, 0.5, 4.0)
    }

    fn raw_axis_pdf(&self, x: f64) -> f64 {
        0.5 * (normal_pdf((x - self.shift) / self.sd) + normal_pdf((x + self.shift) / self.sd)) / self.sd
    }

    /// Mass of the untruncated axis mixture inside the box.
    fn axis_mass(&self) -> f64 {
        let m = |mu: f64| normal_cdf((self.edge - mu) / self.sd) - normal_cdf((-self.edge - mu) / self.sd);
        0.5 * (m(self.shift) + m(-self.shift))
    }

    pub fn axis_density(&self, x: f64) -> f64 {
        if x.abs() > self.edge {
            0.0
        } else {
            self.raw_axis_pdf(x) / self.axis_mass()
        }
    }

    pub fn density(&self, x: &[f64]) -> f64 {
        x.iter().map(|v| self.axis_density(*v)).product()
    }

    /// `n` rows by per-axis rejection from the untruncated mixture.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<f64> {
        let mut out = Vec::with_capacity(n * self.d);
        for _ in 0..n * self.d {
            loop {
                let mu = if rng.random::<bool>() { self.shift } else { -self.shift };
                let z: f64 = rng.sample(StandardNormal);
                let x = mu + self.sd * z;
                if x.abs() <= self.edge {
                    out.push(x);
                    break;
                }
            }
        }
        out
    }
}

/// Draws `n` rows from a finite joint table by inverse CDF.
pub fn sample_discrete<R: Rng + ?Sized>(dist: &DiscreteDist, n: usize, rng: &mut R) -> Vec<f64> {
    let mut cdf = Vec::with_capacity(dist.probs().len());
    let mut acc = 0.0;
    for p in dist.probs() {
        acc += p;
        cdf.push(acc);
    }
    let last = dist.probs().iter().rposition(|p| *p > 0.0).unwrap_or(0);
    let mut out = Vec::with_capacity(n * dist.dim());
    for _ in 0..n {
        let u = rng.random::<f64>() * acc;
        let cell = cdf.partition_point(|c| *c <= u).min(last);
        for (j, i) in dist.unflatten(cell).into_iter().enumerate() {
            out.push(dist.supports()[j][i]);
        }
    }
    out
}

/// Any of the supported generators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataModel {
    ParetoFactor(ParetoFactor),
    HolderDensity(HolderDensity),
    DiscreteTable { dist: DiscreteDist },
}

impl DataModel {
    pub fn dim(&self) -> usize {
        match self {
            DataModel::ParetoFactor(m) => m.dim(),
            DataModel::HolderDensity(m) => m.d,
            DataModel::DiscreteTable { dist } => dist.dim(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<f64> {
        match self {
            DataModel::ParetoFactor(m) => m.sample(n, rng),
            DataModel::HolderDensity(m) => m.sample(n, rng),
            DataModel::DiscreteTable { dist } => sample_discrete(dist, n, rng),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("models serialize")
    }
}

/// Writes rows as CSV with header `x1..xd`.
pub fn write_csv<W: Write>(out: &mut W, rows: &[f64], d: usize) -> Result<()> {
    let header: Vec<String> = (1..=d).map(|j| format!("x{j}")).collect();
    writeln!(out, "{}", header.join(","))?;
    for row in rows.chunks_exact(d) {
        let cells: Vec<String> = row.iter().map(f64::to_string).collect();
        writeln!(out, "{}", cells.join(","))?;
    }
    Ok(())
}
