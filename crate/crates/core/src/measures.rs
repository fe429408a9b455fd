//! Finite distributions on product spaces and the divergences between them.
//!
//! Total variation uses the unnormalized convention `sum |p - q|`, so it
//! ranges over `[0, 2]`. Every contraction bound in [`crate::contraction`]
//! consumes this convention; halving it would silently change each bound by
//! a factor. Logarithms are natural (nats).

use serde::{Deserialize, Serialize};

use crate::channels::ChannelSpec;
use crate::error::{invalid, Error, Result};

/// Probability table over `supports[0] x ... x supports[d-1]`.
///
/// Masses are stored densely in row-major order (last axis fastest).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DistJson", into = "DistJson")]
pub struct DiscreteDist {
    supports: Vec<Vec<f64>>,
    probs: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct DistJson {
    supports: Vec<Vec<f64>>,
    probs: Vec<DistEntry>,
}

#[derive(Serialize, Deserialize)]
struct DistEntry {
    idx: Vec<usize>,
    p: f64,
}

impl TryFrom<DistJson> for DiscreteDist {
    type Error = Error;

    fn try_from(raw: DistJson) -> Result<Self> {
        let entries = raw.probs.into_iter().map(|e| (e.idx, e.p)).collect();
        DiscreteDist::new(raw.supports, entries)
    }
}

impl From<DiscreteDist> for DistJson {
    fn from(dist: DiscreteDist) -> Self {
        let probs = (0..dist.probs.len())
            .filter(|&flat| dist.probs[flat] > 0.0)
            .map(|flat| DistEntry {
                idx: dist.unflatten(flat),
                p: dist.probs[flat],
            })
            .collect();
        DistJson {
            supports: dist.supports,
            probs,
        }
    }
}

/// Sorted, duplicate-free set of axis indices (0-based).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SubsetIndex {
    members: Vec<usize>,
}

impl SubsetIndex {
    pub fn new(members: Vec<usize>) -> Result<Self> {
        if members.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("subset members must be strictly increasing"));
        }
        Ok(Self { members })
    }

    /// Subset encoded by the set bits of `mask`.
    pub fn from_mask(mask: usize) -> Self {
        let members = (0..usize::BITS as usize)
            .filter(|b| mask >> b & 1 == 1)
            .collect();
        Self { members }
    }

    pub fn mask(&self) -> usize {
        self.members.iter().fold(0, |m, &a| m | 1 << a)
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// Which divergence [`divergence`] evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Divergence {
    Kl,
    Jeffreys,
    /// `sum q |p/q - 1|^l` with `l > 1`.
    FL { l: f64 },
}

impl DiscreteDist {
    /// Builds a distribution from sparse `(index tuple, mass)` entries.
    ///
    /// Masses are renormalized once if their total is within `1e-9` of one;
    /// otherwise construction fails.
    pub fn new(supports: Vec<Vec<f64>>, entries: Vec<(Vec<usize>, f64)>) -> Result<Self> {
        validate_supports(&supports)?;
        let size: usize = supports.iter().map(Vec::len).product();
        let mut probs = vec![0.0; size];
        let mut seen = vec![false; size];
        let shape: Vec<usize> = supports.iter().map(Vec::len).collect();
        for (idx, p) in entries {
            let flat = flatten(&shape, &idx)?;
            if seen[flat] {
                return Err(invalid(format!("duplicate entry {idx:?}")));
            }
            seen[flat] = true;
            probs[flat] = p;
        }
        Self::from_dense(supports, probs)
    }

    /// Builds a distribution from a dense row-major mass table.
    pub fn from_dense(supports: Vec<Vec<f64>>, mut probs: Vec<f64>) -> Result<Self> {
        validate_supports(&supports)?;
        let size: usize = supports.iter().map(Vec::len).product();
        if probs.len() != size {
            return Err(invalid(format!(
                "table has {} cells, supports need {size}",
                probs.len()
            )));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(invalid("masses must be finite and nonnegative"));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(invalid(format!("masses sum to {total}, not 1")));
        }
        probs.iter_mut().for_each(|p| *p /= total);
        Ok(Self { supports, probs })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("distribution serializes")
    }

    pub fn dim(&self) -> usize {
        self.supports.len()
    }

    pub fn supports(&self) -> &[Vec<f64>] {
        &self.supports
    }

    pub fn shape(&self) -> Vec<usize> {
        self.supports.iter().map(Vec::len).collect()
    }

    /// Dense mass table in row-major order.
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, idx: &[usize]) -> Result<f64> {
        Ok(self.probs[flatten(&self.shape(), idx)?])
    }

    /// Index tuple of a flat cell position.
    pub fn unflatten(&self, flat: usize) -> Vec<usize> {
        unflatten(&self.shape(), flat)
    }

    /// Index of `value` on `axis`, if it is a support point.
    pub fn support_index(&self, axis: usize, value: f64) -> Option<usize> {
        self.supports.get(axis)?.iter().position(|&s| s == value)
    }

    /// Product of independent one-dimensional marginals.
    pub fn product(marginals: &[(Vec<f64>, Vec<f64>)]) -> Result<Self> {
        let supports: Vec<Vec<f64>> = marginals.iter().map(|(s, _)| s.clone()).collect();
        let shape: Vec<usize> = supports.iter().map(Vec::len).collect();
        let size = shape.iter().product();
        let probs = (0..size)
            .map(|flat| {
                unflatten(&shape, flat)
                    .iter()
                    .zip(marginals)
                    .map(|(&i, (_, p))| p[i])
                    .product()
            })
            .collect();
        Self::from_dense(supports, probs)
    }
}

fn validate_supports(supports: &[Vec<f64>]) -> Result<()> {
    if supports.is_empty() {
        return Err(invalid("distribution needs at least one axis"));
    }
    for (axis, s) in supports.iter().enumerate() {
        if s.is_empty() {
            return Err(invalid(format!("axis {axis} has an empty support")));
        }
        if s.iter().any(|v| !v.is_finite()) {
            return Err(invalid(format!("axis {axis} has a non-finite support point")));
        }
        if s.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid(format!(
                "axis {axis} support must be strictly increasing"
            )));
        }
    }
    Ok(())
}

pub(crate) fn flatten(shape: &[usize], idx: &[usize]) -> Result<usize> {
    if idx.len() != shape.len() {
        return Err(invalid(format!(
            "index {idx:?} has wrong length for {} axes",
            shape.len()
        )));
    }
    let mut flat = 0;
    for (axis, (&i, &n)) in idx.iter().zip(shape).enumerate() {
        if i >= n {
            return Err(invalid(format!("index {i} out of range on axis {axis}")));
        }
        flat = flat * n + i;
    }
    Ok(flat)
}

pub(crate) fn unflatten(shape: &[usize], mut flat: usize) -> Vec<usize> {
    let mut idx = vec![0; shape.len()];
    for axis in (0..shape.len()).rev() {
        idx[axis] = flat % shape[axis];
        flat /= shape[axis];
    }
    idx
}

/// Law of the sub-vector indexed by `subset`.
pub fn marginal(p: &DiscreteDist, subset: &SubsetIndex) -> Result<DiscreteDist> {
    if subset.is_empty() {
        return Err(Error::EmptyMarginal);
    }
    let d = p.dim();
    if let Some(&axis) = subset.members().iter().find(|&&a| a >= d) {
        return Err(Error::AxisOutOfRange { axis, dim: d });
    }
    let shape = p.shape();
    let sub_shape: Vec<usize> = subset.members().iter().map(|&a| shape[a]).collect();
    let mut out = vec![0.0; sub_shape.iter().product()];
    for (flat, &mass) in p.probs.iter().enumerate() {
        let idx = unflatten(&shape, flat);
        let sub_idx: Vec<usize> = subset.members().iter().map(|&a| idx[a]).collect();
        out[flatten(&sub_shape, &sub_idx)?] += mass;
    }
    let supports = subset
        .members()
        .iter()
        .map(|&a| p.supports[a].clone())
        .collect();
    DiscreteDist::from_dense(supports, out)
}

/// Unnormalized total variation `sum |p_i - q_i|`, in `[0, 2]`.
pub fn tv_distance(p: &DiscreteDist, q: &DiscreteDist) -> Result<f64> {
    if p.supports != q.supports {
        return Err(Error::SupportMismatch);
    }
    Ok(p.probs.iter().zip(&q.probs).map(|(a, b)| (a - b).abs()).sum())
}

/// KL, Jeffreys or f_l divergence of `p` from `q`.
pub fn divergence(p: &DiscreteDist, q: &DiscreteDist, kind: Divergence) -> Result<f64> {
    if p.supports != q.supports {
        return Err(Error::SupportMismatch);
    }
    divergence_slices(&p.probs, &q.probs, kind)
}

/// [`divergence`] on raw aligned mass vectors.
pub fn divergence_slices(p: &[f64], q: &[f64], kind: Divergence) -> Result<f64> {
    match kind {
        Divergence::Kl => kl(p, q),
        Divergence::Jeffreys => Ok(kl(p, q)? + kl(q, p)?),
        Divergence::FL { l } => {
            if !(l > 1.0) {
                return Err(invalid(format!("f_l divergence needs l > 1, got {l}")));
            }
            let mut total = 0.0;
            for (&a, &b) in p.iter().zip(q) {
                if b == 0.0 {
                    if a > 0.0 {
                        return Err(Error::DivergenceUndefined(
                            "reference mass is zero where the other is positive".into(),
                        ));
                    }
                    continue;
                }
                total += b * (a / b - 1.0).abs().powf(l);
            }
            Ok(total)
        }
    }
}

fn kl(p: &[f64], q: &[f64]) -> Result<f64> {
    let mut total = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        if a == 0.0 {
            continue;
        }
        if b == 0.0 {
            return Err(Error::DivergenceUndefined(
                "P is not absolutely continuous with respect to Q".into(),
            ));
        }
        total += a * (a / b).ln();
    }
    // Rounding can leave a tiny negative value when p == q.
    Ok(total.max(0.0))
}

/// Exact law of `Z` where `Z^j ~ Q^j(. | X^j)` independently across axes.
pub fn pushforward(p: &DiscreteDist, channels: &[ChannelSpec]) -> Result<DiscreteDist> {
    if channels.len() != p.dim() {
        return Err(invalid(format!(
            "{} channels for a {}-dimensional distribution",
            channels.len(),
            p.dim()
        )));
    }
    let mut shape = p.shape();
    let mut table = p.probs.clone();
    let mut supports = Vec::with_capacity(p.dim());
    for (axis, ch) in channels.iter().enumerate() {
        let (inputs, outputs, kernel) = ch.finite_table().ok_or(Error::NonFiniteChannel)?;
        // Row of the channel table for each support point of this axis.
        let rows = p.supports[axis]
            .iter()
            .map(|&x| {
                inputs.iter().position(|&v| v == x).ok_or_else(|| {
                    invalid(format!("channel {axis} input support does not cover {x}"))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let matrix: Vec<Vec<f64>> = rows.iter().map(|&r| kernel[r].clone()).collect();
        table = apply_axis(&table, &shape, axis, &matrix);
        shape[axis] = outputs.len();
        supports.push(outputs.to_vec());
    }
    DiscreteDist::from_dense(supports, table)
}

/// Contracts `axis` of a row-major tensor with a `(in, out)` matrix.
pub(crate) fn apply_axis(
    table: &[f64],
    shape: &[usize],
    axis: usize,
    matrix: &[Vec<f64>],
) -> Vec<f64> {
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    let n_in = shape[axis];
    let n_out = matrix.first().map_or(0, Vec::len);
    let mut out = vec![0.0; outer * n_out * inner];
    for o in 0..outer {
        for i in 0..n_in {
            for k in 0..inner {
                let mass = table[(o * n_in + i) * inner + k];
                if mass == 0.0 {
                    continue;
                }
                for (z, &w) in matrix[i].iter().enumerate() {
                    out[(o * n_out + z) * inner + k] += mass * w;
                }
            }
        }
    }
    out
}
