//! Componentwise privacy channels: construction, sampling, densities and audits.
//!
//! The Laplace law `L(b)` has density `(1/(2b)) exp(-|x|/b)`; a truncation
//! channel at level `T` and privacy `alpha` uses scale `b = 2T/alpha`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::NoiseSource;

/// Per-component privacy levels `alpha = (alpha_1, ..., alpha_d)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrivacyBudget {
    alphas: Vec<f64>,
}

impl PrivacyBudget {
    pub fn new(alphas: Vec<f64>) -> Result<Self> {
        if alphas.is_empty() {
            return Err(invalid("privacy budget needs at least one component"));
        }
        if alphas.iter().any(|a| !(*a >= 0.0) || a.is_nan()) {
            return Err(invalid("privacy levels must be nonnegative"));
        }
        Ok(Self { alphas })
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn dim(&self) -> usize {
        self.alphas.len()
    }

    /// `e^{alpha_j} - 1` per component.
    pub fn expm1(&self) -> Vec<f64> {
        self.alphas.iter().map(|a| a.exp_m1()).collect()
    }

    pub fn sum(&self) -> f64 {
        self.alphas.iter().sum()
    }

    /// `prod_j alpha_j^2`.
    pub fn prod_sq(&self) -> f64 {
        self.alphas.iter().map(|a| a * a).product()
    }

    /// The shared level when all components are equal.
    pub fn common(&self) -> Option<f64> {
        let a = self.alphas[0];
        self.alphas.iter().all(|&b| b == a).then_some(a)
    }
}

/// Level of the joint LDP guarantee induced by componentwise levels.
pub fn compose_ldp_level(budget: &PrivacyBudget) -> f64 {
    budget.sum()
}

/// Compactly supported kernel on `[-1, 1]` cancelling moments `1..=order`.
///
/// Built as `K(u) = sum_{m <= order} phi_m(0) phi_m(u)` with orthonormal
/// Legendre polynomials `phi_m`, which is the reproducing kernel of
/// polynomials of degree `order` and therefore integrates every `u^l`,
/// `1 <= l <= order`, to zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "KernelJson", into = "KernelJson")]
pub struct KernelFn {
    order: usize,
    coeffs: Vec<f64>,
    kappa: f64,
}

#[derive(Serialize, Deserialize)]
struct KernelJson {
    order: usize,
}

impl TryFrom<KernelJson> for KernelFn {
    type Error = Error;
    fn try_from(raw: KernelJson) -> Result<Self> {
        KernelFn::legendre(raw.order)
    }
}

impl From<KernelFn> for KernelJson {
    fn from(k: KernelFn) -> Self {
        KernelJson { order: k.order }
    }
}

const MAX_KERNEL_ORDER: usize = 12;

impl KernelFn {
    pub fn legendre(order: usize) -> Result<Self> {
        if order > MAX_KERNEL_ORDER {
            return Err(invalid(format!(
                "kernel order {order} exceeds {MAX_KERNEL_ORDER}"
            )));
        }
        let legendre = legendre_coeffs(order);
        let mut coeffs = vec![0.0; order + 1];
        for (m, p) in legendre.iter().enumerate() {
            let w = (2 * m + 1) as f64 / 2.0 * p[0];
            for (c, &pc) in coeffs.iter_mut().zip(p) {
                *c += w * pc;
            }
        }
        let kappa = poly_sup_abs(&coeffs);
        Ok(Self {
            order,
            coeffs,
            kappa,
        })
    }

    /// Kernel whose order suits Hölder smoothness `beta` (`floor(beta)`).
    pub fn for_smoothness(beta: f64) -> Result<Self> {
        if !(beta > 0.0) {
            return Err(invalid("smoothness must be positive"));
        }
        Self::legendre(beta.floor() as usize)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// `sup |K|`.
    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// Monomial coefficients on `[-1, 1]`, lowest degree first.
    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    #[inline]
    pub fn eval(&self, u: f64) -> f64 {
        if !(-1.0..=1.0).contains(&u) {
            return 0.0;
        }
        horner(&self.coeffs, u)
    }

    /// Extreme values of `K` over its support (including the zero outside).
    pub fn range(&self) -> (f64, f64) {
        let mut lo: f64 = 0.0;
        let mut hi: f64 = 0.0;
        for u in critical_points(&self.coeffs) {
            let v = horner(&self.coeffs, u);
            lo = lo.min(v);
            hi = hi.max(v);
        }
        (lo, hi)
    }
}

fn horner(coeffs: &[f64], u: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * u + c)
}

fn legendre_coeffs(order: usize) -> Vec<Vec<f64>> {
    let mut polys: Vec<Vec<f64>> = vec![vec![1.0]];
    if order >= 1 {
        polys.push(vec![0.0, 1.0]);
    }
    for m in 1..order {
        let mut next = vec![0.0; m + 2];
        for (i, &c) in polys[m].iter().enumerate() {
            next[i + 1] += (2 * m + 1) as f64 * c;
        }
        for (i, &c) in polys[m - 1].iter().enumerate() {
            next[i] -= m as f64 * c;
        }
        next.iter_mut().for_each(|c| *c /= (m + 1) as f64);
        polys.push(next);
    }
    polys
}

/// Endpoints and interior stationary points of a polynomial on `[-1, 1]`.
fn critical_points(coeffs: &[f64]) -> Vec<f64> {
    let deriv: Vec<f64> = coeffs
        .iter()
        .enumerate()
        .skip(1)
        .map(|(i, c)| i as f64 * c)
        .collect();
    let mut points = vec![-1.0, 1.0];
    if deriv.iter().all(|&c| c == 0.0) {
        return points;
    }
    let steps = 4000;
    let at = |i: usize| -1.0 + 2.0 * i as f64 / steps as f64;
    for i in 0..steps {
        let (mut a, mut b) = (at(i), at(i + 1));
        let (fa, fb) = (horner(&deriv, a), horner(&deriv, b));
        if fa == 0.0 {
            points.push(a);
            continue;
        }
        if fa * fb > 0.0 {
            continue;
        }
        for _ in 0..80 {
            let mid = 0.5 * (a + b);
            if horner(&deriv, a) * horner(&deriv, mid) <= 0.0 {
                b = mid;
            } else {
                a = mid;
            }
        }
        points.push(0.5 * (a + b));
    }
    points
}

fn poly_sup_abs(coeffs: &[f64]) -> f64 {
    critical_points(coeffs)
        .into_iter()
        .map(|u| horner(coeffs, u).abs())
        .fold(0.0, f64::max)
}

/// Variant-specific parameters of a channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum ChannelKind {
    /// `clamp(x, -T, T) + L(2T/alpha)`.
    LaplaceTrunc {
        #[serde(rename = "T")]
        t: f64,
    },
    /// `K((x - x0)/h)/h + L(2 kappa/(alpha h))`.
    KernelLaplace { h: f64, x0: f64, kernel: KernelFn },
    /// One truncation release per grid level with noise `L(2T/beta_n)`.
    MultiTrunc { grid: Vec<f64>, beta_n: f64 },
    /// One kernel release per bandwidth with noise `L(2 kappa/(h beta_n))`.
    MultiBandwidth {
        grid: Vec<f64>,
        beta_n: f64,
        x0: f64,
        kernel: KernelFn,
    },
    /// Finite channel given by a row-stochastic transition table.
    RandomizedResponse {
        input_support: Vec<f64>,
        output_alphabet: Vec<f64>,
        transition_table: Vec<Vec<f64>>,
    },
}

/// A per-component Markov kernel with its declared privacy level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ChannelJson", into = "ChannelJson")]
pub struct ChannelSpec {
    alpha: f64,
    kind: ChannelKind,
}

#[derive(Serialize, Deserialize)]
struct ChannelJson {
    alpha: f64,
    #[serde(flatten)]
    kind: ChannelKind,
}

impl TryFrom<ChannelJson> for ChannelSpec {
    type Error = Error;
    fn try_from(raw: ChannelJson) -> Result<Self> {
        ChannelSpec::new(raw.alpha, raw.kind)
    }
}

impl From<ChannelSpec> for ChannelJson {
    fn from(ch: ChannelSpec) -> Self {
        ChannelJson {
            alpha: ch.alpha,
            kind: ch.kind,
        }
    }
}

/// Output of [`ChannelSpec::privatize`].
#[derive(Debug, Clone, PartialEq)]
pub enum Release {
    Scalar(f64),
    /// One value per grid level, in grid order.
    Levels(Vec<f64>),
}

impl Release {
    pub fn as_slice(&self) -> &[f64] {
        match self {
            Release::Scalar(v) => std::slice::from_ref(v),
            Release::Levels(v) => v,
        }
    }
}

/// Supremum of a likelihood ratio over audit grids, with its maximizer.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport {
    pub max_ratio: f64,
    pub x: f64,
    pub x_prime: f64,
    /// Output point (one coordinate per level for multi-level channels).
    pub z: Vec<f64>,
}

fn positive_finite(v: f64, what: &str) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(invalid(format!("{what} must be positive and finite, got {v}")))
    }
}

fn check_beta(alpha: f64, grid: &[f64], beta_n: f64) -> Result<()> {
    let want = alpha / grid.len() as f64;
    if (beta_n - want).abs() > 1e-12 * want.max(1.0) {
        return Err(invalid(format!(
            "beta_n = {beta_n} but alpha / card(grid) = {want}"
        )));
    }
    Ok(())
}

impl ChannelSpec {
    /// Validates `kind` against the declared level.
    pub fn new(alpha: f64, kind: ChannelKind) -> Result<Self> {
        if alpha.is_nan() || alpha < 0.0 {
            return Err(invalid("declared alpha must be nonnegative"));
        }
        match &kind {
            ChannelKind::LaplaceTrunc { t } => {
                positive_finite(*t, "truncation T")?;
                positive_finite(alpha, "alpha")?;
            }
            ChannelKind::KernelLaplace { h, x0, .. } => {
                if !(*h > 0.0 && *h < 1.0) {
                    return Err(invalid(format!("bandwidth must lie in (0,1), got {h}")));
                }
                if !x0.is_finite() {
                    return Err(invalid("x0 must be finite"));
                }
                positive_finite(alpha, "alpha")?;
            }
            ChannelKind::MultiTrunc { grid, beta_n } => {
                if grid.is_empty() {
                    return Err(invalid("empty truncation grid"));
                }
                for t in grid {
                    positive_finite(*t, "truncation level")?;
                }
                positive_finite(alpha, "alpha")?;
                check_beta(alpha, grid, *beta_n)?;
            }
            ChannelKind::MultiBandwidth {
                grid, beta_n, x0, ..
            } => {
                if grid.is_empty() {
                    return Err(invalid("empty bandwidth grid"));
                }
                if grid.iter().any(|h| !(*h > 0.0 && *h <= 1.0)) {
                    return Err(invalid("bandwidths must lie in (0,1]"));
                }
                if !x0.is_finite() {
                    return Err(invalid("x0 must be finite"));
                }
                positive_finite(alpha, "alpha")?;
                check_beta(alpha, grid, *beta_n)?;
            }
            ChannelKind::RandomizedResponse {
                input_support,
                output_alphabet,
                transition_table,
            } => {
                for (name, s) in [("input support", input_support), ("output alphabet", output_alphabet)] {
                    if s.is_empty() || s.windows(2).any(|w| !(w[0] < w[1])) {
                        return Err(invalid(format!("{name} must be nonempty and strictly increasing")));
                    }
                }
                if transition_table.len() != input_support.len() {
                    return Err(invalid("transition table needs one row per input"));
                }
                for row in transition_table {
                    if row.len() != output_alphabet.len() {
                        return Err(invalid("transition row length differs from the alphabet"));
                    }
                    if row.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
                        return Err(invalid("transition probabilities must be nonnegative"));
                    }
                    let s: f64 = row.iter().sum();
                    if (s - 1.0).abs() > 1e-12 {
                        return Err(invalid(format!("transition row sums to {s}")));
                    }
                }
                let ratio = finite_max_ratio(transition_table).0;
                if ratio > alpha.exp() * (1.0 + 1e-9) {
                    return Err(invalid(format!(
                        "table has likelihood ratio {ratio}, above e^alpha = {}",
                        alpha.exp()
                    )));
                }
                if alpha == 0.0 && ratio > 1.0 {
                    return Err(invalid("alpha = 0 requires a constant channel"));
                }
            }
        }
        Ok(Self { alpha, kind })
    }

    pub fn laplace_trunc(t: f64, alpha: f64) -> Result<Self> {
        Self::new(alpha, ChannelKind::LaplaceTrunc { t })
    }

    pub fn kernel_laplace(h: f64, x0: f64, kernel: KernelFn, alpha: f64) -> Result<Self> {
        Self::new(alpha, ChannelKind::KernelLaplace { h, x0, kernel })
    }

    /// Multi-level truncation channel with `beta_n = alpha / card(grid)`.
    pub fn multi_trunc(grid: Vec<f64>, alpha: f64) -> Result<Self> {
        let beta_n = alpha / grid.len().max(1) as f64;
        Self::new(alpha, ChannelKind::MultiTrunc { grid, beta_n })
    }

    /// Multi-level kernel channel with `beta_n = alpha / card(grid)`.
    pub fn multi_bandwidth(grid: Vec<f64>, x0: f64, kernel: KernelFn, alpha: f64) -> Result<Self> {
        let beta_n = alpha / grid.len().max(1) as f64;
        Self::new(
            alpha,
            ChannelKind::MultiBandwidth {
                grid,
                beta_n,
                x0,
                kernel,
            },
        )
    }

    pub fn randomized_response(
        input_support: Vec<f64>,
        output_alphabet: Vec<f64>,
        transition_table: Vec<Vec<f64>>,
        alpha: f64,
    ) -> Result<Self> {
        Self::new(
            alpha,
            ChannelKind::RandomizedResponse {
                input_support,
                output_alphabet,
                transition_table,
            },
        )
    }

    /// Noiseless finite channel releasing its input; its level is infinite.
    pub fn identity(support: Vec<f64>) -> Result<Self> {
        let m = support.len();
        let table = (0..m)
            .map(|i| (0..m).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        Self::randomized_response(support.clone(), support, table, f64::INFINITY)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn kind(&self) -> &ChannelKind {
        &self.kind
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// `(inputs, outputs, table)` for finite channels.
    pub fn finite_table(&self) -> Option<(&[f64], &[f64], &[Vec<f64>])> {
        match &self.kind {
            ChannelKind::RandomizedResponse {
                input_support,
                output_alphabet,
                transition_table,
            } => Some((input_support, output_alphabet, transition_table)),
            _ => None,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.finite_table().is_some()
    }

    /// Number of released values per input.
    pub fn levels(&self) -> usize {
        match &self.kind {
            ChannelKind::MultiTrunc { grid, .. } | ChannelKind::MultiBandwidth { grid, .. } => {
                grid.len()
            }
            _ => 1,
        }
    }

    /// Deterministic part of the release at `level` (the Laplace location).
    #[inline]
    pub fn center(&self, level: usize, x: f64) -> f64 {
        match &self.kind {
            ChannelKind::LaplaceTrunc { t } => x.clamp(-t, *t),
            ChannelKind::KernelLaplace { h, x0, kernel } => kernel.eval((x - x0) / h) / h,
            ChannelKind::MultiTrunc { grid, .. } => x.clamp(-grid[level], grid[level]),
            ChannelKind::MultiBandwidth { grid, x0, kernel, .. } => {
                kernel.eval((x - x0) / grid[level]) / grid[level]
            }
            ChannelKind::RandomizedResponse { .. } => x,
        }
    }

    /// Laplace scale at `level`; zero for finite channels.
    #[inline]
    pub fn noise_scale(&self, level: usize) -> f64 {
        match &self.kind {
            ChannelKind::LaplaceTrunc { t } => 2.0 * t / self.alpha,
            ChannelKind::KernelLaplace { h, kernel, .. } => 2.0 * kernel.kappa() / (self.alpha * h),
            ChannelKind::MultiTrunc { grid, beta_n } => 2.0 * grid[level] / beta_n,
            ChannelKind::MultiBandwidth {
                grid,
                beta_n,
                kernel,
                ..
            } => 2.0 * kernel.kappa() / (grid[level] * beta_n),
            ChannelKind::RandomizedResponse { .. } => 0.0,
        }
    }

    /// Draws a release for input `x`.
    pub fn privatize<N: NoiseSource + ?Sized>(&self, x: f64, noise: &mut N) -> Result<Release> {
        if !x.is_finite() {
            return Err(invalid(format!("cannot privatize non-finite input {x}")));
        }
        match &self.kind {
            ChannelKind::RandomizedResponse {
                input_support,
                output_alphabet,
                transition_table,
            } => {
                let row = input_support
                    .iter()
                    .position(|&v| v == x)
                    .ok_or_else(|| invalid(format!("{x} is not in the channel's input support")))?;
                let u = noise.unit_uniform();
                let mut acc = 0.0;
                let probs = &transition_table[row];
                let mut pick = probs.iter().rposition(|&p| p > 0.0).unwrap_or(0);
                for (z, &p) in probs.iter().enumerate() {
                    acc += p;
                    if u < acc && p > 0.0 {
                        pick = z;
                        break;
                    }
                }
                Ok(Release::Scalar(output_alphabet[pick]))
            }
            ChannelKind::MultiTrunc { .. } | ChannelKind::MultiBandwidth { .. } => Ok(Release::Levels(
                (0..self.levels())
                    .map(|l| self.center(l, x) + self.noise_scale(l) * noise.standard_laplace())
                    .collect(),
            )),
            _ => Ok(Release::Scalar(
                self.center(0, x) + self.noise_scale(0) * noise.standard_laplace(),
            )),
        }
    }

    /// Conditional density (or mass) of release `z` given input `x`.
    pub fn density(&self, x: f64, z: &[f64]) -> Result<f64> {
        if z.len() != self.levels() {
            return Err(invalid(format!(
                "release has {} coordinates, channel emits {}",
                z.len(),
                self.levels()
            )));
        }
        if let Some((inputs, outputs, table)) = self.finite_table() {
            let i = inputs.iter().position(|&v| v == x);
            let o = outputs.iter().position(|&v| v == z[0]);
            return Ok(match (i, o) {
                (Some(i), Some(o)) => table[i][o],
                _ => 0.0,
            });
        }
        Ok(z
            .iter()
            .enumerate()
            .map(|(l, &zl)| laplace_pdf(zl - self.center(l, x), self.noise_scale(l)))
            .product())
    }
}

/// Density of `L(b)` at `x`.
pub fn laplace_pdf(x: f64, b: f64) -> f64 {
    (-x.abs() / b).exp() / (2.0 * b)
}

/// Randomized response on `support`: keeps the symbol with probability
/// `e^alpha / (e^alpha + m - 1)`.
pub fn make_rr_channel(input_support: Vec<f64>, alpha: f64) -> Result<ChannelSpec> {
    let m = input_support.len();
    if m < 2 {
        return Err(invalid("randomized response needs at least two symbols"));
    }
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(invalid("randomized response needs a finite alpha >= 0"));
    }
    let e = alpha.exp();
    let denom = e + (m - 1) as f64;
    let table = (0..m)
        .map(|i| {
            (0..m)
                .map(|j| if i == j { e / denom } else { 1.0 / denom })
                .collect()
        })
        .collect();
    ChannelSpec::randomized_response(input_support.clone(), input_support, table, alpha)
}

/// Largest `table[x][z] / table[x'][z]` over all rows and columns.
fn finite_max_ratio(table: &[Vec<f64>]) -> (f64, usize, usize, usize) {
    let mut best = (1.0, 0, 0, 0);
    for (i, row) in table.iter().enumerate() {
        for (k, other) in table.iter().enumerate() {
            for (z, (&a, &b)) in row.iter().zip(other).enumerate() {
                let r = if b == 0.0 {
                    if a == 0.0 {
                        continue;
                    }
                    f64::INFINITY
                } else {
                    a / b
                };
                if r > best.0 {
                    best = (r, i, k, z);
                }
            }
        }
    }
    best
}

/// Default audit grids: 61 inputs and 121 outputs, with extremal points added.
pub fn default_audit_grids(ch: &ChannelSpec) -> (Vec<f64>, Vec<f64>) {
    let lin = |lo: f64, hi: f64, k: usize| -> Vec<f64> {
        (0..k)
            .map(|i| lo + (hi - lo) * i as f64 / (k - 1) as f64)
            .collect()
    };
    let finish = |mut v: Vec<f64>| {
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    };
    match ch.kind() {
        ChannelKind::LaplaceTrunc { t } => {
            let b = ch.noise_scale(0);
            let mut xs = lin(-t - 1.0, t + 1.0, 61);
            xs.extend([-t, *t]);
            let mut zs = lin(-(t + 8.0 * b), t + 8.0 * b, 121);
            zs.extend([-t, *t]);
            (finish(xs), finish(zs))
        }
        ChannelKind::MultiTrunc { grid, .. } => {
            let t0 = grid.iter().cloned().fold(0.0, f64::max);
            let b0 = (0..grid.len()).map(|l| ch.noise_scale(l)).fold(0.0, f64::max);
            let mut xs = lin(-t0 - 1.0, t0 + 1.0, 61);
            let mut zs = lin(-(t0 + 8.0 * b0), t0 + 8.0 * b0, 121);
            for t in grid {
                xs.extend([-t, *t]);
                zs.extend([-t, *t]);
            }
            (finish(xs), finish(zs))
        }
        ChannelKind::KernelLaplace { h, x0, kernel } => {
            let b = ch.noise_scale(0);
            let top = kernel.kappa() / h;
            let mut xs = lin(x0 - h - 1.0, x0 + h + 1.0, 61);
            xs.extend(critical_points(kernel.coeffs()).iter().map(|u| x0 + h * u));
            xs.push(*x0);
            let zs = lin(-(top + 8.0 * b), top + 8.0 * b, 121);
            (finish(xs), finish(zs))
        }
        ChannelKind::MultiBandwidth { grid, x0, kernel, .. } => {
            let hmin = grid.iter().cloned().fold(f64::INFINITY, f64::min);
            let top = kernel.kappa() / hmin;
            let bmax = (0..grid.len()).map(|l| ch.noise_scale(l)).fold(0.0, f64::max);
            let mut xs = lin(x0 - 2.0, x0 + 2.0, 61);
            for h in grid {
                xs.extend(critical_points(kernel.coeffs()).iter().map(|u| x0 + h * u));
            }
            xs.push(*x0);
            let zs = lin(-(top + 8.0 * bmax), top + 8.0 * bmax, 121);
            (finish(xs), finish(zs))
        }
        ChannelKind::RandomizedResponse {
            input_support,
            output_alphabet,
            ..
        } => (input_support.clone(), output_alphabet.clone()),
    }
}

/// Grid supremum of `q(z|x) / q(z|x')`.
///
/// For multi-level channels the release is a vector whose coordinates are
/// conditionally independent, so the supremum over the product grid is the
/// product of per-level suprema; each level is scanned over `z_grid`.
/// Finite channels ignore grid points outside their alphabets.
pub fn privacy_audit(ch: &ChannelSpec, x_grid: &[f64], z_grid: &[f64]) -> AuditReport {
    if let Some((inputs, outputs, table)) = ch.finite_table() {
        let xi: Vec<usize> = x_grid
            .iter()
            .filter_map(|x| inputs.iter().position(|v| v == x))
            .collect();
        let zi: Vec<usize> = z_grid
            .iter()
            .filter_map(|z| outputs.iter().position(|v| v == z))
            .collect();
        let mut best = AuditReport {
            max_ratio: 1.0,
            x: inputs[0],
            x_prime: inputs[0],
            z: vec![outputs[0]],
        };
        for &i in &xi {
            for &k in &xi {
                for &z in &zi {
                    let (a, b) = (table[i][z], table[k][z]);
                    let r = match (a == 0.0, b == 0.0) {
                        (true, _) => continue,
                        (false, true) => f64::INFINITY,
                        _ => a / b,
                    };
                    if r > best.max_ratio {
                        best = AuditReport {
                            max_ratio: r,
                            x: inputs[i],
                            x_prime: inputs[k],
                            z: vec![outputs[z]],
                        };
                    }
                }
            }
        }
        return best;
    }

    let levels = ch.levels();
    let mut best_log = 0.0;
    let mut best = AuditReport {
        max_ratio: 1.0,
        x: x_grid.first().copied().unwrap_or(0.0),
        x_prime: x_grid.first().copied().unwrap_or(0.0),
        z: vec![z_grid.first().copied().unwrap_or(0.0); levels],
    };
    for &x in x_grid {
        for &xp in x_grid {
            let mut total = 0.0;
            let mut arg = Vec::with_capacity(levels);
            for l in 0..levels {
                let (c, cp, b) = (ch.center(l, x), ch.center(l, xp), ch.noise_scale(l));
                let mut lvl_best = f64::NEG_INFINITY;
                let mut lvl_arg = 0.0;
                for &z in z_grid {
                    let log_ratio = ((z - cp).abs() - (z - c).abs()) / b;
                    if log_ratio > lvl_best {
                        lvl_best = log_ratio;
                        lvl_arg = z;
                    }
                }
                total += lvl_best;
                arg.push(lvl_arg);
            }
            if total > best_log {
                best_log = total;
                best = AuditReport {
                    max_ratio: total.exp(),
                    x,
                    x_prime: xp,
                    z: arg,
                };
            }
        }
    }
    best
}
