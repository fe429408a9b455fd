//! Monte Carlo rate experiments, slope fits and verification suites.
//!
//! Replication `r` at the `i`-th sample size draws from stream
//! `i * 2^32 + r` of the master seed, results are collected in replication
//! order and summed sequentially. Output therefore depends only on the
//! configuration and seed, never on the thread count.

use std::io::Write;
use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::adaptive::{gl_select_bandwidth, gl_select_truncation, BandwidthGrid, GlConfig, TruncationGrid};
use crate::channels::{default_audit_grids, make_rr_channel, privacy_audit, ChannelSpec, KernelFn, PrivacyBudget};
use crate::contraction::{random_instance, random_table, verify_contraction, DEFAULT_F_ORDERS};
use crate::effective_privacy::leakage_report;
use crate::error::{Error, Result};
use crate::estimators::{
    optimal_bandwidth, optimal_truncations, private_covariance_correlation, private_joint_moment, private_kde,
    private_mean, HolderClass, MomentProfile, MultiLevelSample, PrivatizedSample, TruncationMode,
};
use crate::lowerbounds::{
    density_quadrature, density_two_point, moment_two_point, two_point_channels, verify_two_point, TwoPointInstance,
    DEFAULT_CK, DEFAULT_EPS0, DEFAULT_ETA,
};
use crate::measures::{DiscreteDist, SubsetIndex};
use crate::rng::{stream, NoiseSource, ZeroNoise};
use crate::simdata::DataModel;

/// Environment variable holding the default worker count.
pub const THREADS_ENV: &str = "CLDP_THREADS";

/// Worker count from [`THREADS_ENV`], else the machine's parallelism.
pub fn default_parallelism() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .filter(|v: &usize| *v > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |v| v.get()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateMode {
    Mean,
    Moment,
    Cov,
    Kde,
    AdaptiveMoment,
    AdaptiveDensity,
}

impl RateMode {
    pub fn is_adaptive(self) -> bool {
        matches!(self, RateMode::AdaptiveMoment | RateMode::AdaptiveDensity)
    }

    fn is_density(self) -> bool {
        matches!(self, RateMode::Kde | RateMode::AdaptiveDensity)
    }
}

/// How the privacy levels depend on `n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaRule {
    /// Use `alphas` for every `n`.
    Fixed,
    /// Common level `alpha_factor * n^{1/(2(2 beta + d))}`, above the threshold
    /// where privacy stops driving the rate.
    AboveThreshold,
}

/// Quantity on the horizontal axis of a rate curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EffAxis {
    /// `n prod alpha_j^2`.
    NProdAlphaSq,
    /// `n`.
    N,
    /// `n prod alpha_j^2 / (ln n)^{2d+1}`.
    LogCorrected,
}

impl EffAxis {
    pub fn value(self, n: usize, alphas: &[f64]) -> f64 {
        let nf = n as f64;
        let pa: f64 = alphas.iter().map(|a| a * a).product();
        match self {
            EffAxis::N => nf,
            EffAxis::NProdAlphaSq => nf * pa,
            EffAxis::LogCorrected => nf * pa / nf.ln().powi(2 * alphas.len() as i32 + 1),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub mode: RateMode,
    pub ns: Vec<usize>,
    pub alphas: Vec<f64>,
    pub alpha_rule: AlphaRule,
    pub alpha_factor: f64,
    pub replications: usize,
    pub model: DataModel,
    /// Moment orders; defaults to the model's when it has them.
    pub ks: Option<Vec<f64>>,
    /// Smoothness; defaults to the model's when it has one.
    pub beta: Option<f64>,
    pub x0: f64,
    pub c0: f64,
    pub seed: u64,
    pub parallelism: usize,
    pub slope_tol: Option<f64>,
    /// Replace every Laplace draw by zero (testing aid).
    pub noiseless: bool,
}

impl ExperimentConfig {
    pub fn new(mode: RateMode, model: DataModel, alphas: Vec<f64>, ns: Vec<usize>) -> Self {
        Self {
            mode,
            ns,
            alphas,
            alpha_rule: AlphaRule::Fixed,
            alpha_factor: 2.0,
            replications: 200,
            model,
            ks: None,
            beta: None,
            x0: 0.0,
            c0: crate::adaptive::DEFAULT_C0,
            seed: 1,
            parallelism: default_parallelism(),
            slope_tol: None,
            noiseless: false,
        }
    }

    fn profile(&self) -> Result<MomentProfile> {
        let ks = match (&self.ks, &self.model) {
            (Some(ks), _) => ks.clone(),
            (None, DataModel::ParetoFactor(m)) => m.ks.clone(),
            _ => return Err(Error::Config("moment modes need `ks` or a pareto_factor model".into())),
        };
        if self.mode == RateMode::Mean {
            return MomentProfile::marginal(ks);
        }
        MomentProfile::new(ks)
    }

    fn holder(&self) -> Result<HolderClass> {
        let beta = match (self.beta, &self.model) {
            (Some(b), _) => b,
            (None, DataModel::HolderDensity(m)) => m.beta,
            _ => return Err(Error::Config("density modes need `beta` or a holder_density model".into())),
        };
        HolderClass::new(beta, 1.0, self.model.dim())
    }

    /// Privacy levels used at sample size `n`.
    pub fn alphas_at(&self, n: usize) -> Result<Vec<f64>> {
        match self.alpha_rule {
            AlphaRule::Fixed => Ok(self.alphas.clone()),
            AlphaRule::AboveThreshold => {
                let hc = self.holder()?;
                let a = self.alpha_factor * crate::estimators::nonprivate_threshold(&hc, n);
                Ok(vec![a; self.model.dim()])
            }
        }
    }

    pub fn axis(&self) -> EffAxis {
        match (self.mode, self.alpha_rule) {
            (m, _) if m.is_adaptive() => EffAxis::LogCorrected,
            (RateMode::Kde, AlphaRule::AboveThreshold) => EffAxis::N,
            _ => EffAxis::NProdAlphaSq,
        }
    }

    /// Exponent the MSE should decay with along [`Self::axis`].
    pub fn target_slope(&self) -> Result<Option<f64>> {
        Ok(Some(match self.mode {
            RateMode::Mean => {
                let p = self.profile()?;
                let kmin = p.ks().iter().copied().fold(f64::INFINITY, f64::min);
                -(1.0 - 1.0 / kmin)
            }
            RateMode::Moment | RateMode::Cov | RateMode::AdaptiveMoment => -self.profile()?.joint_exponent(),
            RateMode::Kde | RateMode::AdaptiveDensity => {
                let hc = self.holder()?;
                let d = hc.d as f64;
                if self.mode == RateMode::Kde && self.alpha_rule == AlphaRule::AboveThreshold {
                    -2.0 * hc.beta / (2.0 * hc.beta + d)
                } else {
                    -hc.beta / (hc.beta + d)
                }
            }
        }))
    }

    pub fn slope_tolerance(&self) -> f64 {
        self.slope_tol
            .unwrap_or(if self.mode.is_adaptive() { 0.2 } else { 0.15 })
    }

    fn validate(&self) -> Result<()> {
        if self.ns.is_empty() || self.replications == 0 || self.parallelism == 0 {
            return Err(Error::Config("need at least one n, one replication and one worker".into()));
        }
        if self.ns.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("n grid must be strictly increasing".into()));
        }
        if self.alpha_rule == AlphaRule::Fixed && self.alphas.len() != self.model.dim() {
            return Err(Error::Config(format!(
                "{} privacy levels for a {}-dimensional model",
                self.alphas.len(),
                self.model.dim()
            )));
        }
        if self.mode == RateMode::Cov && self.model.dim() != 2 {
            return Err(Error::Config("covariance mode needs d = 2".into()));
        }
        if self.mode.is_density() {
            self.holder()?;
        } else {
            self.profile()?;
        }
        GlConfig::new(self.c0).map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    /// Reasons a slope fit on this design would not be meaningful.
    pub fn slope_design_issues(&self) -> Vec<String> {
        let mut issues = Vec::new();
        if self.replications < 30 {
            issues.push(format!("R = {} is below 30", self.replications));
        }
        if self.ns.len() < 4 {
            issues.push(format!("{} sample sizes; at least 4 are needed", self.ns.len()));
        }
        // Adaptive curves are checked on n prod alpha^2; the log correction
        // compresses the range without changing the design.
        let axis = if self.mode.is_adaptive() { EffAxis::NProdAlphaSq } else { self.axis() };
        let vals: Vec<f64> = self
            .ns
            .iter()
            .filter_map(|&n| self.alphas_at(n).ok().map(|a| axis.value(n, &a)))
            .collect();
        if let (Some(lo), Some(hi)) = (vals.first(), vals.last()) {
            if hi / lo < 100.0 {
                issues.push(format!("effective sample sizes span {:.2} decades", (hi / lo).log10()));
            }
        }
        issues
    }
}

/// Ground truth for the configured estimand.
pub fn model_truth(cfg: &ExperimentConfig) -> Result<f64> {
    let bad = || Error::Config(format!("{:?} mode is not available for this model", cfg.mode));
    match (&cfg.model, cfg.mode) {
        (DataModel::ParetoFactor(_), RateMode::Mean) => Ok(0.0),
        (DataModel::ParetoFactor(m), RateMode::Moment | RateMode::AdaptiveMoment) => m.gamma(),
        (DataModel::ParetoFactor(m), RateMode::Cov) => m.covariance(),
        (DataModel::HolderDensity(m), RateMode::Kde | RateMode::AdaptiveDensity) => {
            Ok(m.density(&vec![cfg.x0; m.d]))
        }
        (DataModel::DiscreteTable { dist }, mode) => discrete_truth(dist, mode).ok_or_else(bad),
        _ => Err(bad()),
    }
}

fn discrete_truth(dist: &DiscreteDist, mode: RateMode) -> Option<f64> {
    let d = dist.dim();
    let mut means = vec![0.0; d];
    let mut joint = 0.0;
    for (flat, p) in dist.probs().iter().enumerate() {
        let x: Vec<f64> = dist.unflatten(flat).iter().enumerate().map(|(j, &i)| dist.supports()[j][i]).collect();
        for j in 0..d {
            means[j] += p * x[j];
        }
        joint += p * x.iter().product::<f64>();
    }
    match mode {
        // Mean mode scores the sum of squared errors over axes against these.
        RateMode::Mean => Some(0.0).filter(|_| means.iter().all(|m| *m == 0.0)),
        RateMode::Moment | RateMode::AdaptiveMoment => Some(joint),
        RateMode::Cov if d == 2 => Some(joint - means[0] * means[1]),
        _ => None,
    }
}

fn mean_truths(cfg: &ExperimentConfig) -> Vec<f64> {
    match &cfg.model {
        DataModel::DiscreteTable { dist } => {
            let d = dist.dim();
            let mut means = vec![0.0; d];
            for (flat, p) in dist.probs().iter().enumerate() {
                for (j, i) in dist.unflatten(flat).into_iter().enumerate() {
                    means[j] += p * dist.supports()[j][i];
                }
            }
            means
        }
        m => vec![0.0; m.dim()],
    }
}

/// One row of a rate curve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateRow {
    pub n: usize,
    pub n_eff: f64,
    pub mse: f64,
    pub stderr: f64,
    pub replications: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    /// Half-width of the 95% confidence interval for the slope.
    pub band: f64,
}

/// Per-`n` paired oracle MSE for adaptive experiments.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleRow {
    pub n: usize,
    pub oracle_mse: f64,
    pub ratio: f64,
    /// `ratio / (ln n)^{2d+1}`.
    pub scaled_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateCurve {
    pub mode: RateMode,
    pub axis: EffAxis,
    pub rows: Vec<RateRow>,
    /// `(n, reason)` for excluded sample sizes.
    pub warnings: Vec<(usize, String)>,
    pub info: Vec<String>,
    pub target_slope: Option<f64>,
    pub slope_tol: f64,
    pub fit: Option<SlopeFit>,
    pub oracle: Vec<OracleRow>,
    /// Largest `scaled_ratio` over the sweep.
    pub ratio_constant: Option<f64>,
}

impl RateCurve {
    pub fn slope_ok(&self) -> Option<bool> {
        match (&self.fit, self.target_slope) {
            (Some(f), Some(t)) => Some((f.slope - t).abs() <= self.slope_tol),
            _ => None,
        }
    }
}

/// OLS fit of `ln mse` on `ln n_eff`.
pub fn fit_loglog_slope(points: &[(f64, f64)]) -> Result<SlopeFit> {
    if points.len() < 4 {
        return Err(Error::SampleTooSmall(format!("{} points; a slope fit needs 4", points.len())));
    }
    if points.iter().any(|(x, y)| !(*x > 0.0) || !(*y > 0.0)) {
        return Err(Error::InvalidParameter("log-log fit needs positive n_eff and mse".into()));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let m = xs.len() as f64;
    let xb = xs.iter().sum::<f64>() / m;
    let yb = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - xb).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidParameter("all n_eff values coincide".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xb) * (y - yb)).sum();
    let slope = sxy / sxx;
    let intercept = yb - slope * xb;
    let sse: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let se = (sse / (m - 2.0) / sxx).sqrt();
    let t = StudentsT::new(0.0, 1.0, m - 2.0)
        .map_err(|e| Error::InvalidParameter(e.to_string()))?
        .inverse_cdf(0.975);
    Ok(SlopeFit { slope, intercept, band: t * se })
}

fn privatize_single<N: NoiseSource + ?Sized>(
    raw: &[f64],
    channels: Vec<ChannelSpec>,
    rng: &mut N,
    noiseless: bool,
) -> Result<PrivatizedSample> {
    if noiseless {
        PrivatizedSample::privatize(raw, channels, &mut ZeroNoise)
    } else {
        PrivatizedSample::privatize(raw, channels, rng)
    }
}

fn privatize_multi<N: NoiseSource + ?Sized>(
    raw: &[f64],
    channels: Vec<ChannelSpec>,
    rng: &mut N,
    noiseless: bool,
) -> Result<MultiLevelSample> {
    if noiseless {
        MultiLevelSample::privatize(raw, channels, &mut ZeroNoise)
    } else {
        MultiLevelSample::privatize(raw, channels, rng)
    }
}

/// Everything one replication needs that depends only on `n`.
struct Plan {
    n: usize,
    alphas: Vec<f64>,
    fixed: Option<Vec<ChannelSpec>>,
    multi: Option<Vec<ChannelSpec>>,
    oracle: Option<Vec<ChannelSpec>>,
}

fn build_plan(cfg: &ExperimentConfig, n: usize) -> Result<Plan> {
    let alphas = cfg.alphas_at(n)?;
    let budget = PrivacyBudget::new(alphas.clone())?;
    let mut plan = Plan {
        n,
        alphas: alphas.clone(),
        fixed: None,
        multi: None,
        oracle: None,
    };
    match cfg.mode {
        RateMode::Mean | RateMode::Moment | RateMode::Cov => {
            let mode = if cfg.mode == RateMode::Mean { TruncationMode::Mean } else { TruncationMode::Joint };
            let ts = optimal_truncations(&cfg.profile()?, &budget, n, mode)?;
            plan.fixed = Some(
                ts.iter()
                    .zip(&alphas)
                    .map(|(t, a)| ChannelSpec::laplace_trunc(*t, *a))
                    .collect::<Result<_>>()?,
            );
        }
        RateMode::Kde => {
            let hc = cfg.holder()?;
            let bw = optimal_bandwidth(&hc, &budget, n)?;
            let k = KernelFn::for_smoothness(hc.beta)?;
            plan.fixed = Some(
                alphas
                    .iter()
                    .map(|a| ChannelSpec::kernel_laplace(bw.h_star, cfg.x0, k.clone(), *a))
                    .collect::<Result<_>>()?,
            );
        }
        RateMode::AdaptiveMoment => {
            let grid = TruncationGrid::new(n)?.levels().to_vec();
            plan.multi = Some(
                alphas
                    .iter()
                    .map(|a| ChannelSpec::multi_trunc(grid.clone(), *a))
                    .collect::<Result<_>>()?,
            );
            if let Ok(ts) = optimal_truncations(&cfg.profile()?, &budget, n, TruncationMode::Joint) {
                plan.oracle = Some(
                    ts.iter()
                        .zip(&alphas)
                        .map(|(t, a)| ChannelSpec::laplace_trunc(*t, *a))
                        .collect::<Result<_>>()?,
                );
            }
        }
        RateMode::AdaptiveDensity => {
            let hc = cfg.holder()?;
            let k = KernelFn::for_smoothness(hc.beta)?;
            let grid = BandwidthGrid::new(n)?.levels().to_vec();
            plan.multi = Some(
                alphas
                    .iter()
                    .map(|a| ChannelSpec::multi_bandwidth(grid.clone(), cfg.x0, k.clone(), *a))
                    .collect::<Result<_>>()?,
            );
            if let Ok(bw) = optimal_bandwidth(&hc, &budget, n) {
                plan.oracle = Some(
                    alphas
                        .iter()
                        .map(|a| ChannelSpec::kernel_laplace(bw.h_star, cfg.x0, k.clone(), *a))
                        .collect::<Result<_>>()?,
                );
            }
        }
    }
    Ok(plan)
}

/// Squared error of the estimator and, for adaptive modes, of the paired oracle.
fn replicate(cfg: &ExperimentConfig, plan: &Plan, truth: f64, means: &[f64], stream_index: u64) -> Result<(f64, Option<f64>)> {
    let mut rng = stream(cfg.seed, stream_index);
    let raw = cfg.model.sample(plan.n, &mut rng);
    let gl = GlConfig::new(cfg.c0)?;
    let estimate = match cfg.mode {
        RateMode::Mean => {
            let z = privatize_single(&raw, plan.fixed.clone().unwrap_or_default(), &mut rng, cfg.noiseless)?;
            let mut se = 0.0;
            for (j, m) in means.iter().enumerate() {
                se += (private_mean(&z, j)? - m).powi(2);
            }
            return Ok((se, None));
        }
        RateMode::Moment => {
            let z = privatize_single(&raw, plan.fixed.clone().unwrap_or_default(), &mut rng, cfg.noiseless)?;
            private_joint_moment(&z)?
        }
        RateMode::Cov => {
            let z = privatize_single(&raw, plan.fixed.clone().unwrap_or_default(), &mut rng, cfg.noiseless)?;
            private_covariance_correlation(&z, None)?.theta
        }
        RateMode::Kde => {
            let z = privatize_single(&raw, plan.fixed.clone().unwrap_or_default(), &mut rng, cfg.noiseless)?;
            private_kde(&z)?
        }
        RateMode::AdaptiveMoment => {
            let zm = privatize_multi(&raw, plan.multi.clone().unwrap_or_default(), &mut rng, cfg.noiseless)?;
            gl_select_truncation(&zm, &gl)?.gamma_hat
        }
        RateMode::AdaptiveDensity => {
            let zm = privatize_multi(&raw, plan.multi.clone().unwrap_or_default(), &mut rng, cfg.noiseless)?;
            gl_select_bandwidth(&zm, &gl)?.pi_hat
        }
    };
    let oracle = match (&plan.oracle, cfg.mode) {
        (Some(ch), RateMode::AdaptiveMoment) => {
            let z = privatize_single(&raw, ch.clone(), &mut rng, cfg.noiseless)?;
            Some((private_joint_moment(&z)? - truth).powi(2))
        }
        (Some(ch), RateMode::AdaptiveDensity) => {
            let z = privatize_single(&raw, ch.clone(), &mut rng, cfg.noiseless)?;
            Some((private_kde(&z)? - truth).powi(2))
        }
        _ => None,
    };
    Ok(((estimate - truth).powi(2), oracle))
}

fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let r = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / r;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (r - 1.0);
    (mean, (var / r).sqrt())
}

/// Runs the sweep described by `cfg`.
pub fn run_rate_experiment(cfg: &ExperimentConfig) -> Result<RateCurve> {
    cfg.validate()?;
    let truth = model_truth(cfg)?;
    let means = mean_truths(cfg);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.parallelism)
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    let axis = cfg.axis();
    let d = cfg.model.dim();
    let mut curve = RateCurve {
        mode: cfg.mode,
        axis,
        rows: Vec::new(),
        warnings: Vec::new(),
        info: Vec::new(),
        target_slope: cfg.target_slope()?,
        slope_tol: cfg.slope_tolerance(),
        fit: None,
        oracle: Vec::new(),
        ratio_constant: None,
    };
    for (i, &n) in cfg.ns.iter().enumerate() {
        let plan = match build_plan(cfg, n) {
            Ok(p) => p,
            Err(e @ (Error::RegimeViolated(_) | Error::SampleTooSmall(_))) => {
                curve.warnings.push((n, e.to_string()));
                continue;
            }
            Err(e) => return Err(e),
        };
        let results: Vec<(f64, Option<f64>)> = pool.install(|| {
            (0..cfg.replications)
                .into_par_iter()
                .map(|r| replicate(cfg, &plan, truth, &means, ((i as u64) << 32) + r as u64))
                .collect::<Result<Vec<_>>>()
        })?;
        let errs: Vec<f64> = results.iter().map(|r| r.0).collect();
        let (mse, stderr) = mean_and_stderr(&errs);
        let n_eff = axis.value(n, &plan.alphas);
        if cfg.mode.is_adaptive() && n_eff < 1.0 {
            curve.info.push(format!("n = {n}: log-corrected effective size {n_eff:.4} is below 1"));
        }
        curve.rows.push(RateRow {
            n,
            n_eff,
            mse,
            stderr,
            replications: cfg.replications,
            seed: cfg.seed,
        });
        let oracle: Vec<f64> = results.iter().filter_map(|r| r.1).collect();
        if oracle.len() == errs.len() && cfg.mode.is_adaptive() {
            let (omse, _) = mean_and_stderr(&oracle);
            let ratio = mse / omse;
            curve.oracle.push(OracleRow {
                n,
                oracle_mse: omse,
                ratio,
                scaled_ratio: ratio / (n as f64).ln().powi(2 * d as i32 + 1),
            });
        } else if cfg.mode.is_adaptive() {
            curve.info.push(format!("n = {n}: no oracle tuning exists in this regime"));
        }
    }
    curve.ratio_constant = curve.oracle.iter().map(|o| o.scaled_ratio).reduce(f64::max);
    let issues = cfg.slope_design_issues();
    if !issues.is_empty() {
        curve.info.push(format!("slope design: {}", issues.join("; ")));
    }
    let pts: Vec<(f64, f64)> = curve.rows.iter().map(|r| (r.n_eff, r.mse)).collect();
    match fit_loglog_slope(&pts) {
        Ok(f) => curve.fit = Some(f),
        Err(e) => curve.info.push(format!("no slope fit: {e}")),
    }
    Ok(curve)
}

/// CSV with header `n,n_eff,mse,stderr,replications,seed`; excluded sample
/// sizes appear as `#` rows in sweep order.
pub fn write_rate_csv<W: Write>(out: &mut W, curve: &RateCurve) -> Result<()> {
    writeln!(out, "n,n_eff,mse,stderr,replications,seed")?;
    let mut rows = curve.rows.iter().peekable();
    let mut warns = curve.warnings.iter().peekable();
    loop {
        let take_warn = match (rows.peek(), warns.peek()) {
            (Some(r), Some(w)) => w.0 < r.n,
            (None, Some(_)) => true,
            (Some(_), None) => false,
            (None, None) => break,
        };
        if take_warn {
            let (n, why) = warns.next().expect("peeked");
            writeln!(out, "# excluded n={n}: {}", why.replace('\n', " "))?;
        } else {
            let r = rows.next().expect("peeked");
            writeln!(out, "{},{},{},{},{},{}", r.n, r.n_eff, r.mse, r.stderr, r.replications, r.seed)?;
        }
    }
    Ok(())
}

/// Sidecar path holding the curve's metadata.
pub fn metadata_path(csv: &Path) -> PathBuf {
    let mut s = csv.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

/// Writes the CSV and its metadata sidecar.
pub fn save_curve(csv: &Path, curve: &RateCurve) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(csv)?);
    write_rate_csv(&mut f, curve)?;
    f.flush()?;
    std::fs::write(metadata_path(csv), serde_json::to_string_pretty(curve)?)?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Contraction,
    Privacy,
    Leakage,
    Lowerbound,
}

impl Suite {
    pub const ALL: [Suite; 4] = [Suite::Contraction, Suite::Privacy, Suite::Leakage, Suite::Lowerbound];
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub checked: usize,
    pub violations: usize,
    pub details: serde_json::Value,
}

/// Instance `index` of the leakage family: `d` in `{2, 3}`, supports of size
/// at most 3, RR channels with `alpha_max (d - 1) <= 1.25`.
pub fn random_leakage_instance<R: Rng + ?Sized>(rng: &mut R, index: usize) -> Result<(DiscreteDist, Vec<ChannelSpec>)> {
    let d = 2 + index % 2;
    let cap = 1.25 / (d - 1) as f64;
    let shape: Vec<usize> = (0..d).map(|_| rng.random_range(2..=3)).collect();
    let supports: Vec<Vec<f64>> = shape.iter().map(|&m| (0..m).map(|v| v as f64).collect()).collect();
    let mut probs = random_table(rng, &shape);
    // Keep every conditional law of the first component well defined.
    let total: f64 = probs.iter().sum();
    for p in probs.iter_mut() {
        *p = (*p / total).max(1e-6);
    }
    let dist = DiscreteDist::from_dense(supports.clone(), {
        let s: f64 = probs.iter().sum();
        probs.iter().map(|p| p / s).collect()
    })?;
    let channels = supports
        .into_iter()
        .map(|s| make_rr_channel(s, rng.random_range(0.1..=cap)))
        .collect::<Result<Vec<_>>>()?;
    Ok((dist, channels))
}

/// Runs one verification suite; `violations > 0` means a failed check.
pub fn run_verification_suite(which: Suite, seed: u64) -> Result<SuiteReport> {
    match which {
        Suite::Contraction => {
            let mut rng = stream(seed, 0);
            let mut violations = 0;
            let mut worst: f64 = 0.0;
            let total = 500;
            for i in 0..total {
                let inst = random_instance(&mut rng, &[2, 3], 3, (0.1, 1.5), i as u64)?;
                let rep = verify_contraction(&inst.p, &inst.pt, &inst.channels, &DEFAULT_F_ORDERS)?;
                if rep.any_violation() {
                    violations += 1;
                }
                if rep.rhs > 0.0 {
                    worst = worst.max(rep.lhs_jeffreys / rep.rhs);
                }
            }
            Ok(SuiteReport {
                suite: which,
                checked: total,
                violations,
                details: serde_json::json!({ "worst_kl_ratio": worst }),
            })
        }
        Suite::Privacy => {
            let mut rng = stream(seed, 1);
            let mut rows = Vec::new();
            let mut violations = 0;
            let mut check = |ch: ChannelSpec, exact: bool| -> Result<()> {
                let (xg, zg) = default_audit_grids(&ch);
                let a = privacy_audit(&ch, &xg, &zg);
                let target = ch.alpha().exp();
                let bad = a.max_ratio > target * (1.0 + 1e-9) || (exact && a.max_ratio < target * (1.0 - 1e-6));
                violations += usize::from(bad);
                rows.push(serde_json::json!({ "channel": ch, "audited": a.max_ratio, "target": target }));
                Ok(())
            };
            for _ in 0..20 {
                let t = rng.random_range(0.1..10.0);
                let a = rng.random_range(0.05..3.0);
                check(ChannelSpec::laplace_trunc(t, a)?, true)?;
            }
            let k = KernelFn::legendre(2)?;
            check(ChannelSpec::kernel_laplace(0.3, 0.0, k.clone(), 0.7)?, false)?;
            check(ChannelSpec::multi_trunc(vec![4.0, 2.0, 1.0], 0.9)?, false)?;
            check(ChannelSpec::multi_bandwidth(vec![0.25, 0.5, 1.0], 0.0, k, 0.9)?, false)?;
            check(make_rr_channel(vec![0.0, 1.0, 2.0], 0.8)?, true)?;
            Ok(SuiteReport {
                suite: which,
                checked: rows.len(),
                violations,
                details: serde_json::Value::Array(rows),
            })
        }
        Suite::Leakage => {
            let mut rng = stream(seed, 2);
            let total = 200;
            let mut violations = 0;
            let mut worst: f64 = 0.0;
            for i in 0..total {
                let (p, ch) = random_leakage_instance(&mut rng, i)?;
                let rep = leakage_report(&p, &ch)?;
                violations += usize::from(rep.violation);
                worst = worst.max(rep.audited_sup.ln() - rep.effective_alpha);
            }
            let (p, ch) = independent_leakage_instance(&mut rng)?;
            let rep = leakage_report(&p, &ch)?;
            let indep_bad = rep.audited_sup > ch[0].alpha().exp() * (1.0 + 1e-9);
            violations += usize::from(indep_bad);
            Ok(SuiteReport {
                suite: which,
                checked: total + 1,
                violations,
                details: serde_json::json!({
                    "worst_log_excess": worst,
                    "independent_audited": rep.audited_sup,
                    "independent_target": ch[0].alpha().exp(),
                }),
            })
        }
        Suite::Lowerbound => {
            let prof = MomentProfile::new(vec![4.0, 4.0])?;
            let budget = PrivacyBudget::new(vec![0.5, 0.5])?;
            let n = boundary_sample_size(&budget);
            let inst = moment_two_point(&prof, &budget, n)?;
            let ch = two_point_channels(&inst)?;
            let marg_gap = strict_marginal_gap(&inst.p, &inst.p_star)?;
            let rep = verify_two_point(&TwoPointInstance::Moment(inst), &ch, n)?;
            let hc = HolderClass::new(2.0, 1.0, 1)?;
            let dens = density_two_point(&hc, &PrivacyBudget::new(vec![0.5])?, 1_000_000, DEFAULT_EPS0, DEFAULT_CK, DEFAULT_ETA)?;
            let q = density_quadrature(&dens, 60.0, 2000)?;
            let dens_ok = q.bump_axis_integral.abs() < 1e-8 && q.min_pi_star >= 0.0 && (q.mass_pi_star - 1.0).abs() < 1e-6;
            let violations = usize::from(!rep.condition3_ok) + usize::from(marg_gap > 1e-14) + usize::from(!dens_ok);
            Ok(SuiteReport {
                suite: which,
                checked: 3,
                violations,
                details: serde_json::json!({
                    "n": n,
                    "moment": rep,
                    "strict_marginal_gap": marg_gap,
                    "density": q,
                }),
            })
        }
    }
}

/// Smallest `n` with `n prod (e^alpha - 1)^2 >= 1`.
pub fn boundary_sample_size(budget: &PrivacyBudget) -> usize {
    let s: f64 = budget.expm1().iter().map(|e| e * e).product();
    (1.0 / s).ceil() as usize
}

/// Largest cell difference over every strict, nonempty subset marginal.
pub fn strict_marginal_gap(p: &DiscreteDist, q: &DiscreteDist) -> Result<f64> {
    let d = p.dim();
    let mut gap: f64 = 0.0;
    for mask in 1..(1usize << d) - 1 {
        let s = SubsetIndex::from_mask(mask);
        let a = crate::measures::marginal(p, &s)?;
        let b = crate::measures::marginal(q, &s)?;
        for (x, y) in a.probs().iter().zip(b.probs()) {
            gap = gap.max((x - y).abs());
        }
    }
    Ok(gap)
}

/// Product law with RR channels; the leakage must not exceed `e^{alpha_1}`.
pub fn independent_leakage_instance<R: Rng + ?Sized>(rng: &mut R) -> Result<(DiscreteDist, Vec<ChannelSpec>)> {
    let margs: Vec<(Vec<f64>, Vec<f64>)> = (0..3)
        .map(|_| {
            let w = random_table(rng, &[3]);
            let s: f64 = w.iter().sum();
            (vec![0.0, 1.0, 2.0], w.iter().map(|v| v / s).collect())
        })
        .collect();
    let dist = DiscreteDist::product(&margs)?;
    let channels = (0..3)
        .map(|_| make_rr_channel(vec![0.0, 1.0, 2.0], rng.random_range(0.1..=1.5)))
        .collect::<Result<Vec<_>>>()?;
    Ok((dist, channels))
}
