use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use cldp::adaptive::{gl_select_bandwidth, gl_select_truncation, BandwidthGrid, GlConfig, TruncationGrid};
use cldp::channels::{default_audit_grids, privacy_audit, ChannelSpec, KernelFn, PrivacyBudget};
use cldp::config::{experiment_from_config, profile_from_config, Config};
use cldp::contraction::{verify_contraction, DEFAULT_F_ORDERS};
use cldp::effective_privacy::leakage_report;
use cldp::estimators::{
    optimal_bandwidth, optimal_truncations, private_covariance_correlation, private_joint_moment, private_kde,
    private_mean, HolderClass, MomentProfile, MultiLevelSample, PrivatizedSample, TruncationMode,
};
use cldp::harness::{run_rate_experiment, run_verification_suite, save_curve, Suite};
use cldp::lowerbounds::{
    density_quadrature, density_two_point, moment_two_point, two_point_channels, verify_two_point, TwoPointInstance,
    DEFAULT_CK, DEFAULT_EPS0, DEFAULT_ETA,
};
use cldp::rng::stream;
use cldp::{Error, Result};

/// Componentwise local differential privacy toolkit.
#[derive(Parser)]
#[command(name = "cldp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Io {
    /// Flat key = value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum AdaptiveMode {
    Moment,
    Density,
}

#[derive(Clone, Copy, ValueEnum)]
enum LowerKind {
    Moment,
    Density,
}

#[derive(Subcommand)]
enum Command {
    /// Audit the privacy level of channels (`channel` = JSON file).
    Audit(Io),
    /// Check the contraction bounds on given or random instances.
    ContractVerify(Io),
    /// Marginal leakage of dependent components.
    Leakage(Io),
    /// Privatize a CSV sample and estimate with rate-optimal tuning.
    Estimate(Io),
    /// Data-driven truncation or bandwidth selection.
    Adaptive {
        #[arg(long, value_enum)]
        mode: AdaptiveMode,
        #[command(flatten)]
        io: Io,
    },
    /// Monte Carlo rate curve written as CSV plus a metadata sidecar.
    Rates(Io),
    /// Two-point lower-bound instance and its checks.
    Lowerbound {
        #[arg(long, value_enum)]
        kind: LowerKind,
        #[command(flatten)]
        io: Io,
    },
    /// Every verification suite.
    Report(Io),
}

enum Outcome {
    Ok,
    Violation,
}

fn load(io: &Io) -> Result<Config> {
    match &io.config {
        Some(p) => Config::load(p),
        None => Ok(Config::default()),
    }
}

fn emit(io: &Io, value: &Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match &io.out {
        Some(p) => std::fs::write(p, text + "\n")?,
        None => println!("{text}"),
    }
    Ok(())
}

fn verdict(bad: bool) -> Outcome {
    if bad {
        Outcome::Violation
    } else {
        Outcome::Ok
    }
}

fn read_channels(cfg: &Config, key: &str) -> Result<Vec<ChannelSpec>> {
    let v: Value = cfg
        .json_file(key)?
        .ok_or_else(|| Error::Config(format!("missing key `{key}`")))?;
    let list = if v.is_array() { v } else { Value::Array(vec![v]) };
    serde_json::from_value(list).map_err(|e| Error::Config(format!("`{key}`: {e}")))
}

/// Rows of a CSV with a header line.
fn read_data(path: &Path) -> Result<(usize, Vec<f64>)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let d = lines
        .next()
        .ok_or_else(|| Error::Config("data file is empty".into()))?
        .split(',')
        .count();
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let row: Vec<f64> = line
            .split(',')
            .map(|c| c.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Config(format!("data row {}: not numeric", i + 1)))?;
        if row.len() != d {
            return Err(Error::Config(format!("data row {}: expected {d} columns", i + 1)));
        }
        out.extend(row);
    }
    Ok((d, out))
}

fn data_and_budget(cfg: &Config) -> Result<(usize, usize, Vec<f64>, PrivacyBudget)> {
    let path = cfg.path("data")?.ok_or_else(|| Error::Config("missing key `data`".into()))?;
    let (d, raw) = read_data(&path)?;
    let alphas: Vec<f64> = cfg.list("alphas")?.ok_or_else(|| Error::Config("missing key `alphas`".into()))?;
    if alphas.len() != d {
        return Err(Error::Config(format!("{} levels for {d} columns", alphas.len())));
    }
    Ok((d, raw.len() / d, raw, PrivacyBudget::new(alphas)?))
}

fn trunc_channels(ts: &[f64], alphas: &[f64]) -> Result<Vec<ChannelSpec>> {
    ts.iter().zip(alphas).map(|(t, a)| ChannelSpec::laplace_trunc(*t, *a)).collect()
}

fn cmd_audit(io: &Io) -> Result<Outcome> {
    let cfg = load(io)?;
    cfg.check_keys(&["channel"])?;
    let mut bad = false;
    let mut rows = Vec::new();
    for ch in read_channels(&cfg, "channel")? {
        let (xg, zg) = default_audit_grids(&ch);
        let rep = privacy_audit(&ch, &xg, &zg);
        let target = ch.alpha().exp();
        let ok = rep.max_ratio <= target * (1.0 + 1e-9);
        bad |= !ok;
        rows.push(json!({ "channel": ch, "audit": rep, "target": target, "ok": ok }));
    }
    emit(io, &Value::Array(rows))?;
    Ok(verdict(bad))
}

fn cmd_contract(io: &Io) -> Result<Outcome> {
    let cfg = load(io)?;
    cfg.check_keys(&["p", "q", "channels", "f_orders", "seed"])?;
    match (cfg.dist("p")?, cfg.dist("q")?) {
        (Some(p), Some(q)) => {
            let ch = read_channels(&cfg, "channels")?;
            let orders = cfg.list("f_orders")?.unwrap_or_else(|| DEFAULT_F_ORDERS.to_vec());
            let rep = verify_contraction(&p, &q, &ch, &orders)?;
            emit(io, &serde_json::to_value(&rep)?)?;
            Ok(verdict(rep.any_violation()))
        }
        (None, None) => suite(io, Suite::Contraction, cfg.get_or("seed", 7)?),
        _ => Err(Error::Config("give both `p` and `q`, or neither".into())),
    }
}

fn suite(io: &Io, which: Suite, seed: u64) -> Result<Outcome> {
    let rep = run_verification_suite(which, seed)?;
    emit(io, &serde_json::to_value(&rep)?)?;
    Ok(verdict(rep.violations > 0))
}

fn cmd_leakage(io: &Io) -> Result<Outcome> {
    let cfg = load(io)?;
    cfg.check_keys(&["dist", "channels", "seed"])?;
    match cfg.dist("dist")? {
        Some(p) => {
            let ch = read_channels(&cfg, "channels")?;
            let rep = leakage_report(&p, &ch)?;
            emit(io, &serde_json::to_value(&rep)?)?;
            Ok(verdict(rep.violation))
        }
        None => suite(io, Suite::Leakage, cfg.get_or("seed", 7)?),
    }
}

fn cmd_estimate(io: &Io) -> Result<Outcome> {
    let cfg = load(io)?;
    cfg.check_keys(&["mode", "data", "alphas", "ks", "beta", "x0", "seed"])?;
    let (d, n, raw, budget) = data_and_budget(&cfg)?;
    let mode: String = cfg.require("mode")?;
    let mut rng = stream(cfg.get_or("seed", 1)?, 0);
    let alphas = budget.alphas().to_vec();
    let out = match mode.as_str() {
        "mean" => {
            let ks: Vec<f64> = cfg.list("ks")?.ok_or_else(|| Error::Config("missing key `ks`".into()))?;
            let ts = optimal_truncations(&MomentProfile::marginal(ks)?, &budget, n, TruncationMode::Mean)?;
            let z = PrivatizedSample::privatize(&raw, trunc_channels(&ts, &alphas)?, &mut rng)?;
            let est: Vec<f64> = (0..d).map(|j| private_mean(&z, j)).collect::<Result<_>>()?;
            json!({ "mode": mode, "n": n, "truncations": ts, "estimate": est })
        }
        "moment" | "cov" => {
            let prof = profile_from_config(&cfg)?;
            let ts = optimal_truncations(&prof, &budget, n, TruncationMode::Joint)?;
            let z = PrivatizedSample::privatize(&raw, trunc_channels(&ts, &alphas)?, &mut rng)?;
            let est = if mode == "moment" {
                private_joint_moment(&z)?
            } else {
                private_covariance_correlation(&z, None)?.theta
            };
            json!({ "mode": mode, "n": n, "truncations": ts, "estimate": est })
        }
        "corr" => {
            // Each component spends half its level on X and half on X^2.
            let prof = profile_from_config(&cfg)?;
            let half = PrivacyBudget::new(alphas.iter().map(|a| a / 2.0).collect())?;
            let ts = optimal_truncations(&prof, &half, n, TruncationMode::Joint)?;
            let sq_prof = MomentProfile::marginal(prof.ks().iter().map(|k| k / 2.0).collect())?;
            let ts2 = optimal_truncations(&sq_prof, &half, n, TruncationMode::Mean)?;
            let z = PrivatizedSample::privatize(&raw, trunc_channels(&ts, half.alphas())?, &mut rng)?;
            let sq: Vec<f64> = raw.iter().map(|x| x * x).collect();
            let z2 = PrivatizedSample::privatize(&sq, trunc_channels(&ts2, half.alphas())?, &mut rng)?;
            let cc = private_covariance_correlation(&z, Some(&z2))?;
            json!({ "mode": mode, "n": n, "truncations": ts, "square_truncations": ts2, "estimate": cc })
        }
        "kde" => {
            let hc = HolderClass::new(cfg.get_or("beta", 2.0)?, 1.0, d)?;
            let bw = optimal_bandwidth(&hc, &budget, n)?;
            let k = KernelFn::for_smoothness(hc.beta)?;
            let x0 = cfg.get_or("x0", 0.0)?;
            let ch = alphas
                .iter()
                .map(|a| ChannelSpec::kernel_laplace(bw.h_star, x0, k.clone(), *a))
                .collect::<Result<Vec<_>>>()?;
            let z = PrivatizedSample::privatize(&raw, ch, &mut rng)?;
            json!({ "mode": mode, "n": n, "bandwidth": bw, "estimate": private_kde(&z)? })
        }
        other => return Err(Error::Config(format!("unknown estimate mode `{other}`"))),
    };
    emit(io, &out)?;
    Ok(Outcome::Ok)
}

fn cmd_adaptive(mode: AdaptiveMode, io: &Io) -> Result<Outcome> {
    let cfg = load(io)?;
    cfg.check_keys(&["data", "alphas", "c0", "seed", "x0", "beta"])?;
    let (_, n, raw, budget) = data_and_budget(&cfg)?;
    let gl = GlConfig::new(cfg.get_or("c0", cldp::adaptive::DEFAULT_C0)?)?;
    let mut rng = stream(cfg.get_or("seed", 1)?, 0);
    let out = match mode {
        AdaptiveMode::Moment => {
            let grid = TruncationGrid::new(n)?.levels().to_vec();
            let ch = budget
                .alphas()
                .iter()
                .map(|a| ChannelSpec::multi_trunc(grid.clone(), *a))
                .collect::<Result<Vec<_>>>()?;
            let zm = MultiLevelSample::privatize(&raw, ch, &mut rng)?;
            let sel = gl_select_truncation(&zm, &gl)?;
            json!({ "selected": sel.t_hat, "estimate": sel.gamma_hat, "bv_table": sel.bv_table })
        }
        AdaptiveMode::Density => {
            let k = KernelFn::for_smoothness(cfg.get_or("beta", 2.0)?)?;
            let x0 = cfg.get_or("x0", 0.0)?;
            let grid = BandwidthGrid::new(n)?.levels().to_vec();
            let ch = budget
                .alphas()
                .iter()
                .map(|a| ChannelSpec::multi_bandwidth(grid.clone(), x0, k.clone(), *a))
                .collect::<Result<Vec<_>>>()?;
            let zm = MultiLevelSample::privatize(&raw, ch, &mut rng)?;
            let sel = gl_select_bandwidth(&zm, &gl)?;
            json!({ "selected": sel.h_hat, "estimate": sel.pi_hat, "bv_table": sel.bv_table })
        }
    };
    emit(io, &out)?;
    Ok(Outcome::Ok)
}

fn cmd_rates(io: &Io) -> Result<Outcome> {
    let cfg = load(io)?;
    let exp = experiment_from_config(&cfg)?;
    let out = io.out.as_ref().ok_or_else(|| Error::Config("rates needs --out".into()))?;
    let curve = run_rate_experiment(&exp)?;
    save_curve(out, &curve)?;
    if let (Some(f), Some(t)) = (&curve.fit, curve.target_slope) {
        eprintln!("slope {:.4} ± {:.4} (target {t:.4} ± {})", f.slope, f.band, curve.slope_tol);
    }
    Ok(Outcome::Ok)
}

fn cmd_lowerbound(kind: LowerKind, io: &Io) -> Result<Outcome> {
    let cfg = load(io)?;
    cfg.check_keys(&["ks", "alphas", "n", "beta", "eps0", "c_k", "eta", "radius", "panels"])?;
    let budget = PrivacyBudget::new(cfg.list("alphas")?.ok_or_else(|| Error::Config("missing key `alphas`".into()))?)?;
    let n: usize = cfg.require("n")?;
    match kind {
        LowerKind::Moment => {
            let inst = moment_two_point(&profile_from_config(&cfg)?, &budget, n)?;
            let ch = two_point_channels(&inst)?;
            let rep = verify_two_point(&TwoPointInstance::Moment(inst.clone()), &ch, n)?;
            emit(io, &json!({ "instance": inst, "report": rep }))?;
            Ok(verdict(!rep.condition3_ok))
        }
        LowerKind::Density => {
            let hc = HolderClass::new(cfg.get_or("beta", 2.0)?, 1.0, budget.dim())?;
            let inst = density_two_point(
                &hc,
                &budget,
                n,
                cfg.get_or("eps0", DEFAULT_EPS0)?,
                cfg.get_or("c_k", DEFAULT_CK)?,
                cfg.get_or("eta", DEFAULT_ETA)?,
            )?;
            let q = density_quadrature(&inst, cfg.get_or("radius", 60.0)?, cfg.get_or("panels", 400)?)?;
            let bad = q.bump_axis_integral.abs() > 1e-8 || q.min_pi_star < 0.0;
            emit(io, &json!({ "instance": inst, "quadrature": q }))?;
            Ok(verdict(bad))
        }
    }
}

fn cmd_report(io: &Io) -> Result<Outcome> {
    let cfg = load(io)?;
    cfg.check_keys(&["seed"])?;
    let seed = cfg.get_or("seed", 7)?;
    let reports = Suite::ALL
        .iter()
        .map(|s| run_verification_suite(*s, seed))
        .collect::<Result<Vec<_>>>()?;
    let bad = reports.iter().any(|r| r.violations > 0);
    emit(io, &json!({ "seed": seed, "suites": reports }))?;
    Ok(verdict(bad))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Audit(io) => cmd_audit(io),
        Command::ContractVerify(io) => cmd_contract(io),
        Command::Leakage(io) => cmd_leakage(io),
        Command::Estimate(io) => cmd_estimate(io),
        Command::Adaptive { mode, io } => cmd_adaptive(*mode, io),
        Command::Rates(io) => cmd_rates(io),
        Command::Lowerbound { kind, io } => cmd_lowerbound(*kind, io),
        Command::Report(io) => cmd_report(io),
    };
    match result {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::Violation) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
