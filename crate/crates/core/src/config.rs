//! Flat `key = value` configuration files.
//!
//! Blank lines and lines starting with `#` are ignored. Lists are comma
//! separated; sample-size lists also accept `2^a..2^b` or `2^a..2^b:step`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::estimators::MomentProfile;
use crate::harness::{default_parallelism, AlphaRule, ExperimentConfig, RateMode};
use crate::measures::DiscreteDist;
use crate::simdata::{DataModel, HolderDensity, ParetoFactor};

#[derive(Debug, Clone, Default)]
pub struct Config {
    entries: BTreeMap<String, String>,
    base: PathBuf,
}

fn cfg_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| cfg_err(format!("line {}: expected key = value", no + 1)))?;
            let k = k.trim().to_string();
            if entries.insert(k.clone(), v.trim().to_string()).is_some() {
                return Err(cfg_err(format!("line {}: duplicate key `{k}`", no + 1)));
            }
        }
        Ok(Self {
            entries,
            base: PathBuf::new(),
        })
    }

    /// Reads a file; relative paths inside it resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| cfg_err(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        cfg.base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    /// Fails on keys outside `allowed`.
    pub fn check_keys(&self, allowed: &[&str]) -> Result<()> {
        match self.entries.keys().find(|k| !allowed.contains(&k.as_str())) {
            Some(k) => Err(cfg_err(format!("unknown key `{k}`"))),
            None => Ok(()),
        }
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.raw(key)
            .map(|v| v.parse::<T>().map_err(|_| cfg_err(format!("`{key}`: cannot parse `{v}`"))))
            .transpose()
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T> {
        self.get(key)?.ok_or_else(|| cfg_err(format!("missing key `{key}`")))
    }

    pub fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>> {
        self.raw(key)
            .map(|v| {
                v.split(',')
                    .map(|s| {
                        s.trim()
                            .parse::<T>()
                            .map_err(|_| cfg_err(format!("`{key}`: cannot parse `{}`", s.trim())))
                    })
                    .collect()
            })
            .transpose()
    }

    pub fn path(&self, key: &str) -> Result<Option<PathBuf>> {
        Ok(self.raw(key).map(|v| self.base.join(v)))
    }

    /// Sample sizes from an explicit list or a dyadic range.
    pub fn sizes(&self, key: &str) -> Result<Option<Vec<usize>>> {
        let Some(v) = self.raw(key) else { return Ok(None) };
        if let Some((lo, hi)) = v.split_once("..") {
            let exp = |s: &str| -> Result<u32> {
                s.trim()
                    .strip_prefix("2^")
                    .and_then(|e| e.parse().ok())
                    .ok_or_else(|| cfg_err(format!("`{key}`: expected 2^a..2^b, got `{v}`")))
            };
            let (hi, step) = match hi.split_once(':') {
                Some((h, s)) => (h, s.trim().parse::<u32>().map_err(|_| cfg_err(format!("`{key}`: bad step")))?),
                None => (hi, 1),
            };
            let (a, b) = (exp(lo)?, exp(hi)?);
            if a > b || step == 0 || b >= usize::BITS {
                return Err(cfg_err(format!("`{key}`: empty or invalid range `{v}`")));
            }
            return Ok(Some((a..=b).step_by(step as usize).map(|e| 1usize << e).collect()));
        }
        self.list(key)
    }

    fn read_json(&self, key: &str) -> Result<Option<String>> {
        match self.path(key)? {
            Some(p) => Ok(Some(
                std::fs::read_to_string(&p).map_err(|e| cfg_err(format!("{}: {e}", p.display())))?,
            )),
            None => Ok(None),
        }
    }

    pub fn dist(&self, key: &str) -> Result<Option<DiscreteDist>> {
        self.read_json(key)?
            .map(|t| DiscreteDist::from_json(&t).map_err(|e| cfg_err(format!("`{key}`: {e}"))))
            .transpose()
    }

    pub fn json_file<T: serde::de::DeserializeOwned>(&self, key: &str) -> Result<Option<T>> {
        self.read_json(key)?
            .map(|t| serde_json::from_str(&t).map_err(|e| cfg_err(format!("`{key}`: {e}"))))
            .transpose()
    }
}

/// Keys understood by [`model_from_config`].
pub const MODEL_KEYS: &[&str] = &["model", "ks", "tails", "rho", "d", "beta", "shift", "sd", "edge", "dist"];

/// Builds a data model from `model = pareto_factor | holder_density | discrete_table`.
pub fn model_from_config(cfg: &Config) -> Result<DataModel> {
    let kind: String = cfg.require("model")?;
    let wrap = |e: Error| cfg_err(e.to_string());
    match kind.as_str() {
        "pareto_factor" => {
            let ks: Vec<f64> = cfg.list("ks")?.ok_or_else(|| cfg_err("missing key `ks`"))?;
            let rho = cfg.get_or("rho", 0.5)?;
            let m = match cfg.list("tails")? {
                Some(t) => ParetoFactor::new(ks, t, rho),
                None => ParetoFactor::with_default_tails(ks, rho),
            };
            Ok(DataModel::ParetoFactor(m.map_err(wrap)?))
        }
        "holder_density" => {
            let m = HolderDensity::new(
                cfg.get_or("d", 1)?,
                cfg.get_or("beta", 2.0)?,
                cfg.get_or("shift", 0.5)?,
                cfg.get_or("sd", 0.5)?,
                cfg.get_or("edge", 4.0)?,
            )
            .map_err(wrap)?;
            Ok(DataModel::HolderDensity(m))
        }
        "discrete_table" => Ok(DataModel::DiscreteTable {
            dist: cfg.dist("dist")?.ok_or_else(|| cfg_err("missing key `dist`"))?,
        }),
        other => Err(cfg_err(format!("unknown model `{other}`"))),
    }
}

/// Keys understood by [`experiment_from_config`].
pub const RATE_KEYS: &[&str] = &[
    "mode",
    "ns",
    "alphas",
    "alpha_rule",
    "alpha_factor",
    "replications",
    "x0",
    "c0",
    "seed",
    "parallelism",
    "slope_tol",
    "noiseless",
];

fn parse_enum<T: serde::de::DeserializeOwned>(key: &str, v: &str) -> Result<T> {
    serde_json::from_value(serde_json::Value::String(v.to_string()))
        .map_err(|_| cfg_err(format!("`{key}`: unknown value `{v}`")))
}

/// Builds a rate experiment; `parallelism` falls back to the environment.
pub fn experiment_from_config(cfg: &Config) -> Result<ExperimentConfig> {
    let mut allowed: Vec<&str> = RATE_KEYS.to_vec();
    allowed.extend_from_slice(MODEL_KEYS);
    cfg.check_keys(&allowed)?;
    let mode: RateMode = parse_enum("mode", &cfg.require::<String>("mode")?)?;
    let model = model_from_config(cfg)?;
    let ns = cfg.sizes("ns")?.ok_or_else(|| cfg_err("missing key `ns`"))?;
    let alpha_rule: AlphaRule = match cfg.raw("alpha_rule") {
        Some(v) => parse_enum("alpha_rule", v)?,
        None => AlphaRule::Fixed,
    };
    let alphas = match (cfg.list("alphas")?, alpha_rule) {
        (Some(a), _) => a,
        (None, AlphaRule::AboveThreshold) => Vec::new(),
        (None, AlphaRule::Fixed) => return Err(cfg_err("missing key `alphas`")),
    };
    let mut exp = ExperimentConfig::new(mode, model, alphas, ns);
    exp.alpha_rule = alpha_rule;
    exp.alpha_factor = cfg.get_or("alpha_factor", exp.alpha_factor)?;
    exp.replications = cfg.get_or("replications", exp.replications)?;
    exp.x0 = cfg.get_or("x0", exp.x0)?;
    exp.c0 = cfg.get_or("c0", exp.c0)?;
    exp.seed = cfg.get_or("seed", exp.seed)?;
    exp.parallelism = cfg.get_or("parallelism", default_parallelism())?;
    exp.slope_tol = cfg.get("slope_tol")?;
    exp.noiseless = cfg.get_or("noiseless", false)?;
    if let DataModel::DiscreteTable { .. } = exp.model {
        exp.ks = cfg.list("ks")?;
        exp.beta = cfg.get("beta")?;
    }
    Ok(exp)
}

/// Moment profile from `ks`.
pub fn profile_from_config(cfg: &Config) -> Result<MomentProfile> {
    let ks: Vec<f64> = cfg.list("ks")?.ok_or_else(|| cfg_err("missing key `ks`"))?;
    MomentProfile::new(ks).map_err(|e| cfg_err(e.to_string()))
}
