//! Experiment configuration files.
//!
//! ```toml
//! instance = "rps.toml"
//! class = "class.toml"
//! oracle = "class:0"
//! replicates = 200
//! seed = 0
//! output = "runs.jsonl"          # optional; a CSV summary is written beside it
//! eta = 1.0                      # optional override of the instance value
//!
//! [offline_vs]                   # or [offline_bonus] or [online]
//! n = 200
//! delta = 0.1
//! behavior = ["reference", "reference"]
//!
//! [sweep]                        # used by the sweep command only
//! parameter = "n"
//! values = [50, 200, 800]
//! ```
//!
//! Relative paths are resolved against the directory of the config file.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::online::EnhancerMode;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OfflineBlock {
    /// Dataset size per replicate; ignored when `dataset` is given.
    #[serde(default)]
    pub n: usize,
    #[serde(default = "default_delta")]
    pub delta: f64,
    /// Defaults to `sqrt(2 ln(|class| / delta))`.
    pub beta: Option<f64>,
    /// Defaults to `ln(|class| / delta)`.
    pub lambda: Option<f64>,
    #[serde(default = "default_behavior")]
    pub behavior: [String; 2],
    /// A fixed dataset file instead of fresh collection.
    pub dataset: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OnlineBlock {
    pub iterations: usize,
    pub batch_size: usize,
    #[serde(default = "default_delta")]
    pub delta: f64,
    /// Defaults to `2 T ln(2 T |class| / delta) / m`.
    pub lambda: Option<f64>,
    /// Defaults to `sqrt(lambda)`.
    pub beta: Option<f64>,
    #[serde(default = "default_enhancer")]
    pub enhancer: String,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepBlock {
    pub parameter: String,
    pub values: Vec<f64>,
}

fn default_delta() -> f64 {
    0.1
}

fn default_behavior() -> [String; 2] {
    ["reference".into(), "reference".into()]
}

fn default_enhancer() -> String {
    "max_uncertainty".into()
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    instance: String,
    class: String,
    oracle: String,
    #[serde(default = "one")]
    replicates: usize,
    #[serde(default)]
    seed: u64,
    output: Option<String>,
    eta: Option<f64>,
    #[serde(default)]
    timing: bool,
    offline_vs: Option<OfflineBlock>,
    offline_bonus: Option<OfflineBlock>,
    online: Option<OnlineBlock>,
    sweep: Option<SweepBlock>,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq)]
pub enum Algorithm {
    OfflineVersionSpace(OfflineBlock),
    OfflineBonus(OfflineBlock),
    Online(OnlineBlock),
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::OfflineVersionSpace(_) => "offline_vs",
            Algorithm::OfflineBonus(_) => "offline_bonus",
            Algorithm::Online(_) => "online",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub instance: PathBuf,
    pub class: PathBuf,
    pub oracle: String,
    pub replicates: usize,
    pub seed: u64,
    pub output: Option<PathBuf>,
    pub eta: Option<f64>,
    /// Adds wall time to every record; makes output machine-dependent.
    pub timing: bool,
    pub algorithm: Algorithm,
    pub sweep: Option<SweepBlock>,
    /// Directory for resolving relative paths in the oracle spec and dataset.
    pub base: PathBuf,
}

/// Parameters the sweep command can vary.
pub const SWEEP_PARAMETERS: [&str; 6] = ["n", "batch_size", "iterations", "eta", "beta", "lambda"];

pub fn parse_enhancer(s: &str) -> Result<EnhancerMode> {
    match s {
        "max_uncertainty" => Ok(EnhancerMode::MaxUncertainty),
        "kl_restricted" => Ok(EnhancerMode::KlRestricted),
        _ => {
            let n = s
                .strip_prefix("best_of_n:")
                .and_then(|n| n.parse::<usize>().ok())
                .ok_or_else(|| Error::Config(format!("unknown enhancer {s:?}; expected max_uncertainty, kl_restricted or best_of_n:N")))?;
            if n == 0 || !n.is_power_of_two() {
                return Err(Error::Config(format!("best_of_n needs a power of two, got {n}")));
            }
            Ok(EnhancerMode::BestOfN(n))
        }
    }
}

impl ExperimentConfig {
    /// Parses config text; `base` is the directory relative paths refer to.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        let algorithm = match (raw.offline_vs, raw.offline_bonus, raw.online) {
            (Some(b), None, None) => Algorithm::OfflineVersionSpace(b),
            (None, Some(b), None) => Algorithm::OfflineBonus(b),
            (None, None, Some(b)) => Algorithm::Online(b),
            _ => return Err(Error::Config("exactly one of [offline_vs], [offline_bonus], [online] is required".into())),
        };
        let cfg = Self {
            instance: base.join(&raw.instance),
            class: base.join(&raw.class),
            oracle: raw.oracle,
            replicates: raw.replicates,
            seed: raw.seed,
            output: raw.output.map(|o| base.join(o)),
            eta: raw.eta,
            timing: raw.timing,
            algorithm,
            sweep: raw.sweep,
            base: base.to_path_buf(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            e => e,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::Config("replicates must be at least 1".into()));
        }
        if let Some(eta) = self.eta {
            if !(eta > 0.0 && eta.is_finite()) {
                return Err(Error::Config(format!("eta must be positive, got {eta}")));
            }
        }
        crate::harness::format::OracleSpec::parse(&self.oracle)?;
        match &self.algorithm {
            Algorithm::OfflineVersionSpace(b) | Algorithm::OfflineBonus(b) => {
                if b.dataset.is_none() && b.n == 0 {
                    return Err(Error::Config("offline block needs n >= 1 or a dataset".into()));
                }
                if b.dataset.is_some() && self.replicates > 1 {
                    return Err(Error::Config("a fixed dataset allows a single replicate".into()));
                }
                check_delta(b.delta)?;
                check_optional(b.beta, "beta", true)?;
                check_optional(b.lambda, "lambda", false)?;
                for name in &b.behavior {
                    if !["reference", "uniform"].contains(&name.as_str()) {
                        return Err(Error::Config(format!("unknown behavior {name:?}; expected reference or uniform")));
                    }
                }
            }
            Algorithm::Online(b) => {
                if b.iterations == 0 || b.batch_size == 0 {
                    return Err(Error::Config("online block needs iterations >= 1 and batch_size >= 1".into()));
                }
                check_delta(b.delta)?;
                check_optional(b.beta, "beta", true)?;
                check_optional(b.lambda, "lambda", false)?;
                parse_enhancer(&b.enhancer)?;
            }
        }
        if let Some(s) = &self.sweep {
            if !SWEEP_PARAMETERS.contains(&s.parameter.as_str()) {
                return Err(Error::Config(format!("cannot sweep {:?}; expected one of {SWEEP_PARAMETERS:?}", s.parameter)));
            }
            if s.values.is_empty() {
                return Err(Error::Config("sweep needs at least one value".into()));
            }
            for &v in &s.values {
                self.with_parameter(&s.parameter, v)?;
            }
        }
        Ok(())
    }

    /// Copy with one parameter replaced, as used by sweeps.
    pub fn with_parameter(&self, name: &str, value: f64) -> Result<Self> {
        let mut c = self.clone();
        c.sweep = None;
        let count = || -> Result<usize> {
            if value >= 1.0 && value.fract() == 0.0 && value <= u32::MAX as f64 {
                Ok(value as usize)
            } else {
                Err(Error::Config(format!("{name} must be a positive integer, got {value}")))
            }
        };
        match (name, &mut c.algorithm) {
            ("eta", _) => c.eta = Some(value),
            ("n", Algorithm::OfflineVersionSpace(b) | Algorithm::OfflineBonus(b)) => b.n = count()?,
            ("beta", Algorithm::OfflineVersionSpace(b) | Algorithm::OfflineBonus(b)) => b.beta = Some(value),
            ("lambda", Algorithm::OfflineVersionSpace(b) | Algorithm::OfflineBonus(b)) => b.lambda = Some(value),
            ("batch_size", Algorithm::Online(b)) => b.batch_size = count()?,
            ("iterations", Algorithm::Online(b)) => b.iterations = count()?,
            ("beta", Algorithm::Online(b)) => b.beta = Some(value),
            ("lambda", Algorithm::Online(b)) => b.lambda = Some(value),
            _ => return Err(Error::Config(format!("{name} does not apply to {}", self.algorithm.name()))),
        }
        c.validate()?;
        Ok(c)
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Config(format!("delta must lie in (0, 1), got {delta}")));
    }
    Ok(())
}

fn check_optional(v: Option<f64>, name: &str, allow_zero: bool) -> Result<()> {
    if let Some(v) = v {
        let ok = v.is_finite() && if allow_zero { v >= 0.0 } else { v > 0.0 };
        if !ok {
            return Err(Error::Config(format!("{name} out of range: {v}")));
        }
    }
    Ok(())
}
