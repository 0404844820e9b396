//! The command-line subcommands as library functions.
//!
//! Each returns the text the binary prints on stdout and whether the command
//! succeeded, so the binary stays a thin argument parser and the determinism
//! check can call the same code.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::oracles::collect;
use crate::solver::{solve_nash_with, NashResult, SolverOptions};

use super::acceptance::{run_all, Thresholds};
use super::config::{Algorithm, ExperimentConfig};
use super::experiment::{behavior_policy, run_experiment, run_sweep};
use super::format::{ClassFile, Instance, OracleSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct CommandOutput {
    pub stdout: String,
    pub success: bool,
}

#[derive(Serialize)]
struct NashReport<'a> {
    eta: f64,
    tol: f64,
    converged: bool,
    duality_gap: f64,
    residual: f64,
    iterations: usize,
    policy: &'a [Vec<f64>],
}

fn nash_report(eta: f64, tol: f64, r: &NashResult) -> String {
    let rep = NashReport {
        eta,
        tol,
        converged: r.converged,
        duality_gap: r.duality_gap,
        residual: r.residual,
        iterations: r.iterations,
        policy: r.policy.rows(),
    };
    serde_json::to_string(&rep).expect("finite report") + "\n"
}

/// `solve-nash`: the Nash policy of the instance's own preference table.
pub fn solve_nash_command(instance: &Path, eta: Option<f64>, tol: Option<f64>, max_iter: Option<usize>) -> Result<CommandOutput> {
    let inst = Instance::load(instance)?;
    let cfg = match eta {
        Some(e) => inst.cfg.with_eta(e)?,
        None => inst.cfg.clone(),
    };
    let p = inst
        .preference
        .ok_or_else(|| Error::Config(format!("{} has no preference table", instance.display())))?;
    let mut opts = SolverOptions::default();
    if let Some(t) = tol {
        opts.tol = t;
    }
    if let Some(m) = max_iter {
        opts.max_iter = m;
    }
    match solve_nash_with(&cfg, &p, &opts) {
        Ok(r) => Ok(CommandOutput {
            stdout: nash_report(cfg.eta(), opts.tol, &r),
            success: true,
        }),
        Err(Error::NonConvergence { best, .. }) => Ok(CommandOutput {
            stdout: nash_report(cfg.eta(), opts.tol, &best),
            success: false,
        }),
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CollectArgs {
    pub instance: PathBuf,
    pub oracle: String,
    pub n: usize,
    pub seed: u64,
    /// Needed when the oracle names a class member.
    pub class: Option<PathBuf>,
    pub behavior: [String; 2],
}

/// `collect`: a labeled dataset in the dataset text format.
pub fn collect_command(args: &CollectArgs) -> Result<CommandOutput> {
    let inst = Instance::load(&args.instance)?;
    let cfg = &inst.cfg;
    let class = match &args.class {
        Some(path) => Some(ClassFile::load(path, cfg.actions())?.finite()?.clone()),
        None => None,
    };
    let base = args.instance.parent().unwrap_or(Path::new("."));
    let oracle = OracleSpec::parse(&args.oracle)?.resolve(&inst, class.as_ref(), base)?;
    let behavior = |name: &str| {
        behavior_policy(name, cfg).ok_or_else(|| Error::Config(format!("unknown behavior {name:?}; expected reference or uniform")))
    };
    let b1 = behavior(&args.behavior[0])?;
    let b2 = behavior(&args.behavior[1])?;
    let d = collect(cfg, &b1, &b2, &oracle, args.n, args.seed, [&args.behavior[0], &args.behavior[1]])?;
    Ok(CommandOutput {
        stdout: d.to_text(),
        success: true,
    })
}

/// Which algorithm block an experiment command requires.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    Offline,
    Online,
    Sweep,
}

/// Command-line values that replace config-file values.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub replicates: Option<usize>,
    pub seed: Option<u64>,
    pub output: Option<PathBuf>,
    pub eta: Option<f64>,
    pub n: Option<usize>,
    pub iterations: Option<usize>,
    pub batch_size: Option<usize>,
    pub beta: Option<f64>,
    pub lambda: Option<f64>,
}

impl Overrides {
    pub fn apply(&self, config: &ExperimentConfig) -> Result<ExperimentConfig> {
        let mut c = config.clone();
        let sweep = c.sweep.take();
        let params = [
            ("n", self.n.map(|v| v as f64)),
            ("iterations", self.iterations.map(|v| v as f64)),
            ("batch_size", self.batch_size.map(|v| v as f64)),
            ("beta", self.beta),
            ("lambda", self.lambda),
            ("eta", self.eta),
        ];
        for (name, value) in params {
            if let Some(v) = value {
                c = c.with_parameter(name, v)?;
            }
        }
        if let Some(r) = self.replicates {
            c.replicates = r;
        }
        if let Some(s) = self.seed {
            c.seed = s;
        }
        if let Some(o) = &self.output {
            c.output = Some(o.clone());
        }
        c.sweep = sweep;
        c.validate()?;
        Ok(c)
    }
}

/// `offline`, `online` and `sweep`: JSON-lines records on stdout, plus the
/// records and CSV summary on disk when the config names an output path.
/// Fails when any replicate recorded an error.
pub fn experiment_command(config: &Path, kind: ExperimentKind, overrides: &Overrides) -> Result<CommandOutput> {
    let c = overrides.apply(&ExperimentConfig::load(config)?)?;
    let online = matches!(c.algorithm, Algorithm::Online(_));
    match kind {
        ExperimentKind::Offline if online => {
            return Err(Error::Config("the offline command needs an [offline_vs] or [offline_bonus] block".into()))
        }
        ExperimentKind::Online if !online => return Err(Error::Config("the online command needs an [online] block".into())),
        _ => {}
    }
    let report = match kind {
        ExperimentKind::Sweep => run_sweep(&c)?,
        _ => run_experiment(&c)?,
    };
    if let Some(out) = &c.output {
        report.write(out)?;
    }
    Ok(CommandOutput {
        stdout: report.jsonl(),
        success: report.errors == 0,
    })
}

/// `accept`: the acceptance table.
pub fn accept_command(thresholds: &Thresholds) -> CommandOutput {
    let results = run_all(thresholds);
    let mut s = String::new();
    for r in &results {
        let _ = writeln!(s, "{r}");
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    let _ = writeln!(s, "{} of {} criteria passed", results.len() - failed, results.len());
    CommandOutput {
        stdout: s,
        success: failed == 0,
    }
}
