//! Seeded replicate runs, JSON-lines metric records and CSV summaries.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::game::{best_response_value, duality_gap, GameConfig, Policy, PreferenceFunction, Sign};
use crate::harness::config::{parse_enhancer, Algorithm, ExperimentConfig, OfflineBlock, OnlineBlock};
use crate::harness::format::{ClassFile, Instance, OracleSpec};
use crate::offline::{
    coverage_coefficient, coverage_tilde, pelhf_bonus_tally, pelhf_version_space_tally, refined_coverage, OfflineConfig,
};
use crate::online::{eluder_diagnostic, oelhf_run, online_suboptimality_bound, select_checkpoint, OnlineConfig, OnlineTrace};
use crate::oracles::{collect, PreferenceDataset};
use crate::prefclass::{sq_distance_tally, FiniteClass};
use crate::solver::{solve_nash_with, SolverOptions};

/// Environment variable holding the worker count for replicate runs.
pub const WORKERS_ENV: &str = "PREFGAME_WORKERS";

/// Thread pool sized by [`WORKERS_ENV`], or rayon's default when unset.
pub fn worker_pool() -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(WORKERS_ENV) {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Error::Config(format!("{WORKERS_ENV} must be a positive integer, got {v:?}")))?;
        b = b.num_threads(n);
    }
    b.build().map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))
}

/// Finite values as JSON numbers; infinities and NaN as strings.
fn num<S: Serializer>(v: &Option<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match v {
        None => s.serialize_none(),
        Some(x) if x.is_finite() => s.serialize_f64(*x),
        Some(x) if x.is_nan() => s.serialize_str("nan"),
        Some(x) if *x > 0.0 => s.serialize_str("+inf"),
        Some(_) => s.serialize_str("-inf"),
    }
}

/// One line of experiment output. `kind` is `offline`, `iteration`,
/// `summary` (end of an online run) or `error`.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct MetricRecord {
    pub kind: &'static str,
    pub algorithm: &'static str,
    pub run_id: String,
    pub seed: u64,
    /// -1 for offline runs and online summaries.
    pub iteration: i64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub parameter: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", serialize_with = "num")]
    pub value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", serialize_with = "num")]
    pub suboptimality: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", serialize_with = "num")]
    pub duality_gap: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", serialize_with = "num")]
    pub in_sample_error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", serialize_with = "num")]
    pub coverage: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", serialize_with = "num")]
    pub bound: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bound_holds: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none", serialize_with = "num")]
    pub refined_coverage: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", serialize_with = "num")]
    pub refined_bound: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_hat: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub version_space_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", serialize_with = "num")]
    pub bonus: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", serialize_with = "num")]
    pub enhancer_log_ratio: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", serialize_with = "num")]
    pub enhancer_kl: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub selected: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", serialize_with = "num")]
    pub eluder_sum: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub converged: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub policy: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub enhancer: Option<Vec<Vec<f64>>>,
    /// `(x, a1, a2, y)` per comparison.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub batch: Option<Vec<(usize, usize, usize, u8)>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_time: Option<f64>,
}

/// Aggregate of one metric over the replicates of one configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub algorithm: &'static str,
    pub parameter: String,
    pub value: Option<f64>,
    pub metric: &'static str,
    /// Finite observations.
    pub count: usize,
    pub infinite: usize,
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub median: Option<f64>,
    pub min: Option<f64>,
    pub max: Option<f64>,
    /// Share of replicates whose bound held.
    pub bound_frequency: Option<f64>,
    pub errors: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub records: Vec<MetricRecord>,
    pub summary: Vec<SummaryRow>,
    pub errors: usize,
}

impl ExperimentReport {
    pub fn jsonl(&self) -> String {
        let mut s = String::new();
        for r in &self.records {
            s.push_str(&serde_json::to_string(r).expect("records serialize"));
            s.push('\n');
        }
        s
    }

    pub fn csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in &self.summary {
            w.serialize(row).map_err(|e| Error::Config(format!("csv: {e}")))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Config(format!("csv: {e}")))?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }

    /// Writes the records to `path` and the summary beside it with a `.csv` extension.
    pub fn write(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.jsonl())?;
        std::fs::write(path.with_extension("csv"), self.csv()?)?;
        Ok(())
    }
}

/// Everything a replicate needs, loaded once before any run.
struct Prepared {
    cfg: GameConfig,
    class: FiniteClass,
    oracle: PreferenceFunction,
    /// Nash policy of the oracle.
    target: Policy,
    dataset: Option<PreferenceDataset>,
}

fn prepare(config: &ExperimentConfig) -> Result<Prepared> {
    let instance = Instance::load(&config.instance)?;
    let cfg = match config.eta {
        Some(eta) => instance.cfg.with_eta(eta)?,
        None => instance.cfg.clone(),
    };
    let class = ClassFile::load(&config.class, cfg.actions())?.finite()?.clone();
    let oracle = OracleSpec::parse(&config.oracle)?.resolve(&instance, Some(&class), &config.base)?;
    let target = solve_nash_with(&cfg, &oracle, &SolverOptions::default())?.policy;
    let dataset = match &config.algorithm {
        Algorithm::OfflineVersionSpace(b) | Algorithm::OfflineBonus(b) => match &b.dataset {
            Some(path) => {
                let p = config.base.join(path);
                let text = std::fs::read_to_string(&p)?;
                let d = PreferenceDataset::parse(&text).map_err(|e| Error::Parse(format!("{}: {e}", p.display())))?;
                d.validate(cfg.actions())?;
                Some(d)
            }
            None => None,
        },
        Algorithm::Online(_) => None,
    };
    Ok(Prepared {
        cfg,
        class,
        oracle,
        target,
        dataset,
    })
}

/// Policy named by a behavior token, if it is one of the built-in names.
pub fn behavior_policy(name: &str, cfg: &GameConfig) -> Option<Policy> {
    match name {
        "reference" => Some(cfg.pi0().clone()),
        "uniform" => Some(Policy::uniform(cfg.actions())),
        _ => None,
    }
}

fn error_record(algorithm: &'static str, run_id: String, seed: u64, e: &Error) -> MetricRecord {
    MetricRecord {
        kind: "error",
        algorithm,
        run_id,
        seed,
        iteration: -1,
        error: Some(e.to_string()),
        ..Default::default()
    }
}

fn offline_replicate(p: &Prepared, block: &OfflineBlock, bonus: bool, seed: u64, run_id: String) -> Result<MetricRecord> {
    let algorithm = if bonus { "offline_bonus" } else { "offline_vs" };
    let d = match &p.dataset {
        Some(d) => d.clone(),
        None => {
            let b1 = behavior_policy(&block.behavior[0], &p.cfg).expect("validated behavior");
            let b2 = behavior_policy(&block.behavior[1], &p.cfg).expect("validated behavior");
            collect(&p.cfg, &b1, &b2, &p.oracle, block.n, seed, [&block.behavior[0], &block.behavior[1]])?
        }
    };
    let t = d.tally(p.cfg.actions())?;
    let mut off = OfflineConfig::confidence(p.class.len(), block.delta)?;
    if let Some(b) = block.beta {
        off.beta = b;
    }
    if let Some(l) = block.lambda {
        off.lambda = l;
    }
    let out = if bonus {
        pelhf_bonus_tally(&p.class, &t, &p.cfg, &off)?
    } else {
        pelhf_version_space_tally(&p.class, &t, &p.cfg, &off)?
    };
    let est = p.class.get(out.p_hat);
    let n = d.len();
    let mut rec = MetricRecord {
        kind: "offline",
        algorithm,
        run_id,
        seed,
        iteration: -1,
        n: Some(n),
        suboptimality: Some(0.5 - best_response_value(&p.cfg, &p.oracle, &out.policy, Sign::Min)?),
        duality_gap: Some(duality_gap(&p.cfg, &p.oracle, &out.policy, &out.policy)?),
        in_sample_error: Some(sq_distance_tally(est, &p.oracle, &t)),
        p_hat: Some(out.p_hat),
        version_space_size: (!bonus).then_some(out.version_space.len()),
        converged: Some(out.converged),
        policy: Some(out.policy.rows().to_vec()),
        ..Default::default()
    };
    let b1 = behavior_policy(&d.behavior[0], &p.cfg);
    let b2 = behavior_policy(&d.behavior[1], &p.cfg);
    if let (Some(b1), Some(b2)) = (b1, b2) {
        let pd = (&b1, &b2);
        let c = if bonus {
            coverage_tilde(&p.class, est, &p.target, pd, &p.cfg)?
        } else {
            coverage_coefficient(&p.class, est, &p.target, pd, &p.cfg)?
        };
        let bound = 4.0 * off.beta * (c.value() / n as f64).sqrt();
        rec.coverage = Some(c.value());
        rec.bound = Some(bound);
        rec.bound_holds = Some(rec.suboptimality.unwrap_or(f64::INFINITY) <= bound);
        if !bonus {
            let rc = refined_coverage(&p.class, est, &out.version_space, &p.target, &p.target, pd, &p.cfg)?;
            rec.refined_coverage = Some(rc.coverage.value());
            rec.refined_bound = Some(rc.bound(off.beta, n));
        }
    }
    Ok(rec)
}

/// `lambda` and `beta` for an online block, with the confidence-radius defaults.
pub fn online_parameters(block: &OnlineBlock, class_size: usize) -> (f64, f64) {
    let t = block.iterations as f64;
    let lambda = block
        .lambda
        .unwrap_or_else(|| 2.0 * t * (2.0 * t * class_size as f64 / block.delta).ln() / block.batch_size as f64);
    (lambda, block.beta.unwrap_or_else(|| lambda.sqrt()))
}

fn online_records(block: &OnlineBlock, trace: &OnlineTrace, seed: u64, run_id: &str) -> Vec<MetricRecord> {
    trace
        .records
        .iter()
        .map(|r| MetricRecord {
            kind: "iteration",
            algorithm: "online",
            run_id: run_id.to_string(),
            seed,
            iteration: r.t as i64,
            n: Some(block.batch_size),
            suboptimality: Some(r.suboptimality),
            duality_gap: Some(r.duality_gap),
            in_sample_error: Some(r.in_sample_error),
            p_hat: Some(r.p_hat),
            bonus: Some(r.bonus),
            enhancer_log_ratio: Some(r.enhancer_log_ratio),
            enhancer_kl: Some(r.enhancer_kl),
            policy: Some(r.main.rows().to_vec()),
            enhancer: Some(r.enhancer.rows().to_vec()),
            batch: Some(r.batch.records.iter().map(|c| (c.x, c.a1, c.a2, c.y as u8)).collect()),
            ..Default::default()
        })
        .collect()
}

fn online_replicate(p: &Prepared, block: &OnlineBlock, seed: u64, run_id: String) -> Vec<MetricRecord> {
    let (lambda, beta) = online_parameters(block, p.class.len());
    let mode = parse_enhancer(&block.enhancer).expect("validated enhancer");
    let online = match OnlineConfig::new(block.iterations, block.batch_size, lambda, beta, mode, seed) {
        Ok(o) => o,
        Err(e) => return vec![error_record("online", run_id, seed, &e)],
    };
    let trace = match oelhf_run(&p.oracle, &p.class, &p.cfg, &online) {
        Ok(t) => t,
        Err(Error::Aborted { partial, source, .. }) => {
            let mut out = online_records(block, &partial, seed, &run_id);
            out.push(error_record("online", run_id, seed, &source));
            return out;
        }
        Err(e) => return vec![error_record("online", run_id, seed, &e)],
    };
    let mut out = online_records(block, &trace, seed, &run_id);
    let summary = (|| -> Result<MetricRecord> {
        let (selected, policy) = select_checkpoint(&trace, &p.oracle, &p.cfg)?;
        let eluder = eluder_diagnostic(&trace, &p.class, &p.cfg, lambda)?;
        let best = trace.min_suboptimality();
        let bound = online_suboptimality_bound(block.iterations, block.batch_size, p.class.len(), block.delta);
        Ok(MetricRecord {
            kind: "summary",
            algorithm: "online",
            run_id: run_id.clone(),
            seed,
            iteration: -1,
            n: Some(block.batch_size),
            suboptimality: Some(0.5 - best_response_value(&p.cfg, &p.oracle, &policy, Sign::Min)?),
            duality_gap: Some(duality_gap(&p.cfg, &p.oracle, &policy, &policy)?),
            in_sample_error: trace.records.last().map(|r| r.in_sample_error),
            bound: Some(bound),
            bound_holds: Some(best <= bound),
            selected: Some(selected),
            eluder_sum: eluder.cumulative.last().copied(),
            policy: Some(policy.rows().to_vec()),
            ..Default::default()
        })
    })();
    out.push(summary.unwrap_or_else(|e| error_record("online", run_id.clone(), seed, &e)));
    out
}

fn run_replicates(config: &ExperimentConfig, p: &Prepared, tag: &str) -> Vec<MetricRecord> {
    let run = |i: usize| -> Vec<MetricRecord> {
        let seed = config.seed.wrapping_add(i as u64);
        let run_id = format!("{tag}r{i:04}");
        let start = Instant::now();
        let mut recs = match &config.algorithm {
            Algorithm::OfflineVersionSpace(b) => vec![offline_replicate(p, b, false, seed, run_id.clone())
                .unwrap_or_else(|e| error_record("offline_vs", run_id.clone(), seed, &e))],
            Algorithm::OfflineBonus(b) => vec![offline_replicate(p, b, true, seed, run_id.clone())
                .unwrap_or_else(|e| error_record("offline_bonus", run_id.clone(), seed, &e))],
            Algorithm::Online(b) => online_replicate(p, b, seed, run_id),
        };
        if config.timing {
            let secs = start.elapsed().as_secs_f64();
            recs.iter_mut().for_each(|r| r.wall_time = Some(secs));
        }
        recs
    };
    (0..config.replicates).into_par_iter().flat_map_iter(run).collect()
}

const SUMMARY_METRICS: [&str; 5] = ["suboptimality", "duality_gap", "in_sample_error", "coverage", "bound"];

fn metric(r: &MetricRecord, name: &str) -> Option<f64> {
    match name {
        "suboptimality" => r.suboptimality,
        "duality_gap" => r.duality_gap,
        "in_sample_error" => r.in_sample_error,
        "coverage" => r.coverage,
        "bound" => r.bound,
        _ => None,
    }
}

fn summarize(algorithm: &'static str, parameter: &str, value: Option<f64>, records: &[MetricRecord]) -> Vec<SummaryRow> {
    let finals: Vec<&MetricRecord> = records.iter().filter(|r| r.kind == "offline" || r.kind == "summary").collect();
    let errors = records.iter().filter(|r| r.kind == "error").count();
    let holds: Vec<bool> = finals.iter().filter_map(|r| r.bound_holds).collect();
    let bound_frequency = (!holds.is_empty()).then(|| holds.iter().filter(|&&h| h).count() as f64 / holds.len() as f64);
    SUMMARY_METRICS
        .iter()
        .map(|&name| {
            let all: Vec<f64> = finals.iter().filter_map(|r| metric(r, name)).collect();
            let mut v: Vec<f64> = all.iter().copied().filter(|x| x.is_finite()).collect();
            v.sort_by(f64::total_cmp);
            let count = v.len();
            let mean = (count > 0).then(|| v.iter().sum::<f64>() / count as f64);
            let std = mean.filter(|_| count > 1).map(|m| {
                (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (count - 1) as f64).sqrt()
            });
            let median = (count > 0).then(|| {
                if count % 2 == 1 {
                    v[count / 2]
                } else {
                    0.5 * (v[count / 2 - 1] + v[count / 2])
                }
            });
            SummaryRow {
                algorithm,
                parameter: parameter.to_string(),
                value,
                metric: name,
                count,
                infinite: all.len() - count,
                mean,
                std,
                median,
                min: v.first().copied(),
                max: v.last().copied(),
                bound_frequency,
                errors,
            }
        })
        .collect()
}

/// Runs every replicate of `config` (seed `base + i` for replicate `i`). Output
/// order follows replicate order regardless of how many workers run.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    let p = prepare(config)?;
    let pool = worker_pool()?;
    let records = pool.install(|| run_replicates(config, &p, ""));
    let summary = summarize(config.algorithm.name(), "", None, &records);
    let errors = records.iter().filter(|r| r.kind == "error").count();
    Ok(ExperimentReport { records, summary, errors })
}

/// Runs the config once per value of its `[sweep]` block.
pub fn run_sweep(config: &ExperimentConfig) -> Result<ExperimentReport> {
    let sweep = config
        .sweep
        .clone()
        .ok_or_else(|| Error::Config("the sweep command needs a [sweep] block".into()))?;
    let variants = sweep
        .values
        .iter()
        .map(|&v| config.with_parameter(&sweep.parameter, v))
        .collect::<Result<Vec<_>>>()?;
    let prepared = variants.iter().map(prepare).collect::<Result<Vec<_>>>()?;
    let pool = worker_pool()?;
    let mut report = ExperimentReport {
        records: Vec::new(),
        summary: Vec::new(),
        errors: 0,
    };
    for (j, ((variant, p), &value)) in variants.iter().zip(&prepared).zip(&sweep.values).enumerate() {
        let mut recs = pool.install(|| run_replicates(variant, p, &format!("s{j}-")));
        for r in &mut recs {
            r.parameter = Some(sweep.parameter.clone());
            r.value = Some(value);
        }
        report.summary.extend(summarize(config.algorithm.name(), &sweep.parameter, Some(value), &recs));
        report.errors += recs.iter().filter(|r| r.kind == "error").count();
        report.records.extend(recs);
    }
    Ok(report)
}
