//! The batch online loop, checkpoint selection and run diagnostics.

use crate::error::{Error, Result};
use crate::game::{best_response_min, best_response_value, duality_gap, expected_kl, GameConfig, Policy, PreferenceFunction, Sign};
use crate::oracles::{collect, PreferenceDataset, Tally};
use crate::prefclass::{expected_sq_distance, sq_distance_tally, FiniteClass, PairBonus};
use crate::rng;
use crate::solver::{solve_nash_with, SolverOptions};

use super::bon::best_of_n_policy;
use super::enhancer::{kl_restricted_enhancer, log_ratio_bound, max_uncertainty_enhancer, Enhancement};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnhancerMode {
    MaxUncertainty,
    KlRestricted,
    /// Best-of-n selection of the main policy ranked by the current estimate.
    BestOfN(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OnlineConfig {
    pub iterations: usize,
    pub batch_size: usize,
    pub lambda: f64,
    pub beta: f64,
    pub enhancer: EnhancerMode,
    pub seed: u64,
    pub solver: SolverOptions,
}

impl OnlineConfig {
    pub fn new(iterations: usize, batch_size: usize, lambda: f64, beta: f64, enhancer: EnhancerMode, seed: u64) -> Result<Self> {
        let cfg = Self {
            iterations,
            batch_size,
            lambda,
            beta,
            enhancer,
            seed,
            solver: SolverOptions::default(),
        };
        cfg.check()?;
        Ok(cfg)
    }

    pub fn check(&self) -> Result<()> {
        if self.iterations == 0 || self.batch_size == 0 {
            return Err(Error::InvalidParameter("iterations and batch size must be at least 1".into()));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!("lambda must be positive, got {}", self.lambda)));
        }
        if !(self.beta >= 0.0) {
            return Err(Error::InvalidParameter(format!("beta must be nonnegative, got {}", self.beta)));
        }
        if let EnhancerMode::BestOfN(n) = self.enhancer {
            if n == 0 || !n.is_power_of_two() {
                return Err(Error::InvalidParameter(format!("best-of-n needs a power of two, got {n}")));
            }
        }
        Ok(())
    }
}

/// One iteration of the online loop.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    /// 1-based.
    pub t: usize,
    /// Index of the estimate fitted on all earlier batches.
    pub p_hat: usize,
    pub main: Policy,
    pub enhancer: Policy,
    pub batch: PreferenceDataset,
    /// Realized pair bonus of `(main, enhancer)`.
    pub bonus: f64,
    /// Duality gap of `(main, main)` under the environment oracle.
    pub duality_gap: f64,
    /// `1/2 - J(main, best response)` under the environment oracle.
    pub suboptimality: f64,
    /// Squared distance between estimate and oracle on the data the estimate was fitted on.
    pub in_sample_error: f64,
    pub enhancer_log_ratio: f64,
    pub enhancer_kl: f64,
    pub candidates: usize,
    pub admitted: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OnlineTrace {
    pub config: OnlineConfig,
    /// Whether the environment oracle is a member of the class.
    pub realizable: bool,
    pub records: Vec<IterationRecord>,
}

impl OnlineTrace {
    pub fn min_suboptimality(&self) -> f64 {
        self.records.iter().map(|r| r.suboptimality).fold(f64::INFINITY, f64::min)
    }

    pub fn min_duality_gap(&self) -> f64 {
        self.records.iter().map(|r| r.duality_gap).fold(f64::INFINITY, f64::min)
    }
}

/// Runs the loop: fit the estimate on all data so far, play its Nash policy
/// against the configured enhancer, and collect a batch from the oracle.
/// On failure the error carries the iterations completed so far.
pub fn oelhf_run(oracle: &PreferenceFunction, class: &FiniteClass, cfg: &GameConfig, online: &OnlineConfig) -> Result<OnlineTrace> {
    online.check()?;
    cfg.check_payoff(oracle)?;
    cfg.check_payoff(class.get(0))?;
    let realizable = class.members().iter().any(|p| p.max_abs_diff(oracle) == 0.0);
    let mut trace = OnlineTrace {
        config: *online,
        realizable,
        records: Vec::with_capacity(online.iterations),
    };
    let mut history = Tally::zeros(cfg.actions());
    for t in 1..=online.iterations {
        match iteration(oracle, class, cfg, online, &history, t) {
            Ok(rec) => {
                history.merge(&rec.batch.tally(cfg.actions())?);
                trace.records.push(rec);
            }
            Err(source) => {
                return Err(Error::Aborted {
                    iteration: t,
                    partial: Box::new(trace),
                    source: Box::new(source),
                })
            }
        }
    }
    Ok(trace)
}

fn iteration(
    oracle: &PreferenceFunction,
    class: &FiniteClass,
    cfg: &GameConfig,
    online: &OnlineConfig,
    history: &Tally,
    t: usize,
) -> Result<IterationRecord> {
    let p_hat = class.mle_tally(history);
    let est = class.get(p_hat);
    let main = solve_nash_with(cfg, est, &online.solver)?.policy;
    let (lambda, m) = (online.lambda, online.batch_size);
    let enh = match online.enhancer {
        EnhancerMode::MaxUncertainty => max_uncertainty_enhancer(class, est, history, lambda, m, &main, cfg)?,
        EnhancerMode::KlRestricted => kl_restricted_enhancer(class, est, history, lambda, m, online.beta, &main, cfg)?,
        EnhancerMode::BestOfN(n) => {
            let policy = best_of_n_policy(&main, est, n, cfg)?;
            let bonus = PairBonus::new(class, est, history, lambda, m)?.value(cfg, &main, &policy);
            Enhancement {
                log_ratio_bound: log_ratio_bound(cfg, &policy),
                policy,
                bonus,
                candidates: 0,
                admitted: 0,
            }
        }
    };
    let batch = collect(
        cfg,
        &main,
        &enh.policy,
        oracle,
        m,
        rng::derive_seed(online.seed, t as u64),
        [&format!("main{t}"), &format!("enhancer{t}")],
    )?;
    let enhancer_kl = expected_kl(cfg.d0(), &enh.policy, &main).unwrap_or(f64::INFINITY);
    Ok(IterationRecord {
        t,
        p_hat,
        duality_gap: duality_gap(cfg, oracle, &main, &main)?,
        suboptimality: 0.5 - best_response_value(cfg, oracle, &main, Sign::Min)?,
        in_sample_error: sq_distance_tally(est, oracle, history),
        main,
        enhancer: enh.policy,
        batch,
        bonus: enh.bonus,
        enhancer_log_ratio: enh.log_ratio_bound,
        enhancer_kl,
        candidates: enh.candidates,
        admitted: enh.admitted,
    })
}

/// The iteration whose main policy has the largest exact value against a
/// best-responding opponent under `oracle`; returns a 1-based index, ties to the earliest.
pub fn select_checkpoint(trace: &OnlineTrace, oracle: &PreferenceFunction, cfg: &GameConfig) -> Result<(usize, Policy)> {
    let mut best: Option<(f64, usize)> = None;
    for (i, r) in trace.records.iter().enumerate() {
        let v = best_response_value(cfg, oracle, &r.main, Sign::Min)?;
        if best.map_or(true, |(b, _)| v > b) {
            best = Some((v, i));
        }
    }
    let (_, i) = best.ok_or_else(|| Error::InvalidParameter("empty trace".into()))?;
    Ok((i + 1, trace.records[i].main.clone()))
}

/// Selection from a finite validation budget: each main policy plays the
/// Gibbs response computed under `model`, and the preference term is
/// estimated from `budget` oracle labels. KL terms are exact.
pub fn select_checkpoint_sampled(
    trace: &OnlineTrace,
    oracle: &PreferenceFunction,
    model: &PreferenceFunction,
    cfg: &GameConfig,
    budget: usize,
    seed: u64,
) -> Result<(usize, Policy)> {
    if budget == 0 {
        return Err(Error::InvalidParameter("validation budget must be positive".into()));
    }
    let mut best: Option<(f64, usize)> = None;
    for (i, r) in trace.records.iter().enumerate() {
        let opp = best_response_min(cfg, model, &r.main);
        let d = collect(cfg, &r.main, &opp, oracle, budget, rng::derive_seed(seed, i as u64), ["main", "validation"])?;
        let wins = d.records.iter().filter(|rec| rec.y).count() as f64 / budget as f64;
        let v = wins - cfg.kl_to_reference(&r.main)? / cfg.eta() + cfg.kl_to_reference(&opp)? / cfg.eta();
        if best.map_or(true, |(b, _)| v > b) {
            best = Some((v, i));
        }
    }
    let (_, i) = best.ok_or_else(|| Error::InvalidParameter("empty trace".into()))?;
    Ok((i + 1, trace.records[i].main.clone()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OnlineHyperparams {
    pub iterations: usize,
    pub batch_size: usize,
    pub beta: f64,
    pub lambda: f64,
}

/// `ln(2 T |class| / delta)`.
fn confidence_log(iterations: usize, class_size: usize, delta: f64) -> f64 {
    (2.0 * iterations as f64 * class_size as f64 / delta).ln()
}

/// Iteration count, batch size and confidence radius for a target accuracy
/// `epsilon`, given an estimate `d_est(n)` of the eluder coefficient at horizon `n`.
pub fn theorem2_hyperparams(class_size: usize, delta: f64, epsilon: f64, d_est: impl Fn(usize) -> f64) -> Result<OnlineHyperparams> {
    if class_size == 0 || !(delta > 0.0 && delta < 1.0) || !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "need class_size >= 1, delta and epsilon in (0, 1); got {class_size}, {delta}, {epsilon}"
        )));
    }
    const HORIZON_CAP: usize = 10_000_000;
    let t = (1..=HORIZON_CAP)
        .find(|&n| n as f64 >= 2.0 * d_est(n))
        .ok_or_else(|| Error::InvalidParameter(format!("no horizon up to {HORIZON_CAP} satisfies n >= 2 d(n)")))?;
    let log = confidence_log(t, class_size, delta);
    let m = (18.0 * t as f64 * log / (epsilon * epsilon)).ceil() as usize;
    let lambda = 2.0 * t as f64 * log / m as f64;
    Ok(OnlineHyperparams {
        iterations: t,
        batch_size: m,
        beta: lambda.sqrt(),
        lambda,
    })
}

/// `3 sqrt(2 T ln(2 T |class| / delta) / m)`.
pub fn online_suboptimality_bound(iterations: usize, batch_size: usize, class_size: usize, delta: f64) -> f64 {
    3.0 * (2.0 * iterations as f64 * confidence_log(iterations, class_size, delta) / batch_size as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EluderDiagnostic {
    /// `min(1, ratio_t^2)` per iteration.
    pub terms: Vec<f64>,
    pub cumulative: Vec<f64>,
}

/// Information ratio of each iteration's policy pair against the estimate of
/// that iteration, with in-sample errors taken as exact expectations over the
/// earlier pairs. The running sum lower-bounds the eluder coefficient.
pub fn eluder_diagnostic(trace: &OnlineTrace, class: &FiniteClass, cfg: &GameConfig, lambda: f64) -> Result<EluderDiagnostic> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidParameter(format!("lambda must be positive, got {lambda}")));
    }
    let mut terms = Vec::with_capacity(trace.records.len());
    let mut cumulative = Vec::with_capacity(trace.records.len());
    let mut sum = 0.0;
    for (t, r) in trace.records.iter().enumerate() {
        let est = class.get(r.p_hat);
        let mut ratio = 0.0f64;
        for p in class.members() {
            let num: f64 = cfg
                .d0()
                .iter()
                .enumerate()
                .map(|(x, &w)| {
                    w * (crate::game::expected_preference(p, x, &r.main, &r.enhancer).unwrap_or(0.0)
                        - crate::game::expected_preference(est, x, &r.main, &r.enhancer).unwrap_or(0.0))
                })
                .sum();
            let den: f64 = lambda
                + trace.records[..t]
                    .iter()
                    .map(|s| expected_sq_distance(cfg, p, est, &s.main, &s.enhancer))
                    .sum::<f64>();
            ratio = ratio.max(num.abs() / den.sqrt());
        }
        let term = (ratio * ratio).min(1.0);
        sum += term;
        terms.push(term);
        cumulative.push(sum);
    }
    Ok(EluderDiagnostic { terms, cumulative })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles::{bt_oracle, cyclic_oracle, RewardTable};

    fn rps_class() -> (GameConfig, FiniteClass) {
        let cfg = GameConfig::uniform(1, 3, 1.0).unwrap();
        let a = cfg.actions().clone();
        let members = vec![
            cyclic_oracle(1, 3, 0.75).unwrap(),
            bt_oracle(&RewardTable::new(vec![vec![1.0, 0.0, -1.0]]).unwrap()),
            PreferenceFunction::indifferent(&a),
            cyclic_oracle(1, 3, 0.95).unwrap(),
        ];
        (cfg, FiniteClass::new(members).unwrap())
    }

    #[test]
    fn hyperparams_examples() {
        let h = theorem2_hyperparams(8, 0.1, 0.1, |_| 1.0).unwrap();
        assert_eq!(h.iterations, 2);
        assert_eq!(h.batch_size, 20_766);
        assert!((h.beta * h.beta - h.lambda).abs() < 1e-15);
        let h = theorem2_hyperparams(8, 0.1, 0.1, |n| (n as f64).ln() + 3.0).unwrap();
        assert!(h.iterations as f64 >= 2.0 * ((h.iterations as f64).ln() + 3.0));
        assert!(((h.iterations - 1) as f64) < 2.0 * (((h.iterations - 1) as f64).ln() + 3.0));
        assert!(theorem2_hyperparams(8, 0.1, 1.5, |_| 1.0).is_err());
    }

    #[test]
    fn singleton_class_is_exact_at_the_first_step() {
        let (cfg, class) = rps_class();
        let single = class.subset(&[0]).unwrap();
        let online = OnlineConfig::new(2, 50, 1.0, 1.0, EnhancerMode::MaxUncertainty, 3).unwrap();
        let trace = oelhf_run(class.get(0), &single, &cfg, &online).unwrap();
        assert!(trace.realizable);
        assert!(trace.records[0].duality_gap <= 1e-8);
        assert_eq!(trace.records.len(), 2);
        assert!(trace.records.iter().all(|r| r.batch.len() == 50));
        let e = eluder_diagnostic(&trace, &single, &cfg, 1.0).unwrap();
        assert!(e.terms.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn runs_are_deterministic() {
        let (cfg, class) = rps_class();
        for mode in [EnhancerMode::MaxUncertainty, EnhancerMode::KlRestricted, EnhancerMode::BestOfN(4)] {
            let online = OnlineConfig::new(3, 40, 0.5, 1.0, mode, 11).unwrap();
            let a = oelhf_run(class.get(3), &class, &cfg, &online).unwrap();
            let b = oelhf_run(class.get(3), &class, &cfg, &online).unwrap();
            assert_eq!(a, b);
            let e = eluder_diagnostic(&a, &class, &cfg, 0.5).unwrap();
            assert!(e.cumulative.windows(2).all(|w| w[1] >= w[0]));
            // the first estimate has no data and defaults to member 0
            assert_eq!(a.records[0].p_hat, 0);
        }
    }

    #[test]
    fn checkpoint_selection() {
        let (cfg, class) = rps_class();
        let online = OnlineConfig::new(1, 10, 1.0, 1.0, EnhancerMode::MaxUncertainty, 0).unwrap();
        let mut trace = oelhf_run(class.get(1), &class, &cfg, &online).unwrap();
        assert_eq!(select_checkpoint(&trace, class.get(1), &cfg).unwrap().0, 1);
        let mut second = trace.records[0].clone();
        second.t = 2;
        second.main = solve_nash_with(&cfg, class.get(1), &SolverOptions::default()).unwrap().policy;
        trace.records.push(second);
        let (i, _) = select_checkpoint(&trace, class.get(1), &cfg).unwrap();
        assert_eq!(i, 2);
        let gaps: Vec<f64> = trace
            .records
            .iter()
            .map(|r| duality_gap(&cfg, class.get(1), &r.main, &r.main).unwrap())
            .collect();
        assert!(gaps[i - 1] <= gaps.iter().copied().fold(f64::INFINITY, f64::min) + 1e-10);
        let (j, _) = select_checkpoint_sampled(&trace, class.get(1), class.get(1), &cfg, 4000, 1).unwrap();
        assert_eq!(j, 2);
    }

    #[test]
    fn invalid_configs() {
        assert!(OnlineConfig::new(0, 1, 1.0, 1.0, EnhancerMode::MaxUncertainty, 0).is_err());
        assert!(OnlineConfig::new(1, 1, 0.0, 1.0, EnhancerMode::MaxUncertainty, 0).is_err());
        assert!(OnlineConfig::new(1, 1, 1.0, 1.0, EnhancerMode::BestOfN(3), 0).is_err());
    }
}
