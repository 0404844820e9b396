//! The acceptance suite: eleven numbered criteria run with pinned seeds.

use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::RngCore;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::game::{
    best_response_value, duality_gap, expected_preference, gibbs_best_response, kl_row, ActionSpace, GameConfig, Policy,
    PreferenceFunction, PromptSpace, Sign,
};
use crate::offline::{coverage_coefficient, coverage_tilde, pelhf_bonus_tally, pelhf_version_space_tally, OfflineConfig};
use crate::online::{
    best_of_n_kl_bound, best_of_n_row, oelhf_run, online_suboptimality_bound, EnhancerMode, OnlineConfig,
};
use crate::oracles::{bt_oracle, collect, cyclic_oracle, transitivity_check, RewardTable, Transitivity};
use crate::prefclass::{
    covariance_update, expected_sq_distance, fit_logistic, linear_bt_bonus, logistic_log_likelihood, sq_distance_tally,
    Covariance, FitOptions, LinearBTClass, WeightedComparison,
};
use crate::rng;
use crate::solver::{ipo_solve, nash_players_coincide_check, solve_nash};

use super::commands::{collect_command, experiment_command, solve_nash_command, CollectArgs, ExperimentKind, Overrides};
use super::format::{finite_class_to_toml, Instance};
use super::instances::{
    bt_two_action_instance, confidence_setup, pinned_instances, random_policy, random_simplex, rps_class, rps_instance,
    uniform_in,
};

/// Seed family for every random draw made by the suite itself.
const SUITE_SEED: u64 = 0x00AC_CE97;

/// Tolerances the suite checks against.
///
/// `certificate` multiplies every deterministic tolerance (duality gaps,
/// policy distances, identities). Shrinking it while the solvers keep their
/// own stopping rules makes certificate checks fail, which is how the
/// negative control exercises the suite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    pub certificate: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self { certificate: 1.0 }
    }
}

impl Thresholds {
    /// Certificate tolerances tightened by `1e-4`.
    pub fn tampered() -> Self {
        Self { certificate: 1e-4 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriterionResult {
    pub id: usize,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl fmt::Display for CriterionResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:>2}  {}  {:<26} {} [{:.2} s]",
            self.id,
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.detail,
            self.seconds
        )
    }
}

fn run(id: usize, name: &'static str, f: impl FnOnce() -> Result<(bool, String)>) -> CriterionResult {
    let start = Instant::now();
    let (passed, detail) = match f() {
        Ok(r) => r,
        Err(e) => (false, format!("error: {e}")),
    };
    CriterionResult {
        id,
        name,
        passed,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    }
}

fn frequency(hits: usize, total: usize) -> f64 {
    hits as f64 / total as f64
}

/// Criterion 1: nash certificates on the pinned instances, plus a brute-force grid on the two-action instance.
pub fn nash_certificate(th: &Thresholds) -> CriterionResult {
    run(1, "nash certificate", || {
        let tol = 1e-8;
        let mut worst_gap: f64 = 0.0;
        let mut slowest: f64 = 0.0;
        let mut failures = 0;
        for (cfg, p) in pinned_instances()? {
            let start = Instant::now();
            let r = solve_nash(&cfg, &p, tol, 100_000);
            let secs = start.elapsed().as_secs_f64();
            slowest = slowest.max(secs);
            match r {
                Ok(r) => {
                    let gap = duality_gap(&cfg, &p, &r.policy, &r.policy)?;
                    worst_gap = worst_gap.max(gap);
                    if !(r.converged && gap <= tol * th.certificate && secs < 1.0) {
                        failures += 1;
                    }
                }
                Err(_) => failures += 1,
            }
        }
        let (cfg, p) = bt_two_action_instance()?;
        let nash = solve_nash(&cfg, &p, 1e-12, 100_000)?.policy;
        let steps = 100_000;
        let mut best = (f64::INFINITY, 0.0);
        for i in 0..=steps {
            let q = i as f64 / steps as f64;
            let pi = Policy::new(vec![vec![q, 1.0 - q]])?;
            let gap = duality_gap(&cfg, &p, &pi, &pi)?;
            if gap < best.0 {
                best = (gap, q);
            }
        }
        let grid_err = (nash.row(0)[0] - best.1).abs();
        let passed = failures == 0 && grid_err <= 1e-4 * th.certificate;
        Ok((
            passed,
            format!("{failures} failures of 20; max gap {worst_gap:.2e}; slowest {slowest:.3} s; grid distance {grid_err:.2e}"),
        ))
    })
}

/// Criterion 2: the two players' equilibrium policies coincide; the cyclic game's equilibrium is uniform.
pub fn symmetric_nash(th: &Thresholds) -> CriterionResult {
    run(2, "symmetric nash", || {
        let mut worst: f64 = 0.0;
        for (cfg, p) in pinned_instances()? {
            worst = worst.max(nash_players_coincide_check(&cfg, &p, 1e-10)?.distance);
        }
        let (cfg, p) = rps_instance(1.0)?;
        let rps = solve_nash(&cfg, &p, 1e-12, 100_000)?.policy;
        let uniform = Policy::uniform(cfg.actions());
        let rps_err = rps.max_abs_diff(&uniform);
        let passed = worst <= 1e-7 * th.certificate && rps_err <= 1e-8 * th.certificate;
        Ok((passed, format!("max player distance {worst:.2e}; cyclic distance from uniform {rps_err:.2e}")))
    })
}

/// `E_x[<score, p> - KL(p | pi0) / eta]`.
fn regularized_value(cfg: &GameConfig, score: &[Vec<f64>], p: &Policy) -> Result<f64> {
    let mut v = 0.0;
    for (x, &w) in cfg.d0().iter().enumerate() {
        let lin: f64 = score[x].iter().zip(p.row(x)).map(|(s, q)| s * q).sum();
        v += w * (lin - kl_row(p.row(x), cfg.pi0().row(x), x)? / cfg.eta());
    }
    Ok(v)
}

fn random_config(g: &mut impl RngCore, max_prompts: usize, max_actions: usize, eta: f64) -> Result<GameConfig> {
    let nx = 1 + (g.next_u64() % max_prompts as u64) as usize;
    let counts = (0..nx).map(|_| 2 + (g.next_u64() % (max_actions as u64 - 1)) as usize).collect();
    let actions = ActionSpace::new(counts)?;
    let d0 = random_simplex(g, nx, 0.05);
    let pi0 = random_policy(g, &actions, 0.05);
    GameConfig::new(PromptSpace::new(d0)?, actions, pi0, eta)
}

/// Criterion 3: the value gap to the Gibbs response is exactly a KL term, and no random point beats it.
pub fn gibbs_identities(th: &Thresholds) -> CriterionResult {
    run(3, "gibbs identities", || {
        let mut worst: f64 = 0.0;
        let mut beaten = 0usize;
        for i in 0..1000u64 {
            let mut g = rng::stream(SUITE_SEED ^ 3, i);
            let eta = (uniform_in(&mut g, -3.0, 3.0)).exp();
            let cfg = random_config(&mut g, 3, 6, eta)?;
            let score: Vec<Vec<f64>> = cfg.actions().counts().iter().map(|&k| (0..k).map(|_| rng::uniform(&mut g)).collect()).collect();
            let pi = random_policy(&mut g, cfg.actions(), 0.0);
            let gibbs = Policy::new((0..cfg.num_prompts()).map(|x| gibbs_best_response(&cfg, x, &score[x], Sign::Max)).collect())?;
            let mut kl = 0.0;
            for (x, &w) in cfg.d0().iter().enumerate() {
                kl += w * kl_row(pi.row(x), gibbs.row(x), x)?;
            }
            let lhs = regularized_value(&cfg, &score, &pi)? - regularized_value(&cfg, &score, &gibbs)?;
            worst = worst.max((lhs + kl / eta).abs());
            if i < 20 {
                let best = regularized_value(&cfg, &score, &gibbs)?;
                for _ in 0..10_000 {
                    let q = random_policy(&mut g, cfg.actions(), 0.0);
                    if regularized_value(&cfg, &score, &q)? > best + 1e-12 {
                        beaten += 1;
                    }
                }
            }
        }
        let passed = worst <= 1e-8 * th.certificate && beaten == 0;
        Ok((passed, format!("max identity error {worst:.2e}; random points beating the Gibbs response {beaten} of 200000")))
    })
}

/// Criterion 4: the truth stays inside the likelihood confidence set.
pub fn confidence_set(_th: &Thresholds) -> CriterionResult {
    run(4, "confidence set", || {
        let (cfg, class) = confidence_setup()?;
        let truth = class.get(class.truth.expect("pinned truth"));
        let radius = (class.len() as f64 / 0.1).ln();
        let hits = (0..500u64)
            .into_par_iter()
            .map(|s| -> Result<bool> {
                let d = collect(&cfg, cfg.pi0(), cfg.pi0(), truth, 200, rng::derive_seed(SUITE_SEED ^ 4, s), ["reference", "reference"])?;
                let t = d.tally(cfg.actions())?;
                let p_hat = class.get(class.mle_tally(&t));
                Ok(sq_distance_tally(p_hat, truth, &t) <= radius)
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .filter(|&h| h)
            .count();
        let f = frequency(hits, 500);
        Ok((f >= 0.85, format!("frequency {f:.3} (need 0.85)")))
    })
}

/// Criterion 5: the coverage bounds of both offline algorithms hold with the stated frequency.
pub fn offline_bounds(_th: &Thresholds) -> CriterionResult {
    run(5, "offline coverage bounds", || {
        let (cfg, class) = confidence_setup()?;
        let truth = class.get(class.truth.expect("pinned truth"));
        let target = solve_nash(&cfg, truth, 1e-12, 100_000)?.policy;
        let off = OfflineConfig::confidence(class.len(), 0.1)?;
        let n = 200;
        let pd = (cfg.pi0(), cfg.pi0());
        let outcomes = (0..200u64)
            .into_par_iter()
            .map(|s| -> Result<(bool, bool)> {
                let d = collect(&cfg, cfg.pi0(), cfg.pi0(), truth, n, rng::derive_seed(SUITE_SEED ^ 5, s), ["reference", "reference"])?;
                let t = d.tally(cfg.actions())?;
                let vs = pelhf_version_space_tally(&class, &t, &cfg, &off)?;
                let est = class.get(vs.p_hat);
                let sub = 0.5 - best_response_value(&cfg, truth, &vs.policy, Sign::Min)?;
                let c = coverage_coefficient(&class, est, &target, pd, &cfg)?;
                let vs_ok = sub <= 4.0 * off.beta * (c.value() / n as f64).sqrt();
                let bonus = pelhf_bonus_tally(&class, &t, &cfg, &off)?;
                let sub = 0.5 - best_response_value(&cfg, truth, &bonus.policy, Sign::Min)?;
                let c = coverage_tilde(&class, class.get(bonus.p_hat), &target, pd, &cfg)?;
                Ok((vs_ok, sub <= 4.0 * off.beta * (c.value() / n as f64).sqrt()))
            })
            .collect::<Result<Vec<_>>>()?;
        let f1 = frequency(outcomes.iter().filter(|o| o.0).count(), 200);
        let f3 = frequency(outcomes.iter().filter(|o| o.1).count(), 200);
        Ok((
            f1 >= 0.9 && f3 >= 0.9,
            format!("version space {f1:.3}, bonus {f3:.3} (need 0.90)"),
        ))
    })
}

/// Criterion 6: online learning on the cyclic game: more data per batch helps, the bound holds,
/// and the singleton class is solved exactly at the first iteration.
pub fn online_guarantee(th: &Thresholds) -> CriterionResult {
    run(6, "online guarantee", || {
        let (cfg, truth) = rps_instance(1.0)?;
        let class = rps_class()?;
        let (iterations, delta, seeds) = (3, 0.1, 50u64);
        let params = |m: usize| {
            let t = iterations as f64;
            let lambda = 2.0 * t * (2.0 * t * class.len() as f64 / delta).ln() / m as f64;
            (lambda, lambda.sqrt())
        };
        let runs = (0..seeds)
            .into_par_iter()
            .map(|s| -> Result<(f64, f64)> {
                let seed = rng::derive_seed(SUITE_SEED ^ 6, s);
                let mut best = [0.0; 2];
                for (slot, m) in [200, 2000].into_iter().enumerate() {
                    let (lambda, beta) = params(m);
                    let online = OnlineConfig::new(iterations, m, lambda, beta, EnhancerMode::MaxUncertainty, seed)?;
                    best[slot] = oelhf_run(&truth, &class, &cfg, &online)?.min_suboptimality();
                }
                Ok((best[0], best[1]))
            })
            .collect::<Result<Vec<_>>>()?;
        let improved = frequency(runs.iter().filter(|r| r.1 <= r.0).count(), seeds as usize);
        let b200 = online_suboptimality_bound(iterations, 200, class.len(), delta);
        let b2000 = online_suboptimality_bound(iterations, 2000, class.len(), delta);
        let held200 = frequency(runs.iter().filter(|r| r.0 <= b200).count(), seeds as usize);
        let held2000 = frequency(runs.iter().filter(|r| r.1 <= b2000).count(), seeds as usize);
        let single = class.subset(&[class.truth.expect("pinned truth")])?;
        let (lambda, beta) = params(200);
        let online = OnlineConfig::new(1, 200, lambda, beta, EnhancerMode::MaxUncertainty, SUITE_SEED)?;
        let gap = oelhf_run(&truth, &single, &cfg, &online)?.records[0].duality_gap;
        let mean = |f: fn(&(f64, f64)) -> f64| runs.iter().map(f).sum::<f64>() / seeds as f64;
        let (mean200, mean2000) = (mean(|r| r.0), mean(|r| r.1));
        let passed = improved >= 0.8 && held200 >= 0.85 && held2000 >= 0.85 && gap <= 1e-8 * th.certificate;
        Ok((
            passed,
            format!(
                "mean best gap {mean200:.2e} (m=200), {mean2000:.2e} (m=2000); larger batch no worse {improved:.2}; bound held {held200:.2} (m=200), {held2000:.2} (m=2000); singleton gap {gap:.2e}"
            ),
        ))
    })
}

/// Criterion 7: best-of-n never moves further than `ln n - (n-1)/n` in KL.
pub fn best_of_n_kl(_th: &Thresholds) -> CriterionResult {
    run(7, "best-of-n KL bound", || {
        let mut checked = 0;
        let mut violations = 0;
        let mut tightest = f64::INFINITY;
        for k in 2..=6usize {
            for i in 0..200u64 {
                let mut g = rng::stream(SUITE_SEED ^ 7, (k as u64) << 32 | i);
                let rewards: Vec<f64> = (0..k)
                    .map(|_| {
                        let r = uniform_in(&mut g, -2.0, 2.0);
                        // every third instance has tied rewards
                        if i % 3 == 0 {
                            r.round()
                        } else {
                            r
                        }
                    })
                    .collect();
                let rank = bt_oracle(&RewardTable::new(vec![rewards])?);
                let mut row = random_simplex(&mut g, k, 0.0);
                if i % 4 == 1 {
                    let drop = (g.next_u64() % k as u64) as usize;
                    row[drop] = 0.0;
                    let s: f64 = row.iter().sum();
                    row.iter_mut().for_each(|v| *v /= s);
                }
                for n in [2, 4, 8] {
                    let bon = best_of_n_row(&row, &rank, 0, n)?;
                    let kl = kl_row(&bon, &row, 0)?;
                    let bound = best_of_n_kl_bound(n);
                    checked += 1;
                    if kl > bound {
                        violations += 1;
                    }
                    tightest = tightest.min(bound - kl);
                }
            }
        }
        Ok((violations == 0, format!("{violations} violations in {checked} cases; smallest slack {tightest:.3e}")))
    })
}

/// Criterion 8: self-play IPO lands on the Nash policy.
pub fn ipo_equivalence(th: &Thresholds) -> CriterionResult {
    run(8, "ipo equivalence", || {
        let mut worst_dist: f64 = 0.0;
        let mut worst_gap: f64 = 0.0;
        for (cfg, p) in pinned_instances()? {
            let ipo = match ipo_solve(&cfg, &p, 1e-10, 100_000) {
                Ok(r) => r,
                Err(Error::NonConvergence { best, .. }) => *best,
                Err(e) => return Err(e),
            };
            let nash = solve_nash(&cfg, &p, 1e-12, 100_000)?.policy;
            worst_dist = worst_dist.max(ipo.policy.max_abs_diff(&nash));
            worst_gap = worst_gap.max(duality_gap(&cfg, &p, &ipo.policy, &ipo.policy)?);
        }
        let passed = worst_dist <= 1e-3 * th.certificate && worst_gap <= 1e-3 * th.certificate;
        Ok((passed, format!("max distance {worst_dist:.2e}; max gap {worst_gap:.2e}")))
    })
}

fn binary_entropy(p: f64) -> f64 {
    let h = |q: f64| if q > 0.0 { -q * q.ln() } else { 0.0 };
    h(p) + h(1.0 - p)
}

/// Criterion 9: no Bradley-Terry model fits the cyclic game: its best population log
/// loss stays at least 0.01 nats above the truth's.
pub fn intransitivity_separation(_th: &Thresholds) -> CriterionResult {
    run(9, "intransitivity separation", || {
        let truth = cyclic_oracle(1, 3, 0.75)?;
        let bound = 5.0;
        let class = LinearBTClass::new(2, vec![vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]]], bound)?;
        let w = 1.0 / 9.0;
        let mut obs = Vec::new();
        let mut truth_loss = 0.0;
        for a in 0..3 {
            for b in 0..3 {
                let p = truth.value(0, a, b);
                obs.push(WeightedComparison {
                    diff: class.diff(0, a, b),
                    weight: w,
                    wins: w * p,
                });
                truth_loss += w * binary_entropy(p);
            }
        }
        let fit = fit_logistic(&obs, 2, bound, &FitOptions { tol: 1e-12, max_iter: 100_000 })?;
        let mut best_loss = -fit.log_likelihood;
        // a coarse grid over the ball as a second route to the minimum
        let steps = 200;
        for i in 0..=steps {
            for j in 0..=steps {
                let theta = [bound * (2.0 * i as f64 / steps as f64 - 1.0), bound * (2.0 * j as f64 / steps as f64 - 1.0)];
                if theta[0].hypot(theta[1]) <= bound {
                    best_loss = best_loss.min(-logistic_log_likelihood(&obs, &theta));
                }
            }
        }
        let sep = best_loss - truth_loss;
        let cycle = matches!(transitivity_check(&truth, 0.0), Transitivity::Cycle { ref actions, .. } if actions.len() == 3);
        Ok((
            sep >= 0.01 && cycle,
            format!("best BT loss {best_loss:.6}, truth loss {truth_loss:.6}, separation {sep:.4} nats; cycle found: {cycle}"),
        ))
    })
}

fn mean_preference(cfg: &GameConfig, p: &PreferenceFunction, p1: &Policy, p2: &Policy) -> Result<f64> {
    let mut v = 0.0;
    for (x, &w) in cfg.d0().iter().enumerate() {
        v += w * expected_preference(p, x, p1, p2)?;
    }
    Ok(v)
}

/// Criterion 10: the linear Bradley-Terry ellipsoid bonus, scaled by the in-sample
/// term, dominates every realized preference gap on a grid of parameters.
pub fn linear_bonus_validity(_th: &Thresholds) -> CriterionResult {
    run(10, "linear bonus validity", || {
        let (radii, angles) = (25, 40);
        let results = (0..100u64)
            .into_par_iter()
            .map(|i| -> Result<(usize, f64)> {
                let mut g = rng::stream(SUITE_SEED ^ 10, i);
                let cfg = random_config(&mut g, 2, 4, 1.0)?;
                let features = cfg
                    .actions()
                    .counts()
                    .iter()
                    .map(|&k| {
                        (0..k)
                            .map(|_| {
                                let r = rng::uniform(&mut g).sqrt();
                                let a = std::f64::consts::TAU * rng::uniform(&mut g);
                                vec![r * a.cos(), r * a.sin()]
                            })
                            .collect()
                    })
                    .collect();
                let bound = uniform_in(&mut g, 0.5, 3.0);
                let lambda = uniform_in(&mut g, 0.1, 2.0);
                let class = LinearBTClass::new(2, features, bound)?;
                let r = bound * rng::uniform(&mut g).sqrt();
                let a = std::f64::consts::TAU * rng::uniform(&mut g);
                let p_hat = class.preference(&[r * a.cos(), r * a.sin()]);
                let mut cov = Covariance::initial(2, lambda, bound)?;
                let history: Vec<(Policy, Policy)> = (0..1 + g.next_u64() % 5)
                    .map(|_| (random_policy(&mut g, cfg.actions(), 0.0), random_policy(&mut g, cfg.actions(), 0.0)))
                    .collect();
                for (h1, h2) in &history {
                    cov = covariance_update(&cov, &class, &cfg, h1, h2)?;
                }
                let p1 = random_policy(&mut g, cfg.actions(), 0.0);
                let p2 = random_policy(&mut g, cfg.actions(), 0.0);
                let bonus = linear_bt_bonus(&cov, &class, &cfg, &p1, &p2)?;
                let base = mean_preference(&cfg, &p_hat, &p1, &p2)?;
                let mut violations = 0;
                let mut worst: f64 = 0.0;
                for ri in 1..=radii {
                    for ai in 0..angles {
                        let r = bound * ri as f64 / radii as f64;
                        let a = std::f64::consts::TAU * ai as f64 / angles as f64;
                        let p = class.preference(&[r * a.cos(), r * a.sin()]);
                        let gap = (mean_preference(&cfg, &p, &p1, &p2)? - base).abs();
                        let in_sample = lambda
                            + history
                                .iter()
                                .map(|(h1, h2)| expected_sq_distance(&cfg, &p, &p_hat, h1, h2))
                                .sum::<f64>();
                        let rhs = bonus * in_sample.sqrt();
                        if gap > rhs {
                            violations += 1;
                        }
                        if gap > 0.0 {
                            worst = worst.max(gap / rhs);
                        }
                    }
                }
                Ok((violations, worst))
            })
            .collect::<Result<Vec<_>>>()?;
        let violations: usize = results.iter().map(|r| r.0).sum();
        let instances = results.iter().filter(|r| r.0 > 0).count();
        let worst = results.iter().map(|r| r.1).fold(0.0, f64::max);
        Ok((
            violations == 0,
            format!("{violations} violations of 100000 ({instances} instances); largest gap/bound ratio {worst:.3}"),
        ))
    })
}

fn write_fixtures(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let (cfg, class) = confidence_setup()?;
    let truth = class.get(class.truth.expect("pinned truth")).clone();
    let conf = Instance {
        cfg,
        preference: Some(truth),
    };
    std::fs::write(dir.join("conf.toml"), conf.to_toml())?;
    std::fs::write(dir.join("conf_class.toml"), finite_class_to_toml(&class))?;
    let (cfg, p) = rps_instance(1.0)?;
    std::fs::write(dir.join("rps.toml"), Instance { cfg, preference: Some(p) }.to_toml())?;
    std::fs::write(dir.join("rps_class.toml"), finite_class_to_toml(&rps_class()?))?;
    let offline = |block: &str, out: &str| {
        format!(
            "instance = \"conf.toml\"\nclass = \"conf_class.toml\"\noracle = \"class:3\"\nreplicates = 4\nseed = 11\noutput = \"{out}\"\n\n[{block}]\nn = 200\n"
        )
    };
    std::fs::write(dir.join("offline_vs.toml"), offline("offline_vs", "offline_vs.jsonl"))?;
    std::fs::write(dir.join("offline_bonus.toml"), offline("offline_bonus", "offline_bonus.jsonl"))?;
    std::fs::write(
        dir.join("online.toml"),
        "instance = \"rps.toml\"\nclass = \"rps_class.toml\"\noracle = \"instance\"\nreplicates = 2\nseed = 5\noutput = \"online.jsonl\"\n\n[online]\niterations = 2\nbatch_size = 100\nenhancer = \"kl_restricted\"\n",
    )?;
    std::fs::write(
        dir.join("sweep.toml"),
        "instance = \"conf.toml\"\nclass = \"conf_class.toml\"\noracle = \"instance\"\nreplicates = 2\noutput = \"sweep.jsonl\"\n\n[offline_bonus]\nn = 50\n\n[sweep]\nparameter = \"n\"\nvalues = [50, 100]\n",
    )?;
    Ok(())
}

/// Stdout plus every file the command wrote.
fn capture(dir: &Path, stdout: String, outputs: &[&str]) -> Result<String> {
    let mut s = stdout;
    for o in outputs {
        for ext in ["jsonl", "csv"] {
            s.push_str(&std::fs::read_to_string(dir.join(o).with_extension(ext))?);
        }
    }
    Ok(s)
}

fn determinism_runs(dir: &Path) -> Result<Vec<(&'static str, String)>> {
    let mut out = Vec::new();
    out.push(("solve-nash", solve_nash_command(&dir.join("conf.toml"), None, Some(1e-10), None)?.stdout));
    let args = CollectArgs {
        instance: dir.join("conf.toml"),
        oracle: "instance".into(),
        n: 300,
        seed: 9,
        class: None,
        behavior: ["reference".into(), "uniform".into()],
    };
    out.push(("collect", collect_command(&args)?.stdout));
    let none = Overrides::default();
    for (name, file, kind) in [
        ("offline (version space)", "offline_vs", ExperimentKind::Offline),
        ("offline (bonus)", "offline_bonus", ExperimentKind::Offline),
        ("online", "online", ExperimentKind::Online),
        ("sweep", "sweep", ExperimentKind::Sweep),
    ] {
        let r = experiment_command(&dir.join(file).with_extension("toml"), kind, &none)?;
        out.push((name, capture(dir, r.stdout, &[file])?));
    }
    Ok(out)
}

fn scratch_dir() -> PathBuf {
    std::env::temp_dir().join(format!("prefgame-accept-{}", std::process::id()))
}

/// Criterion 11: every subcommand except `accept` gives byte-identical output when re-run.
pub fn determinism(_th: &Thresholds) -> CriterionResult {
    run(11, "determinism", || {
        let a_dir = scratch_dir().join("a");
        let b_dir = scratch_dir().join("b");
        let result = (|| {
            write_fixtures(&a_dir)?;
            write_fixtures(&b_dir)?;
            let a = determinism_runs(&a_dir)?;
            let b = determinism_runs(&b_dir)?;
            let differing: Vec<&str> = a.iter().zip(&b).filter(|(x, y)| x.1 != y.1).map(|(x, _)| x.0).collect();
            let bytes: usize = a.iter().map(|x| x.1.len()).sum();
            Ok((
                differing.is_empty(),
                if differing.is_empty() {
                    format!("{} commands, {bytes} bytes identical across runs", a.len())
                } else {
                    format!("outputs differ for {}", differing.join(", "))
                },
            ))
        })();
        let _ = std::fs::remove_dir_all(scratch_dir());
        result
    })
}

/// Runs every criterion in order.
pub fn run_all(th: &Thresholds) -> Vec<CriterionResult> {
    let criteria: [fn(&Thresholds) -> CriterionResult; 11] = [
        nash_certificate,
        symmetric_nash,
        gibbs_identities,
        confidence_set,
        offline_bounds,
        online_guarantee,
        best_of_n_kl,
        ipo_equivalence,
        intransitivity_separation,
        linear_bonus_validity,
        determinism,
    ];
    criteria.iter().map(|c| c(th)).collect()
}
