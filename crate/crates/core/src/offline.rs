//! Offline pessimistic learning from a fixed preference dataset, and the
//! coverage diagnostics that bound its suboptimality.

use crate::error::{Error, Result};
use crate::game::{
    best_response_min, best_response_value, row_scores, tilt, GameConfig, PayoffTable, Policy,
    PreferenceFunction, Sign,
};
use crate::oracles::{PreferenceDataset, Tally};
use crate::prefclass::{expected_sq_distance, pointwise_bonus_table, FiniteClass};
use crate::solver::{solve_nash_with, solve_saddle, SolverOptions};

/// Settings for the outer maximization over the learner's policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AscentOptions {
    pub max_iter: usize,
    /// Stop when the objective moved less than `tol` over the last `window` iterations.
    pub tol: f64,
    pub window: usize,
}

impl Default for AscentOptions {
    fn default() -> Self {
        Self {
            max_iter: 50_000,
            tol: 1e-9,
            window: 100,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OfflineConfig {
    pub beta: f64,
    pub lambda: f64,
    pub delta: f64,
    pub solver: SolverOptions,
    pub ascent: AscentOptions,
}

impl OfflineConfig {
    pub fn new(beta: f64, lambda: f64, delta: f64) -> Result<Self> {
        if !(beta >= 0.0) {
            return Err(Error::InvalidParameter(format!("beta must be nonnegative, got {beta}")));
        }
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!("lambda must be positive, got {lambda}")));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::InvalidParameter(format!("delta must lie in (0, 1), got {delta}")));
        }
        Ok(Self {
            beta,
            lambda,
            delta,
            solver: SolverOptions::default(),
            ascent: AscentOptions::default(),
        })
    }

    /// `lambda = ln(|class| / delta)` and `beta^2 = 2 lambda`.
    pub fn confidence(class_size: usize, delta: f64) -> Result<Self> {
        let lambda = (class_size as f64 / delta).ln();
        Self::new((2.0 * lambda).sqrt(), lambda, delta)
    }
}

/// Result of an offline algorithm.
#[derive(Debug, Clone, PartialEq)]
pub struct OfflineOutcome {
    pub policy: Policy,
    /// Index of the maximum-likelihood member.
    pub p_hat: usize,
    /// Members kept by the version space (all members for the bonus variant).
    pub version_space: Vec<usize>,
    /// The algorithm's own conservative value of `policy` against a best-responding opponent.
    pub pessimistic_value: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// `min_{P in members} min_{p2} J_P(p1, p2)` with the index of the first minimizing member.
pub fn pessimistic_value(cfg: &GameConfig, class: &FiniteClass, members: &[usize], p1: &Policy) -> Result<(f64, usize)> {
    let mut best = (f64::INFINITY, usize::MAX);
    for &i in members {
        let v = best_response_value(cfg, class.get(i), p1, Sign::Min)?;
        if v < best.0 {
            best = (v, i);
        }
    }
    if best.1 == usize::MAX {
        return Err(Error::InvalidParameter("empty version space".into()));
    }
    Ok(best)
}

/// Maximizer of the version-space pessimistic value.
///
/// If the Nash policy of some member is already unbeatable for every other
/// member it is returned directly (it maximizes the strictly concave value of
/// that member, which upper-bounds the objective). Otherwise dual averaging
/// runs on the objective: the supergradient at the worst member and its
/// best response is averaged, and the next iterate is the Gibbs policy of the
/// average. The best iterate seen is returned.
pub fn maximize_pessimistic_value(
    cfg: &GameConfig,
    class: &FiniteClass,
    members: &[usize],
    solver: &SolverOptions,
    ascent: &AscentOptions,
) -> Result<(Policy, f64, usize, bool)> {
    for &j in members {
        let nash = solve_nash_with(cfg, class.get(j), solver)?;
        let own = best_response_value(cfg, class.get(j), &nash.policy, Sign::Min)?;
        let (worst, _) = pessimistic_value(cfg, class, members, &nash.policy)?;
        if worst >= own - 1e-12 {
            return Ok((nash.policy, worst, 0, true));
        }
    }
    let n = cfg.num_prompts();
    let mut sum: Vec<Vec<f64>> = (0..n).map(|x| vec![0.0; cfg.num_actions(x)]).collect();
    let mut pi = cfg.pi0().clone();
    let (mut value, mut arg) = pessimistic_value(cfg, class, members, &pi)?;
    let mut best = (value, pi.clone());
    let mut trace = Vec::with_capacity(ascent.max_iter + 1);
    trace.push(value);
    for k in 1..=ascent.max_iter {
        let p = class.get(arg);
        let br = best_response_min(cfg, p, &pi);
        for (x, acc) in sum.iter_mut().enumerate() {
            for (s, v) in acc.iter_mut().zip(row_scores(p, x, br.row(x))) {
                *s += v;
            }
        }
        let kf = k as f64;
        pi = Policy::from_rows(
            (0..n)
                .map(|x| {
                    let avg: Vec<f64> = sum[x].iter().map(|s| s / kf).collect();
                    tilt(cfg.pi0().row(x), &avg, cfg.eta())
                })
                .collect(),
        );
        (value, arg) = pessimistic_value(cfg, class, members, &pi)?;
        if value > best.0 {
            best = (value, pi.clone());
        }
        trace.push(value);
        if k >= ascent.window && (value - trace[k - ascent.window]).abs() < ascent.tol {
            return Ok((best.1, best.0, k, true));
        }
    }
    Ok((best.1, best.0, ascent.max_iter, false))
}

/// Pessimism over a version space: fit the MLE, keep members within
/// `beta^2 / 2` squared in-sample distance, and maximize the worst-case value.
pub fn pelhf_version_space(
    class: &FiniteClass,
    d: &PreferenceDataset,
    cfg: &GameConfig,
    off: &OfflineConfig,
) -> Result<OfflineOutcome> {
    cfg.check_payoff(class.get(0))?;
    let t = d.tally(cfg.actions())?;
    pelhf_version_space_tally(class, &t, cfg, off)
}

pub fn pelhf_version_space_tally(class: &FiniteClass, t: &Tally, cfg: &GameConfig, off: &OfflineConfig) -> Result<OfflineOutcome> {
    let p_hat = class.mle_tally(t);
    let vs = class.version_space_tally(p_hat, t, off.beta);
    let (policy, value, iterations, converged) = maximize_pessimistic_value(cfg, class, &vs, &off.solver, &off.ascent)?;
    Ok(OfflineOutcome {
        policy,
        p_hat,
        version_space: vs,
        pessimistic_value: value,
        iterations,
        converged,
    })
}

/// Pessimism by a pointwise bonus: solve the game whose payoff is the MLE
/// table minus `beta` times the bonus, and return the maximizing player's policy.
pub fn pelhf_bonus(class: &FiniteClass, d: &PreferenceDataset, cfg: &GameConfig, off: &OfflineConfig) -> Result<OfflineOutcome> {
    cfg.check_payoff(class.get(0))?;
    let t = d.tally(cfg.actions())?;
    pelhf_bonus_tally(class, &t, cfg, off)
}

pub fn pelhf_bonus_tally(class: &FiniteClass, t: &Tally, cfg: &GameConfig, off: &OfflineConfig) -> Result<OfflineOutcome> {
    let p_hat = class.mle_tally(t);
    let penalized = penalized_payoff(class, p_hat, t, off)?;
    let saddle = solve_saddle(cfg, &penalized, &off.solver, None)?;
    let value = best_response_value(cfg, &penalized, &saddle.max_policy, Sign::Min)?;
    Ok(OfflineOutcome {
        policy: saddle.max_policy,
        p_hat,
        version_space: (0..class.len()).collect(),
        pessimistic_value: value,
        iterations: saddle.iterations,
        converged: saddle.converged,
    })
}

/// `P_hat - beta * Gamma` with the pointwise bonus `Gamma`.
pub fn penalized_payoff(class: &FiniteClass, p_hat: usize, t: &Tally, off: &OfflineConfig) -> Result<PayoffTable> {
    let bonus = pointwise_bonus_table(class, class.get(p_hat), t, off.lambda)?;
    PayoffTable::penalized(class.get(p_hat), &bonus, off.beta)
}

/// A coverage coefficient; infinite when some class member differs from the
/// estimate in a direction the data never probes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Coverage {
    Finite(f64),
    Infinite,
}

impl Coverage {
    pub fn value(self) -> f64 {
        match self {
            Coverage::Finite(v) => v,
            Coverage::Infinite => f64::INFINITY,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, Coverage::Finite(_))
    }
}

/// `u(x, b) = E_{a ~ target}[(P - Q)(x, a, b)]`.
fn target_gaps(cfg: &GameConfig, p: &PreferenceFunction, q: &PreferenceFunction, target: &Policy) -> Vec<Vec<f64>> {
    (0..cfg.num_prompts())
        .map(|x| {
            let k = cfg.num_actions(x);
            (0..k)
                .map(|b| {
                    target
                        .row(x)
                        .iter()
                        .enumerate()
                        .map(|(a, &pa)| pa * (p.value(x, a, b) - q.value(x, a, b)))
                        .sum()
                })
                .collect()
        })
        .collect()
}

fn ratio(num: f64, den: f64) -> Coverage {
    if den > 0.0 {
        Coverage::Finite(num / den)
    } else if num > 0.0 {
        Coverage::Infinite
    } else {
        Coverage::Finite(0.0)
    }
}

fn coverage_max(a: Coverage, b: Coverage) -> Coverage {
    match (a, b) {
        (Coverage::Finite(u), Coverage::Finite(v)) => Coverage::Finite(u.max(v)),
        _ => Coverage::Infinite,
    }
}

fn check_coverage_inputs(cfg: &GameConfig, class: &FiniteClass, p_hat: &PreferenceFunction, target: &Policy, pd: (&Policy, &Policy)) -> Result<()> {
    cfg.check_payoff(class.get(0))?;
    cfg.check_payoff(p_hat)?;
    cfg.check_policy(target)?;
    cfg.check_policy(pd.0)?;
    cfg.check_policy(pd.1)
}

/// `max_{p2} sup_P (E_x[P - P_hat](target, p2))^2 / E_data[(P - P_hat)^2]`.
///
/// For a fixed member and sign the numerator's inner expectation is linear
/// in each prompt's row of `p2`, so the maximum over `p2` is attained by a
/// per-prompt best action; both signs are tried.
pub fn coverage_coefficient(
    class: &FiniteClass,
    p_hat: &PreferenceFunction,
    target: &Policy,
    pd: (&Policy, &Policy),
    cfg: &GameConfig,
) -> Result<Coverage> {
    check_coverage_inputs(cfg, class, p_hat, target, pd)?;
    let mut out = Coverage::Finite(0.0);
    for p in class.members() {
        let den = expected_sq_distance(cfg, p, p_hat, pd.0, pd.1);
        let u = target_gaps(cfg, p, p_hat, target);
        let mut hi = 0.0;
        let mut lo = 0.0;
        for (x, &w) in cfg.d0().iter().enumerate() {
            hi += w * u[x].iter().copied().fold(f64::NEG_INFINITY, f64::max);
            lo += w * u[x].iter().copied().fold(f64::INFINITY, f64::min);
        }
        let num = (hi * hi).max(lo * lo);
        out = coverage_max(out, ratio(num, den));
    }
    Ok(out)
}

/// `max_{p2} E_x sup_P (P - P_hat)(x, target, p2)^2 / E_data[(P - P_hat)^2]`, the
/// prompt-wise variant; the maximum separates into one best action per prompt.
pub fn coverage_tilde(
    class: &FiniteClass,
    p_hat: &PreferenceFunction,
    target: &Policy,
    pd: (&Policy, &Policy),
    cfg: &GameConfig,
) -> Result<Coverage> {
    check_coverage_inputs(cfg, class, p_hat, target, pd)?;
    let dens: Vec<f64> = class.members().iter().map(|p| expected_sq_distance(cfg, p, p_hat, pd.0, pd.1)).collect();
    let gaps: Vec<Vec<Vec<f64>>> = class.members().iter().map(|p| target_gaps(cfg, p, p_hat, target)).collect();
    let mut total = 0.0;
    for (x, &w) in cfg.d0().iter().enumerate() {
        let mut best = Coverage::Finite(0.0);
        for b in 0..cfg.num_actions(x) {
            for (u, &den) in gaps.iter().zip(&dens) {
                best = coverage_max(best, ratio(u[x][b] * u[x][b], den));
            }
        }
        match best {
            Coverage::Infinite if w > 0.0 => return Ok(Coverage::Infinite),
            Coverage::Infinite => {}
            Coverage::Finite(v) => total += w * v,
        }
    }
    Ok(Coverage::Finite(total))
}

/// Version-space pessimistic value `min_{P in members} J_P(p1, p2)` for a fixed pair.
pub fn pessimistic_pair_value(cfg: &GameConfig, class: &FiniteClass, members: &[usize], p1: &Policy, p2: &Policy) -> Result<f64> {
    members
        .iter()
        .map(|&i| crate::game::game_value(cfg, class.get(i), p1, p2))
        .try_fold(f64::INFINITY, |m, v| Ok(m.min(v?)))
}

/// Coverage of a single comparison pair and the pessimistic suboptimality of the probe.
#[derive(Debug, Clone, PartialEq)]
pub struct RefinedCoverage {
    pub coverage: Coverage,
    /// `Jlow(target, probe) - Jlow(target, minimizer)`.
    pub subopt: f64,
    /// The exact minimizer of the pessimistic value against `target`.
    pub minimizer: Policy,
}

impl RefinedCoverage {
    /// `4 beta sqrt(coverage / n) + subopt`.
    pub fn bound(&self, beta: f64, n: usize) -> f64 {
        4.0 * beta * (self.coverage.value() / n as f64).sqrt() + self.subopt
    }
}

/// Coverage of the pair `(target, probe)` and the probe's gap to the
/// pessimistic best response against `target`.
#[allow(clippy::too_many_arguments)]
pub fn refined_coverage(
    class: &FiniteClass,
    p_hat: &PreferenceFunction,
    members: &[usize],
    target: &Policy,
    probe: &Policy,
    pd: (&Policy, &Policy),
    cfg: &GameConfig,
) -> Result<RefinedCoverage> {
    check_coverage_inputs(cfg, class, p_hat, target, pd)?;
    cfg.check_policy(probe)?;
    let mut coverage = Coverage::Finite(0.0);
    for p in class.members() {
        let den = expected_sq_distance(cfg, p, p_hat, pd.0, pd.1);
        let u = target_gaps(cfg, p, p_hat, target);
        let num: f64 = cfg
            .d0()
            .iter()
            .enumerate()
            .map(|(x, &w)| w * u[x].iter().zip(probe.row(x)).map(|(g, q)| g * q).sum::<f64>())
            .sum();
        coverage = coverage_max(coverage, ratio(num * num, den));
    }
    // The pessimistic minimizer: the best Gibbs response over the worst member.
    let (_, worst) = pessimistic_value(cfg, class, members, target)?;
    let minimizer = best_response_min(cfg, class.get(worst), target);
    let low = pessimistic_pair_value(cfg, class, members, target, &minimizer)?;
    let at_probe = pessimistic_pair_value(cfg, class, members, target, probe)?;
    Ok(RefinedCoverage {
        coverage,
        subopt: (at_probe - low).max(0.0),
        minimizer,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{duality_gap, game_value, ActionSpace, Payoff, PromptSpace};
    use crate::oracles::{bt_oracle, collect, cyclic_oracle, RewardTable};
    use crate::solver::solve_nash;

    fn setup() -> (GameConfig, FiniteClass) {
        let a = ActionSpace::uniform(2, 3).unwrap();
        let pi0 = Policy::new(vec![vec![0.5, 0.3, 0.2], vec![0.2, 0.2, 0.6]]).unwrap();
        let cfg = GameConfig::new(PromptSpace::new(vec![0.4, 0.6]).unwrap(), a.clone(), pi0, 1.0).unwrap();
        let members = vec![
            bt_oracle(&RewardTable::new(vec![vec![1.0, 0.0, -0.5], vec![0.0, 0.3, 0.1]]).unwrap()),
            cyclic_oracle(2, 3, 0.8).unwrap(),
            PreferenceFunction::indifferent(&a),
            PreferenceFunction::from_fn(&a, |x, i, j| 0.3 + 0.1 * (x + i + 2 * j) as f64 % 0.5).unwrap(),
        ];
        (cfg, FiniteClass::new(members).unwrap())
    }

    /// Brute force over all deterministic opponents.
    fn coverage_enumerated(
        class: &FiniteClass,
        p_hat: &PreferenceFunction,
        target: &Policy,
        pd: (&Policy, &Policy),
        cfg: &GameConfig,
    ) -> f64 {
        let counts = cfg.actions().counts().to_vec();
        let mut best = 0.0f64;
        let total: usize = counts.iter().product();
        for code in 0..total {
            let mut c = code;
            let choice: Vec<usize> = counts
                .iter()
                .map(|&k| {
                    let v = c % k;
                    c /= k;
                    v
                })
                .collect();
            let q = Policy::deterministic(cfg.actions(), &choice).unwrap();
            for p in class.members() {
                let num: f64 = (0..cfg.num_prompts())
                    .map(|x| {
                        cfg.d0()[x]
                            * (crate::game::expected_preference(p, x, target, &q).unwrap()
                                - crate::game::expected_preference(p_hat, x, target, &q).unwrap())
                    })
                    .sum();
                let den = expected_sq_distance(cfg, p, p_hat, pd.0, pd.1);
                let r = ratio(num * num, den).value();
                best = best.max(r);
            }
        }
        best
    }

    #[test]
    fn singleton_class_reduces_to_nash() {
        let (cfg, class) = setup();
        let single = class.subset(&[1]).unwrap();
        let u = Policy::uniform(cfg.actions());
        let d = collect(&cfg, &u, &u, single.get(0), 50, 1, ["u", "u"]).unwrap();
        let off = OfflineConfig::confidence(1, 0.1).unwrap();
        let nash = solve_nash(&cfg, single.get(0), 1e-8, 100_000).unwrap();
        let vs = pelhf_version_space(&single, &d, &cfg, &off).unwrap();
        assert!(vs.policy.max_abs_diff(&nash.policy) < 1e-4);
        let bonus = pelhf_bonus(&single, &d, &cfg, &off).unwrap();
        assert!(bonus.policy.max_abs_diff(&nash.policy) < 1e-4);
    }

    #[test]
    fn zero_beta_bonus_is_mle_nash() {
        let (cfg, class) = setup();
        let u = Policy::uniform(cfg.actions());
        let d = collect(&cfg, &u, &u, class.get(0), 30, 5, ["u", "u"]).unwrap();
        let off = OfflineConfig::new(0.0, 1.0, 0.1).unwrap();
        let out = pelhf_bonus(&class, &d, &cfg, &off).unwrap();
        let nash = solve_nash(&cfg, class.get(out.p_hat), 1e-8, 100_000).unwrap();
        assert!(out.policy.max_abs_diff(&nash.policy) < 1e-4);
    }

    #[test]
    fn penalized_table_is_below_estimate() {
        let (cfg, class) = setup();
        let two = class.subset(&[0, 1]).unwrap();
        let u = Policy::uniform(cfg.actions());
        let d = collect(&cfg, &u, &u, two.get(0), 10, 3, ["u", "u"]).unwrap();
        let t = d.tally(cfg.actions()).unwrap();
        let off = OfflineConfig::confidence(2, 0.1).unwrap();
        let p_hat = two.mle_tally(&t);
        let pen = penalized_payoff(&two, p_hat, &t, &off).unwrap();
        for x in 0..2 {
            for (v, h) in pen.matrix(x).iter().zip(two.get(p_hat).matrix(x)) {
                assert!(v <= h);
            }
        }
    }

    #[test]
    fn version_space_ascent_is_optimal_over_the_whole_class() {
        let (cfg, class) = setup();
        let all: Vec<usize> = (0..class.len()).collect();
        let (pi, value, _, _) =
            maximize_pessimistic_value(&cfg, &class, &all, &SolverOptions::default(), &AscentOptions::default()).unwrap();
        assert!((pessimistic_value(&cfg, &class, &all, &pi).unwrap().0 - value).abs() < 1e-15);
        // no Nash policy of a single member and no random mixture does better
        for j in 0..class.len() {
            let nash = solve_nash(&cfg, class.get(j), 1e-8, 100_000).unwrap();
            assert!(pessimistic_value(&cfg, &class, &all, &nash.policy).unwrap().0 <= value + 1e-6);
        }
        let u = Policy::uniform(cfg.actions());
        assert!(pessimistic_value(&cfg, &class, &all, &u).unwrap().0 <= value + 1e-6);
        // the indifferent member caps the pessimistic value at its own maximum
        let half = class.get(2);
        let own = best_response_value(&cfg, half, &pi, Sign::Min).unwrap();
        assert!(value <= own + 1e-12);
    }

    #[test]
    fn dual_averaging_matches_grid_search() {
        let a = ActionSpace::uniform(1, 3).unwrap();
        let cfg = GameConfig::new(PromptSpace::uniform(1).unwrap(), a.clone(), Policy::uniform(&a), 2.0).unwrap();
        let fwd = cyclic_oracle(1, 3, 0.9).unwrap();
        let rev = PreferenceFunction::from_fn(&a, |x, i, j| 1.0 - fwd.value(x, i, j)).unwrap();
        let tilted = bt_oracle(&RewardTable::new(vec![vec![0.8, 0.0, -0.4]]).unwrap());
        let class = FiniteClass::new(vec![fwd, rev, tilted]).unwrap();
        let all = [0, 1, 2];
        let (pi, value, iters, _) =
            maximize_pessimistic_value(&cfg, &class, &all, &SolverOptions::default(), &AscentOptions::default()).unwrap();
        assert!(iters > 0, "the Nash shortcut should not apply here");
        let steps = 400;
        let mut grid_best = f64::NEG_INFINITY;
        for i in 1..steps {
            for j in 1..steps - i {
                let p = [i as f64, j as f64, (steps - i - j) as f64].map(|v| v / steps as f64);
                let q = Policy::new(vec![p.to_vec()]).unwrap();
                grid_best = grid_best.max(pessimistic_value(&cfg, &class, &all, &q).unwrap().0);
            }
        }
        assert!(value >= grid_best - 1e-6, "{value} vs grid {grid_best}");
        assert!((pessimistic_value(&cfg, &class, &all, &pi).unwrap().0 - value).abs() < 1e-15);
    }

    #[test]
    fn pessimism_is_valid_when_truth_is_in_the_space() {
        let (cfg, class) = setup();
        let all: Vec<usize> = (0..class.len()).collect();
        let p1 = Policy::new(vec![vec![0.2, 0.5, 0.3], vec![0.6, 0.1, 0.3]]).unwrap();
        let p2 = cfg.pi0().clone();
        let low = pessimistic_pair_value(&cfg, &class, &all, &p1, &p2).unwrap();
        for p in class.members() {
            assert!(low <= game_value(&cfg, p, &p1, &p2).unwrap());
        }
    }

    #[test]
    fn coverage_matches_enumeration() {
        let (cfg, class) = setup();
        let p_hat = class.get(0).clone();
        let target = solve_nash(&cfg, &p_hat, 1e-8, 100_000).unwrap().policy;
        let pd1 = Policy::new(vec![vec![0.2, 0.3, 0.5], vec![0.3, 0.3, 0.4]]).unwrap();
        let pd2 = cfg.pi0().clone();
        let c = coverage_coefficient(&class, &p_hat, &target, (&pd1, &pd2), &cfg).unwrap();
        let e = coverage_enumerated(&class, &p_hat, &target, (&pd1, &pd2), &cfg);
        assert!((c.value() - e).abs() <= 1e-12 * e.max(1.0));
        let t = coverage_tilde(&class, &p_hat, &target, (&pd1, &pd2), &cfg).unwrap();
        assert!(t.value() + 1e-12 >= c.value());
    }

    #[test]
    fn coverage_edge_cases() {
        let (cfg, class) = setup();
        let p_hat = class.get(1).clone();
        let single = class.subset(&[1]).unwrap();
        let u = Policy::uniform(cfg.actions());
        assert_eq!(coverage_coefficient(&single, &p_hat, &u, (&u, &u), &cfg).unwrap(), Coverage::Finite(0.0));

        // Target pair distribution equal to the data distribution: at most 1 for that pair.
        let rc = refined_coverage(&class, &p_hat, &[0, 1, 2, 3], &u, &u, (&u, &u), &cfg).unwrap();
        assert!(rc.coverage.value() <= 1.0 + 1e-12);

        // Members that differ only on a pair the data never touches.
        let a = cfg.actions().clone();
        let base = PreferenceFunction::indifferent(&a);
        let other = PreferenceFunction::from_fn(&a, |x, i, j| if (x, i, j) == (0, 1, 2) { 0.9 } else { 0.5 }).unwrap();
        let c2 = FiniteClass::new(vec![base.clone(), other]).unwrap();
        let first = Policy::deterministic(&a, &[0, 0]).unwrap();
        let target = Policy::new(vec![vec![0.1, 0.8, 0.1], vec![1.0 / 3.0; 3]]).unwrap();
        assert_eq!(coverage_coefficient(&c2, &base, &target, (&first, &u), &cfg).unwrap(), Coverage::Infinite);
        assert_eq!(coverage_tilde(&c2, &base, &target, (&first, &u), &cfg).unwrap(), Coverage::Infinite);
        // A probe that avoids action 2 at prompt 0 has no discrepancy to cover.
        let probe = Policy::deterministic(&a, &[0, 1]).unwrap();
        let rc = refined_coverage(&c2, &base, &[0, 1], &target, &probe, (&first, &u), &cfg).unwrap();
        assert_eq!(rc.coverage, Coverage::Finite(0.0));
        assert!(rc.bound(1.0, 100).is_finite());
    }

    #[test]
    fn refined_subopt_is_zero_at_minimizer() {
        let (cfg, class) = setup();
        let all: Vec<usize> = (0..class.len()).collect();
        let target = Policy::uniform(cfg.actions());
        let u = Policy::uniform(cfg.actions());
        let rc = refined_coverage(&class, class.get(0), &all, &target, &u, (&u, &u), &cfg).unwrap();
        let again = refined_coverage(&class, class.get(0), &all, &target, &rc.minimizer, (&u, &u), &cfg).unwrap();
        assert!(again.subopt.abs() < 1e-15);
        assert!(rc.subopt >= 0.0);
        // the minimizer beats a grid of alternative opponents
        let low = pessimistic_pair_value(&cfg, &class, &all, &target, &rc.minimizer).unwrap();
        for i in 0..3 {
            let q = Policy::deterministic(cfg.actions(), &[i, 2 - i]).unwrap();
            assert!(pessimistic_pair_value(&cfg, &class, &all, &target, &q).unwrap() >= low - 1e-12);
        }
    }

    #[test]
    fn bonus_output_is_certified_for_penalized_game() {
        let (cfg, class) = setup();
        let u = Policy::uniform(cfg.actions());
        let d = collect(&cfg, &u, &u, class.get(0), 40, 9, ["u", "u"]).unwrap();
        let off = OfflineConfig::confidence(class.len(), 0.1).unwrap();
        let out = pelhf_bonus(&class, &d, &cfg, &off).unwrap();
        let t = d.tally(cfg.actions()).unwrap();
        let pen = penalized_payoff(&class, out.p_hat, &t, &off).unwrap();
        let br = best_response_min(&cfg, &pen, &out.policy);
        // the penalized game's saddle: no unilateral improvement for the max player
        let gap = duality_gap(&cfg, &pen, &out.policy, &br).unwrap();
        assert!(gap < 1e-4);
    }
}
