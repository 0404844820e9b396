use crate::error::{Error, Result};
use crate::game::{best_response_max, best_response_min, duality_gap, GameConfig, Payoff, Policy, PreferenceFunction};

/// Output of a Nash solve.
#[derive(Debug, Clone, PartialEq)]
pub struct NashResult {
    pub policy: Policy,
    pub duality_gap: f64,
    /// Max-norm distance between the policy and its own best response.
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Output of a saddle-point solve for a general payoff.
#[derive(Debug, Clone, PartialEq)]
pub struct SaddleResult {
    pub max_policy: Policy,
    pub min_policy: Policy,
    pub duality_gap: f64,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Required bound on both the duality gap and the fixed-point residual.
    pub tol: f64,
    pub max_iter: usize,
    /// Initial weight on the best response in the damped update.
    pub damping: f64,
    /// Iterations without improvement before the damping is halved.
    pub stall_window: usize,
    /// Halvings allowed before switching to averaged mirror descent.
    pub max_halvings: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 100_000,
            damping: 0.5,
            stall_window: 50,
            max_halvings: 8,
        }
    }
}

impl SolverOptions {
    pub fn with_tol(tol: f64, max_iter: usize) -> Self {
        Self {
            tol,
            max_iter,
            ..Self::default()
        }
    }

    fn check(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidParameter(format!("tolerance must be positive, got {}", self.tol)));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::InvalidParameter(format!("damping must lie in (0, 1], got {}", self.damping)));
        }
        Ok(())
    }
}

struct Outcome<S> {
    state: S,
    gap: f64,
    residual: f64,
    iterations: usize,
    converged: bool,
}

trait State: Clone {
    fn distance(&self, other: &Self) -> f64;
    fn mix(&self, other: &Self, w: f64) -> Self;
    /// Per-prompt normalized `self^(1-w) * other^w`.
    fn geometric(&self, other: &Self, w: f64) -> Self;
}

fn geometric_policy(a: &Policy, b: &Policy, w: f64) -> Policy {
    Policy::from_rows(
        a.rows()
            .iter()
            .zip(b.rows())
            .map(|(ra, rb)| {
                let logits: Vec<f64> = ra
                    .iter()
                    .zip(rb)
                    .map(|(&u, &v)| {
                        if u > 0.0 && v > 0.0 {
                            (1.0 - w) * u.ln() + w * v.ln()
                        } else {
                            f64::NEG_INFINITY
                        }
                    })
                    .collect();
                let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
                let z: f64 = e.iter().sum();
                e.iter().map(|v| v / z).collect()
            })
            .collect(),
    )
}

impl State for Policy {
    fn distance(&self, other: &Self) -> f64 {
        self.max_abs_diff(other)
    }

    fn mix(&self, other: &Self, w: f64) -> Self {
        Policy::mix(self, other, w)
    }

    fn geometric(&self, other: &Self, w: f64) -> Self {
        geometric_policy(self, other, w)
    }
}

impl State for (Policy, Policy) {
    fn distance(&self, other: &Self) -> f64 {
        self.0.max_abs_diff(&other.0).max(self.1.max_abs_diff(&other.1))
    }

    fn mix(&self, other: &Self, w: f64) -> Self {
        (self.0.mix(&other.0, w), self.1.mix(&other.1, w))
    }

    fn geometric(&self, other: &Self, w: f64) -> Self {
        (geometric_policy(&self.0, &other.0, w), geometric_policy(&self.1, &other.1, w))
    }
}

/// Damped best-response iteration with an a-posteriori certificate.
///
/// The damping is halved whenever `max(gap, residual)` has not improved for
/// `stall_window` iterations; after `max_halvings` halvings the remaining
/// budget runs averaged mirror descent from the best iterate so far.
fn run<S: State>(
    init: S,
    opts: &SolverOptions,
    br: impl Fn(&S) -> S,
    gap: impl Fn(&S) -> Result<f64>,
) -> Result<Outcome<S>> {
    opts.check()?;
    let certify = |s: &S| -> Result<(f64, f64, S)> {
        let b = br(s);
        Ok((gap(s)?, s.distance(&b), b))
    };
    let mut s = init;
    let mut gamma = opts.damping;
    let mut best = (f64::INFINITY, s.clone(), f64::INFINITY, f64::INFINITY);
    let mut since = 0;
    let mut halvings = 0;
    let mut k = 0;
    while k < opts.max_iter {
        let (g, r, b) = certify(&s)?;
        k += 1;
        if g <= opts.tol && r <= opts.tol {
            return Ok(Outcome {
                state: s,
                gap: g,
                residual: r,
                iterations: k,
                converged: true,
            });
        }
        let metric = g.max(r);
        if metric < best.0 {
            best = (metric, s.clone(), g, r);
            since = 0;
        } else {
            since += 1;
        }
        if since >= opts.stall_window {
            if halvings >= opts.max_halvings {
                break;
            }
            halvings += 1;
            gamma *= 0.5;
            since = 0;
            s = best.1.clone();
            continue;
        }
        s = s.mix(&b, gamma);
    }

    // Averaged mirror descent from the best damped iterate.
    let mut cur = best.1.clone();
    let mut avg = cur.clone();
    let mut n_avg = 1.0;
    let step = gamma.min(0.1);
    while k < opts.max_iter {
        let b = br(&cur);
        cur = cur.geometric(&b, step);
        n_avg += 1.0;
        avg = avg.mix(&cur, 1.0 / n_avg);
        k += 1;
        if k % 10 == 0 || k == opts.max_iter {
            for cand in [&cur, &avg] {
                let (g, r, _) = certify(cand)?;
                if g <= opts.tol && r <= opts.tol {
                    return Ok(Outcome {
                        state: cand.clone(),
                        gap: g,
                        residual: r,
                        iterations: k,
                        converged: true,
                    });
                }
                if g.max(r) < best.0 {
                    best = (g.max(r), cand.clone(), g, r);
                }
            }
        }
    }
    Ok(Outcome {
        state: best.1,
        gap: best.2,
        residual: best.3,
        iterations: k,
        converged: false,
    })
}

/// Symmetric Nash policy of the preference game: the fixed point of
/// `pi(a|x) ∝ pi0(a|x) exp(eta P(x, a, pi))`.
pub fn solve_nash(cfg: &GameConfig, p: &PreferenceFunction, tol: f64, max_iter: usize) -> Result<NashResult> {
    solve_nash_with(cfg, p, &SolverOptions::with_tol(tol, max_iter))
}

pub fn solve_nash_with(cfg: &GameConfig, p: &PreferenceFunction, opts: &SolverOptions) -> Result<NashResult> {
    cfg.check_payoff(p)?;
    let out = run(
        cfg.pi0().clone(),
        opts,
        |s: &Policy| best_response_max(cfg, p, s),
        |s: &Policy| duality_gap(cfg, p, s, s),
    )?;
    let result = NashResult {
        policy: out.state,
        duality_gap: out.gap,
        residual: out.residual,
        iterations: out.iterations,
        converged: out.converged,
    };
    if result.converged {
        Ok(result)
    } else {
        Err(Error::NonConvergence {
            solver: "nash",
            iterations: result.iterations,
            best_gap: result.duality_gap,
            best: Box::new(result),
        })
    }
}

/// Saddle point of `max_p1 min_p2 J(p1, p2)` for a payoff without symmetry.
///
/// `init` defaults to both players at the reference policy.
pub fn solve_saddle(
    cfg: &GameConfig,
    m: &impl Payoff,
    opts: &SolverOptions,
    init: Option<(Policy, Policy)>,
) -> Result<SaddleResult> {
    cfg.check_payoff(m)?;
    let init = match init {
        Some((a, b)) => {
            cfg.check_policy(&a)?;
            cfg.check_policy(&b)?;
            (a, b)
        }
        None => (cfg.pi0().clone(), cfg.pi0().clone()),
    };
    let out = run(
        init,
        opts,
        |s: &(Policy, Policy)| (best_response_max(cfg, m, &s.1), best_response_min(cfg, m, &s.0)),
        |s: &(Policy, Policy)| duality_gap(cfg, m, &s.0, &s.1),
    )?;
    let (max_policy, min_policy) = out.state;
    let result = SaddleResult {
        max_policy,
        min_policy,
        duality_gap: out.gap,
        residual: out.residual,
        iterations: out.iterations,
        converged: out.converged,
    };
    if result.converged {
        Ok(result)
    } else {
        Err(Error::NonConvergence {
            solver: "saddle",
            iterations: result.iterations,
            best_gap: result.duality_gap,
            best: Box::new(NashResult {
                policy: result.max_policy.clone(),
                duality_gap: result.duality_gap,
                residual: result.residual,
                iterations: result.iterations,
                converged: false,
            }),
        })
    }
}

/// Comparison of the two players' equilibrium policies.
#[derive(Debug, Clone, PartialEq)]
pub struct CoincideReport {
    pub max_side: Policy,
    pub min_side: Policy,
    pub distance: f64,
    pub passed: bool,
}

/// Solves for the max player's symmetric fixed point, and separately for the
/// min player's component of a two-sided saddle solve started away from the
/// diagonal, then compares the two.
pub fn nash_players_coincide_check(cfg: &GameConfig, p: &PreferenceFunction, tol: f64) -> Result<CoincideReport> {
    let max_side = solve_nash(cfg, p, tol, SolverOptions::default().max_iter)?.policy;
    let start_min = best_response_min(cfg, p, cfg.pi0());
    let saddle = solve_saddle(
        cfg,
        p,
        &SolverOptions::with_tol(tol, SolverOptions::default().max_iter),
        Some((cfg.pi0().clone(), start_min)),
    )?;
    let min_side = saddle.min_policy;
    let distance = max_side.max_abs_diff(&min_side);
    Ok(CoincideReport {
        passed: distance <= 10.0 * tol,
        max_side,
        min_side,
        distance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{best_response_value, game_value, PayoffTable, Sign};
    use crate::oracles::{bt_oracle, cyclic_oracle, RewardTable};

    #[test]
    fn rps_nash_is_uniform() {
        for eta in [0.5, 1.0, 5.0, 50.0] {
            let cfg = GameConfig::uniform(1, 3, eta).unwrap();
            let p = cyclic_oracle(1, 3, 0.75).unwrap();
            let r = solve_nash(&cfg, &p, 1e-10, 100_000).unwrap();
            assert!(r.converged);
            assert!(r.duality_gap < 1e-10);
            assert!(r.policy.max_abs_diff(&Policy::uniform(cfg.actions())) < 1e-10);
        }
    }

    #[test]
    fn indifferent_table_gives_reference() {
        let pi0 = Policy::new(vec![vec![0.2, 0.3, 0.5]]).unwrap();
        let a = crate::game::ActionSpace::uniform(1, 3).unwrap();
        let cfg = GameConfig::new(crate::game::PromptSpace::uniform(1).unwrap(), a.clone(), pi0.clone(), 3.0).unwrap();
        let r = solve_nash(&cfg, &PreferenceFunction::indifferent(&a), 1e-8, 1000).unwrap();
        assert!(r.policy.max_abs_diff(&pi0) < 1e-15);
    }

    #[test]
    fn bt_pair_matches_grid_minimax() {
        let cfg = GameConfig::uniform(1, 2, 1.0).unwrap();
        let p = bt_oracle(&RewardTable::new(vec![vec![1.0, 0.0]]).unwrap());
        let r = solve_nash(&cfg, &p, 1e-8, 100_000).unwrap();
        // Grid oracle: the symmetric Nash minimizes J(†, q) - J(q, †) over q.
        let n = 100_000;
        let mut best = (f64::INFINITY, 0.0);
        for i in 1..n {
            let q = i as f64 / n as f64;
            let pol = Policy::new(vec![vec![q, 1.0 - q]]).unwrap();
            let up = best_response_value(&cfg, &p, &pol, Sign::Max).unwrap();
            let lo = best_response_value(&cfg, &p, &pol, Sign::Min).unwrap();
            if up - lo < best.0 {
                best = (up - lo, q);
            }
        }
        assert!((r.policy.row(0)[0] - best.1).abs() < 1e-4);
    }

    #[test]
    fn residual_and_certificate_hold() {
        let cfg = GameConfig::uniform(2, 4, 5.0).unwrap();
        let p = PreferenceFunction::from_fn(cfg.actions(), |x, a, b| {
            (0.5 + 0.45 * (((x + 1) * (3 * a + 5 * b + 1)) as f64).sin()).clamp(0.0, 1.0)
        })
        .unwrap();
        let r = solve_nash(&cfg, &p, 1e-9, 100_000).unwrap();
        assert!(duality_gap(&cfg, &p, &r.policy, &r.policy).unwrap() <= 1e-9);
        let br = best_response_max(&cfg, &p, &r.policy);
        assert!(r.policy.max_abs_diff(&br) <= 1e-8);
        assert!((game_value(&cfg, &p, &r.policy, &r.policy).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn non_convergence_carries_best_iterate() {
        let cfg = GameConfig::uniform(1, 3, 5.0).unwrap();
        let p = bt_oracle(&RewardTable::new(vec![vec![1.0, 0.0, -1.0]]).unwrap());
        match solve_nash(&cfg, &p, 1e-12, 3) {
            Err(Error::NonConvergence { iterations, best, .. }) => {
                assert_eq!(iterations, 3);
                assert!(!best.converged);
                assert!(best.duality_gap.is_finite());
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn saddle_solver_on_skew_table_matches_symmetric_solution() {
        let cfg = GameConfig::uniform(1, 3, 2.0).unwrap();
        let p = bt_oracle(&RewardTable::new(vec![vec![0.3, 1.2, -0.4]]).unwrap());
        let rep = nash_players_coincide_check(&cfg, &p, 1e-9).unwrap();
        assert!(rep.passed, "distance {}", rep.distance);
        let half = PreferenceFunction::indifferent(cfg.actions());
        let rep = nash_players_coincide_check(&cfg, &half, 1e-9).unwrap();
        assert_eq!(rep.distance, 0.0);
    }

    #[test]
    fn saddle_solver_certifies_general_payoff() {
        let cfg = GameConfig::uniform(2, 3, 1.5).unwrap();
        let p = cyclic_oracle(2, 3, 0.8).unwrap();
        let g = PayoffTable::new(
            cfg.actions(),
            vec![vec![0.0, 0.3, 0.1, 0.3, 0.0, 0.2, 0.1, 0.2, 0.0], vec![0.0; 9]],
        )
        .unwrap();
        let pen = PayoffTable::penalized(&p, &g, 0.5).unwrap();
        let r = solve_saddle(&cfg, &pen, &SolverOptions::with_tol(1e-9, 100_000), None).unwrap();
        assert!(duality_gap(&cfg, &pen, &r.max_policy, &r.min_policy).unwrap() <= 1e-9);
    }

    #[test]
    fn rejects_bad_options() {
        let cfg = GameConfig::uniform(1, 2, 1.0).unwrap();
        let p = PreferenceFunction::indifferent(cfg.actions());
        assert!(solve_nash(&cfg, &p, 0.0, 10).is_err());
        let opts = SolverOptions { damping: 0.0, ..SolverOptions::default() };
        assert!(solve_nash_with(&cfg, &p, &opts).is_err());
    }
}
