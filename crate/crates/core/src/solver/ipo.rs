//! Self-play IPO: a squared loss on log-ratio margins whose stop-gradient
//! stationary point is the Nash policy.
//!
//! Pairs `(a, a')` are drawn from the current policy, ordered into
//! `(winner, loser)` by `P_hat`, and the margin
//! `ln(pi(w)/pi0(w)) - ln(pi(l)/pi0(l))` is regressed onto the target `eta / 2`.
//! With the KL term scaled by `1/eta` this target makes the stationary point
//! satisfy `ln(pi/pi0)(a) - ln(pi/pi0)(b) = eta (P(a,pi) - P(b,pi))`, the Nash condition.

use crate::error::{Error, Result};
use crate::game::{duality_gap, row_scores, GameConfig, Policy, PreferenceFunction};

use super::nash::NashResult;

/// The margin target for a game with KL coefficient `eta`.
pub fn ipo_target(eta: f64) -> f64 {
    eta / 2.0
}

fn log_ratios(cfg: &GameConfig, pi: &Policy) -> Result<Vec<Vec<f64>>> {
    cfg.check_policy(pi)?;
    let mut out = Vec::with_capacity(cfg.num_prompts());
    for (x, (row, r0)) in pi.rows().iter().zip(cfg.pi0().rows()).enumerate() {
        let mut g = Vec::with_capacity(row.len());
        for (a, (&p, &q)) in row.iter().zip(r0).enumerate() {
            if p <= 0.0 {
                // zero mass on a reference-supported action: the log ratio is unbounded
                return Err(Error::SupportViolation { prompt: x, action: a });
            }
            g.push((p / q).ln());
        }
        out.push(g);
    }
    Ok(out)
}

/// Loss of log ratios `g` when pairs are drawn from `sampler`.
fn surrogate(cfg: &GameConfig, p_hat: &PreferenceFunction, sampler: &Policy, g: &[Vec<f64>], c: f64) -> f64 {
    let mut total = 0.0;
    for (x, &w) in cfg.d0().iter().enumerate() {
        let s = sampler.row(x);
        let k = s.len();
        let mut lx = 0.0;
        for a in 0..k {
            for b in 0..k {
                let pw = s[a] * s[b];
                if pw == 0.0 {
                    continue;
                }
                let hab = g[x][a] - g[x][b] - c;
                let hba = g[x][b] - g[x][a] - c;
                lx += pw * (p_hat.value(x, a, b) * hab * hab + p_hat.value(x, b, a) * hba * hba);
            }
        }
        total += w * lx;
    }
    total
}

/// Exact population self-play IPO loss of `pi`.
pub fn ipo_population_loss(cfg: &GameConfig, pi: &Policy, p_hat: &PreferenceFunction) -> Result<f64> {
    cfg.check_payoff(p_hat)?;
    let g = log_ratios(cfg, pi)?;
    Ok(surrogate(cfg, p_hat, pi, &g, ipo_target(cfg.eta())))
}

/// Per-prompt residual `g(b) - E_pi[g] - c (2 P_hat(b, pi) - 1)`; zero exactly at the stationary point.
pub fn ipo_residual(cfg: &GameConfig, pi: &Policy, p_hat: &PreferenceFunction) -> Result<Vec<Vec<f64>>> {
    cfg.check_payoff(p_hat)?;
    let g = log_ratios(cfg, pi)?;
    let c = ipo_target(cfg.eta());
    Ok((0..cfg.num_prompts())
        .map(|x| {
            let row = pi.row(x);
            let mean: f64 = row.iter().zip(&g[x]).map(|(p, v)| p * v).sum();
            let s = row_scores(p_hat, x, row);
            g[x].iter().zip(&s).map(|(gb, sb)| gb - mean - c * (2.0 * sb - 1.0)).collect()
        })
        .collect())
}

/// Gradient of the frozen-sampler loss with respect to the per-prompt logits.
fn semi_gradient(cfg: &GameConfig, p_hat: &PreferenceFunction, pi: &Policy, g: &[Vec<f64>], c: f64) -> Vec<Vec<f64>> {
    (0..cfg.num_prompts())
        .map(|x| {
            let row = pi.row(x);
            let mean: f64 = row.iter().zip(&g[x]).map(|(p, v)| p * v).sum();
            let s = row_scores(p_hat, x, row);
            let dg: Vec<f64> = (0..row.len())
                .map(|b| cfg.d0()[x] * 4.0 * row[b] * (g[x][b] - mean - c * (2.0 * s[b] - 1.0)))
                .collect();
            let total: f64 = dg.iter().sum();
            dg.iter().zip(row).map(|(d, p)| d - p * total).collect()
        })
        .collect()
}

fn softmax_policy(cfg: &GameConfig, logits: &[Vec<f64>]) -> Policy {
    Policy::from_rows(
        logits
            .iter()
            .zip(cfg.pi0().rows())
            .map(|(l, r0)| {
                let z: Vec<f64> = l.iter().zip(r0).map(|(v, p)| v + p.ln()).collect();
                let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
                let s: f64 = e.iter().sum();
                e.iter().map(|v| v / s).collect()
            })
            .collect(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IpoOptions {
    /// Duality-gap bound the final policy must satisfy.
    pub tol: f64,
    pub max_iter: usize,
    /// Iteration stops once the logit gradient has max-norm below this.
    pub grad_tol: f64,
}

impl Default for IpoOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 100_000,
            grad_tol: 1e-12,
        }
    }
}

/// Gradient descent on the self-play IPO loss over per-prompt logits
/// (policy `∝ pi0 exp(logits)`), with the sampler frozen at the current
/// iterate and an Armijo backtracking step. The result is certified by its
/// duality gap.
pub fn ipo_solve(cfg: &GameConfig, p_hat: &PreferenceFunction, tol: f64, max_iter: usize) -> Result<NashResult> {
    ipo_solve_with(cfg, p_hat, &IpoOptions { tol, max_iter, ..IpoOptions::default() })
}

pub fn ipo_solve_with(cfg: &GameConfig, p_hat: &PreferenceFunction, opts: &IpoOptions) -> Result<NashResult> {
    cfg.check_payoff(p_hat)?;
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidParameter("tolerance must be positive".into()));
    }
    let c = ipo_target(cfg.eta());
    let mut logits: Vec<Vec<f64>> = (0..cfg.num_prompts()).map(|x| vec![0.0; cfg.num_actions(x)]).collect();
    let max_w = cfg.d0().iter().copied().fold(0.0, f64::max);
    let step_cap = 1.0 / (8.0 * max_w);
    let mut step = step_cap;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        let pi = softmax_policy(cfg, &logits);
        let g = log_ratios(cfg, &pi)?;
        let grad = semi_gradient(cfg, p_hat, &pi, &g, c);
        let gmax = grad.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        if gmax <= opts.grad_tol {
            break;
        }
        let gsq: f64 = grad.iter().flatten().map(|v| v * v).sum();
        let f0 = surrogate(cfg, p_hat, &pi, &g, c);
        step = (step * 2.0).min(step_cap);
        loop {
            let trial: Vec<Vec<f64>> = logits
                .iter()
                .zip(&grad)
                .map(|(l, d)| l.iter().zip(d).map(|(u, v)| u - step * v).collect())
                .collect();
            let tp = softmax_policy(cfg, &trial);
            // log ratios of the trial logits, scored under the frozen sampler
            let tg: Vec<Vec<f64>> = tp
                .rows()
                .iter()
                .zip(cfg.pi0().rows())
                .map(|(r, r0)| r.iter().zip(r0).map(|(p, q)| (p / q).ln()).collect())
                .collect();
            let f1 = surrogate(cfg, p_hat, &pi, &tg, c);
            if f1 <= f0 - 0.5 * step * gsq || step < 1e-16 {
                logits = trial;
                break;
            }
            step *= 0.5;
        }
    }
    let policy = softmax_policy(cfg, &logits);
    let gap = duality_gap(cfg, p_hat, &policy, &policy)?;
    let br = crate::game::best_response_max(cfg, p_hat, &policy);
    let result = NashResult {
        residual: policy.max_abs_diff(&br),
        policy,
        duality_gap: gap,
        iterations,
        converged: gap <= opts.tol,
    };
    if result.converged {
        Ok(result)
    } else {
        Err(Error::NonConvergence {
            solver: "ipo",
            iterations,
            best_gap: gap,
            best: Box::new(result),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{ActionSpace, PromptSpace};
    use crate::oracles::{bt_oracle, cyclic_oracle, RewardTable};
    use crate::solver::solve_nash;

    #[test]
    fn indifferent_reference_loss() {
        for eta in [0.5, 1.0, 3.0] {
            let cfg = GameConfig::uniform(2, 3, eta).unwrap();
            let half = PreferenceFunction::indifferent(cfg.actions());
            let l = ipo_population_loss(&cfg, cfg.pi0(), &half).unwrap();
            let c = ipo_target(eta);
            assert!((l - c * c).abs() < 1e-14);
        }
        // At eta = 1 the target is 1/2 and the loss is 1/4.
        let cfg = GameConfig::uniform(1, 2, 1.0).unwrap();
        let l = ipo_population_loss(&cfg, cfg.pi0(), &PreferenceFunction::indifferent(cfg.actions())).unwrap();
        assert!((l - 0.25).abs() < 1e-15);
    }

    #[test]
    fn residual_vanishes_at_nash() {
        let cfg = GameConfig::uniform(2, 3, 2.0).unwrap();
        let p = bt_oracle(&RewardTable::new(vec![vec![0.0, 1.0, -0.5], vec![2.0, 0.0, 0.5]]).unwrap());
        let nash = solve_nash(&cfg, &p, 1e-12, 100_000).unwrap();
        let r = ipo_residual(&cfg, &nash.policy, &p).unwrap();
        assert!(r.iter().flatten().all(|v| v.abs() < 1e-9));
        let r = ipo_residual(&cfg, cfg.pi0(), &p).unwrap();
        assert!(r.iter().flatten().any(|v| v.abs() > 1e-3));
    }

    #[test]
    fn rps_solution_is_uniform() {
        let cfg = GameConfig::uniform(1, 3, 1.0).unwrap();
        let p = cyclic_oracle(1, 3, 0.75).unwrap();
        let r = ipo_solve(&cfg, &p, 1e-8, 10_000).unwrap();
        assert!(r.policy.max_abs_diff(&Policy::uniform(cfg.actions())) < 1e-4);
    }

    #[test]
    fn indifferent_solution_is_reference() {
        let a = ActionSpace::uniform(1, 3).unwrap();
        let pi0 = Policy::new(vec![vec![0.1, 0.3, 0.6]]).unwrap();
        let cfg = GameConfig::new(PromptSpace::uniform(1).unwrap(), a.clone(), pi0.clone(), 2.0).unwrap();
        let r = ipo_solve(&cfg, &PreferenceFunction::indifferent(&a), 1e-8, 10_000).unwrap();
        assert!(r.policy.max_abs_diff(&pi0) < 1e-6);
    }

    #[test]
    fn agrees_with_fixed_point_solver() {
        let a = ActionSpace::new(vec![3, 4]).unwrap();
        let pi0 = Policy::new(vec![vec![0.5, 0.3, 0.2], vec![0.1, 0.2, 0.3, 0.4]]).unwrap();
        let cfg = GameConfig::new(PromptSpace::new(vec![0.3, 0.7]).unwrap(), a.clone(), pi0, 1.5).unwrap();
        let p = PreferenceFunction::from_fn(&a, |x, i, j| 0.5 + 0.4 * ((x + 2 * i + 3 * j) as f64).cos()).unwrap();
        let n = solve_nash(&cfg, &p, 1e-10, 100_000).unwrap();
        let r = ipo_solve(&cfg, &p, 1e-8, 100_000).unwrap();
        assert!(r.policy.max_abs_diff(&n.policy) < 1e-5);
    }
}
