//! Exploration policies for the min player.

use crate::error::Result;
use crate::game::{best_response_min, kl_row, tilt, GameConfig, Policy, PreferenceFunction};
use crate::oracles::Tally;
use crate::prefclass::{FiniteClass, PairBonus};

use super::bon::best_of_n_policy;

/// Temperatures of the tilted candidates, as multiples of `eta`.
pub const TILT_TEMPERATURES: [f64; 5] = [0.25, 0.5, 1.0, 2.0, 4.0];
/// Tournament sizes of the best-of-n candidates.
pub const BON_SIZES: [usize; 3] = [2, 4, 8];

#[derive(Debug, Clone, PartialEq)]
pub struct Enhancement {
    pub policy: Policy,
    /// Realized pair bonus of `(main, policy)`.
    pub bonus: f64,
    /// Candidates generated and admitted; both 0 for the unrestricted enhancer.
    pub candidates: usize,
    pub admitted: usize,
    /// `max |ln(policy / pi0)|` over the support of `policy`.
    pub log_ratio_bound: f64,
}

/// `u(x, b) = sum_a main(a) (P - P_hat)(x, a, b)`.
fn gap_scores(p: &PreferenceFunction, p_hat: &PreferenceFunction, main: &Policy, x: usize) -> Vec<f64> {
    let k = main.row(x).len();
    (0..k)
        .map(|b| {
            main.row(x)
                .iter()
                .enumerate()
                .map(|(a, &w)| w * (p.value(x, a, b) - p_hat.value(x, a, b)))
                .sum()
        })
        .collect()
}

pub fn log_ratio_bound(cfg: &GameConfig, pi: &Policy) -> f64 {
    let mut out = 0.0f64;
    for x in 0..cfg.num_prompts() {
        for (&p, &r) in pi.row(x).iter().zip(cfg.pi0().row(x)) {
            if p > 0.0 {
                out = out.max((p / r).ln().abs());
            }
        }
    }
    out
}

/// Maximizer of the pair bonus against `main` over all policies.
///
/// For a fixed member and sign the bonus numerator is linear in each prompt's
/// row, so a deterministic policy is optimal. Ties go to the lower member
/// index, then the positive sign, then the lower action.
pub fn max_uncertainty_enhancer(
    class: &FiniteClass,
    p_hat: &PreferenceFunction,
    history: &Tally,
    lambda: f64,
    m: usize,
    main: &Policy,
    cfg: &GameConfig,
) -> Result<Enhancement> {
    cfg.check_policy(main)?;
    let bonus = PairBonus::new(class, p_hat, history, lambda, m)?;
    let mut best: Option<(f64, Vec<usize>)> = None;
    for (p, &scale) in class.members().iter().zip(bonus.scales()) {
        let gaps: Vec<Vec<f64>> = (0..cfg.num_prompts()).map(|x| gap_scores(p, p_hat, main, x)).collect();
        for sign in [1.0, -1.0] {
            let mut choice = Vec::with_capacity(gaps.len());
            let mut total = 0.0;
            for (x, u) in gaps.iter().enumerate() {
                let mut arg = 0;
                for b in 1..u.len() {
                    if sign * u[b] > sign * u[arg] {
                        arg = b;
                    }
                }
                choice.push(arg);
                total += cfg.d0()[x] * sign * u[arg];
            }
            let value = total.abs() * scale;
            if best.as_ref().map_or(true, |(v, _)| value > *v) {
                best = Some((value, choice));
            }
        }
    }
    let (value, choice) = best.expect("class is nonempty");
    let policy = Policy::deterministic(cfg.actions(), &choice)?;
    Ok(Enhancement {
        log_ratio_bound: log_ratio_bound(cfg, &policy),
        policy,
        bonus: value,
        candidates: 0,
        admitted: 0,
    })
}

/// Both sides of the restricted-set test
/// `E_x KL(pi || main) / eta <= beta (bonus(main, pi) + bonus(main, main))`.
/// The left side is infinite when `pi` leaves the support of `main`.
pub fn restricted_set_sides(bonus: &PairBonus, cfg: &GameConfig, beta: f64, main: &Policy, pi: &Policy) -> (f64, f64) {
    let mut kl = 0.0;
    for (x, &w) in cfg.d0().iter().enumerate() {
        match kl_row(pi.row(x), main.row(x), x) {
            Ok(v) => kl += w * v,
            Err(_) => return (f64::INFINITY, 0.0),
        }
    }
    let rhs = beta * (bonus.value(cfg, main, pi) + bonus.value(cfg, main, main));
    (kl / cfg.eta(), rhs)
}

/// Candidate policies: `main`, the estimate's best response to it, tilts of
/// `main` toward and away from each member's disagreement with the estimate,
/// and best-of-n selections of `main` ranked by the estimate.
pub fn restricted_candidates(class: &FiniteClass, p_hat: &PreferenceFunction, main: &Policy, cfg: &GameConfig) -> Result<Vec<Policy>> {
    let mut out = vec![main.clone(), best_response_min(cfg, p_hat, main)];
    for p in class.members() {
        let gaps: Vec<Vec<f64>> = (0..cfg.num_prompts()).map(|x| gap_scores(p, p_hat, main, x)).collect();
        for tau in TILT_TEMPERATURES {
            for sign in [1.0, -1.0] {
                let rows = gaps
                    .iter()
                    .enumerate()
                    .map(|(x, u)| tilt(main.row(x), u, sign * tau * cfg.eta()))
                    .collect();
                out.push(Policy::from_rows(rows));
            }
        }
    }
    for n in BON_SIZES {
        out.push(best_of_n_policy(main, p_hat, n, cfg)?);
    }
    Ok(out)
}

/// Bonus maximizer over the candidates that pass the restricted-set test.
/// `main` always passes, so the result is never empty. Ties go to the earlier candidate.
#[allow(clippy::too_many_arguments)]
pub fn kl_restricted_enhancer(
    class: &FiniteClass,
    p_hat: &PreferenceFunction,
    history: &Tally,
    lambda: f64,
    m: usize,
    beta: f64,
    main: &Policy,
    cfg: &GameConfig,
) -> Result<Enhancement> {
    cfg.check_policy(main)?;
    let bonus = PairBonus::new(class, p_hat, history, lambda, m)?;
    let candidates = restricted_candidates(class, p_hat, main, cfg)?;
    let mut admitted = 0;
    let mut best: Option<(f64, usize)> = None;
    for (i, pi) in candidates.iter().enumerate() {
        let (lhs, rhs) = restricted_set_sides(&bonus, cfg, beta, main, pi);
        // main has a zero left side; skip the comparison so rounding in the right side cannot drop it
        if i != 0 && lhs > rhs {
            continue;
        }
        admitted += 1;
        let v = bonus.value(cfg, main, pi);
        if best.map_or(true, |(b, _)| v > b) {
            best = Some((v, i));
        }
    }
    let (value, idx) = best.expect("main is always admitted");
    let total = candidates.len();
    let policy = candidates.into_iter().nth(idx).expect("index in range");
    Ok(Enhancement {
        log_ratio_bound: log_ratio_bound(cfg, &policy),
        policy,
        bonus: value,
        candidates: total,
        admitted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::ActionSpace;
    use crate::oracles::{bt_oracle, cyclic_oracle, RewardTable};
    use crate::rng;

    fn class3() -> (GameConfig, FiniteClass) {
        let cfg = GameConfig::uniform(2, 3, 1.0).unwrap();
        let a = cfg.actions().clone();
        let members = vec![
            cyclic_oracle(2, 3, 0.8).unwrap(),
            bt_oracle(&RewardTable::new(vec![vec![0.5, 0.0, -0.5], vec![0.0, 1.0, 0.2]]).unwrap()),
            PreferenceFunction::from_fn(&a, |x, i, j| 0.2 + 0.15 * (x + i + j) as f64).unwrap(),
        ];
        (cfg, FiniteClass::new(members).unwrap())
    }

    fn history(cfg: &GameConfig, pairs: &[(usize, usize, usize, bool)]) -> Tally {
        let mut t = Tally::zeros(cfg.actions());
        for &(x, a, b, y) in pairs {
            t.add(x, a, b, y);
        }
        t
    }

    #[test]
    fn singleton_class_gives_action_zero() {
        let (cfg, class) = class3();
        let single = class.subset(&[0]).unwrap();
        let t = history(&cfg, &[]);
        let e = max_uncertainty_enhancer(&single, single.get(0), &t, 1.0, 10, cfg.pi0(), &cfg).unwrap();
        assert_eq!(e.bonus, 0.0);
        assert_eq!(e.policy, Policy::deterministic(cfg.actions(), &[0, 0]).unwrap());
    }

    #[test]
    fn single_discrepancy_is_explored() {
        let a = ActionSpace::uniform(2, 3).unwrap();
        let cfg = GameConfig::uniform(2, 3, 1.0).unwrap();
        let base = PreferenceFunction::indifferent(&a);
        let other = PreferenceFunction::from_fn(&a, |x, i, j| if (x, i, j) == (0, 1, 2) { 0.8 } else { 0.5 }).unwrap();
        let class = FiniteClass::new(vec![base.clone(), other]).unwrap();
        let main = Policy::new(vec![vec![0.0, 1.0, 0.0], vec![1.0 / 3.0; 3]]).unwrap();
        let e = max_uncertainty_enhancer(&class, &base, &history(&cfg, &[]), 1.0, 1, &main, &cfg).unwrap();
        assert_eq!(e.policy.row(0), &[0.0, 0.0, 1.0]);
        assert!((e.bonus - 0.5 * 0.3).abs() < 1e-15);
    }

    #[test]
    fn beats_random_search() {
        let (cfg, class) = class3();
        let t = history(&cfg, &[(0, 0, 1, true), (1, 2, 0, false), (0, 2, 1, true)]);
        let mut g = rng::stream(42, 0);
        for trial in 0..5 {
            let main = random_policy(&mut g, &cfg);
            let p_hat = class.get(trial % 3);
            let e = max_uncertainty_enhancer(&class, p_hat, &t, 0.5, 3, &main, &cfg).unwrap();
            let bonus = PairBonus::new(&class, p_hat, &t, 0.5, 3).unwrap();
            assert!((bonus.value(&cfg, &main, &e.policy) - e.bonus).abs() < 1e-15);
            for _ in 0..1000 {
                let q = random_policy(&mut g, &cfg);
                assert!(bonus.value(&cfg, &main, &q) <= e.bonus + 1e-12);
            }
        }
    }

    fn random_policy(g: &mut impl rand::RngCore, cfg: &GameConfig) -> Policy {
        let rows = (0..cfg.num_prompts())
            .map(|x| {
                let v: Vec<f64> = (0..cfg.num_actions(x)).map(|_| -rng::uniform(g).max(1e-300).ln()).collect();
                let s: f64 = v.iter().sum();
                v.iter().map(|e| e / s).collect()
            })
            .collect();
        Policy::new(rows).unwrap()
    }

    #[test]
    fn restricted_with_zero_beta_returns_main() {
        let (cfg, class) = class3();
        let single = class.subset(&[1]).unwrap();
        let main = Policy::new(vec![vec![0.2, 0.5, 0.3], vec![0.4, 0.4, 0.2]]).unwrap();
        let e = kl_restricted_enhancer(&single, single.get(0), &history(&cfg, &[]), 1.0, 5, 0.0, &main, &cfg).unwrap();
        assert_eq!(e.policy, main);
        assert!(e.admitted >= 1);
    }

    #[test]
    fn restricted_with_huge_beta_is_unrestricted_over_candidates() {
        let (cfg, class) = class3();
        let t = history(&cfg, &[(0, 0, 1, true), (1, 1, 2, false)]);
        let main = cfg.pi0().clone();
        let p_hat = class.get(0);
        let e = kl_restricted_enhancer(&class, p_hat, &t, 1.0, 2, 1e12, &main, &cfg).unwrap();
        assert_eq!(e.admitted, e.candidates);
        let bonus = PairBonus::new(&class, p_hat, &t, 1.0, 2).unwrap();
        let best = restricted_candidates(&class, p_hat, &main, &cfg)
            .unwrap()
            .iter()
            .map(|q| bonus.value(&cfg, &main, q))
            .fold(0.0, f64::max);
        assert_eq!(e.bonus, best);
        assert!(e.bonus > 0.0);
    }

    #[test]
    fn restricted_output_passes_the_filter() {
        let (cfg, class) = class3();
        let t = history(&cfg, &[(0, 0, 1, true), (1, 1, 2, false), (0, 2, 2, true)]);
        let main = Policy::new(vec![vec![0.3, 0.3, 0.4], vec![0.1, 0.6, 0.3]]).unwrap();
        for beta in [0.01, 0.1, 1.0, 10.0] {
            let e = kl_restricted_enhancer(&class, class.get(1), &t, 1.0, 3, beta, &main, &cfg).unwrap();
            let bonus = PairBonus::new(&class, class.get(1), &t, 1.0, 3).unwrap();
            let kl: f64 = (0..2).map(|x| cfg.d0()[x] * kl_row(e.policy.row(x), main.row(x), x).unwrap()).sum();
            assert!(kl / cfg.eta() <= beta * (bonus.value(&cfg, &main, &e.policy) + bonus.value(&cfg, &main, &main)) + 1e-15);
            assert_eq!(e.candidates, 2 + 3 * 10 + 3);
        }
    }

    #[test]
    fn unrestricted_dominates_restricted() {
        let (cfg, class) = class3();
        let t = history(&cfg, &[(0, 0, 1, true)]);
        let main = cfg.pi0().clone();
        let u = max_uncertainty_enhancer(&class, class.get(2), &t, 1.0, 1, &main, &cfg).unwrap();
        let r = kl_restricted_enhancer(&class, class.get(2), &t, 1.0, 1, 1e9, &main, &cfg).unwrap();
        assert!(u.bonus >= r.bonus - 1e-15);
    }
}
