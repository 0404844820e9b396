//! Ground-truth preference oracles and simulated data collection.

mod dataset;

pub use dataset::{PreferenceDataset, Record, Tally};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::game::{ActionSpace, GameConfig, Payoff, Policy, PreferenceFunction};
use crate::rng;

/// Edges closer to 1/2 than this are ignored by default when looking for cycles.
pub const DEFAULT_TRANSITIVITY_THRESHOLD: f64 = 1e-9;

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Scalar reward per prompt and action.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardTable {
    rewards: Vec<Vec<f64>>,
}

impl RewardTable {
    pub fn new(rewards: Vec<Vec<f64>>) -> Result<Self> {
        let counts: Vec<usize> = rewards.iter().map(Vec::len).collect();
        ActionSpace::new(counts)?;
        if rewards.iter().flatten().any(|r| !r.is_finite()) {
            return Err(Error::InvalidParameter("rewards must be finite".into()));
        }
        Ok(Self { rewards })
    }

    pub fn actions(&self) -> ActionSpace {
        ActionSpace::new(self.rewards.iter().map(Vec::len).collect()).expect("validated")
    }

    pub fn get(&self, x: usize, a: usize) -> f64 {
        self.rewards[x][a]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rewards
    }
}

/// Bradley-Terry preferences `P(x,a,b) = sigmoid(R(x,a) - R(x,b))`.
pub fn bt_oracle(rewards: &RewardTable) -> PreferenceFunction {
    PreferenceFunction::from_fn(&rewards.actions(), |x, a, b| sigmoid(rewards.get(x, a) - rewards.get(x, b)))
        .expect("sigmoid values lie in [0, 1]")
}

/// Cyclic tournament on `k` actions: each action beats its successor with probability `w`.
///
/// Pairs that are not adjacent on the cycle are ties when `k > 3`.
pub fn cyclic_oracle(n_prompts: usize, k: usize, w: f64) -> Result<PreferenceFunction> {
    if k < 3 {
        return Err(Error::InvalidParameter(format!("a cycle needs at least 3 actions, got {k}")));
    }
    if !(w > 0.5 && w <= 1.0) {
        return Err(Error::InvalidParameter(format!("cycle strength must lie in (0.5, 1], got {w}")));
    }
    let actions = ActionSpace::uniform(n_prompts, k)?;
    PreferenceFunction::from_fn(&actions, |_, a, b| {
        if b == a + 1 {
            w
        } else if a == 0 && b == k - 1 {
            1.0 - w
        } else {
            0.5
        }
    })
}

/// Outcome of [`transitivity_check`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Transitivity {
    Acyclic,
    /// Actions in the order they beat each other; the last beats the first.
    Cycle { prompt: usize, actions: Vec<usize> },
}

/// Searches each prompt's tournament graph (`a -> b` iff `P(x,a,b) > 1/2 + threshold`)
/// for a directed cycle and returns the first one found.
pub fn transitivity_check(p: &PreferenceFunction, threshold: f64) -> Transitivity {
    for x in 0..p.num_prompts() {
        let k = p.num_actions(x);
        let beats = |a: usize, b: usize| p.value(x, a, b) > 0.5 + threshold;
        // 0 = unvisited, 1 = on stack, 2 = done
        let mut state = vec![0u8; k];
        for start in 0..k {
            if state[start] != 0 {
                continue;
            }
            let mut path = vec![start];
            let mut next = vec![0usize];
            state[start] = 1;
            while let Some(&node) = path.last() {
                let i = next.last_mut().expect("parallel stacks");
                if *i == k {
                    state[node] = 2;
                    path.pop();
                    next.pop();
                    continue;
                }
                let b = *i;
                *i += 1;
                if b == node || !beats(node, b) {
                    continue;
                }
                match state[b] {
                    0 => {
                        state[b] = 1;
                        path.push(b);
                        next.push(0);
                    }
                    1 => {
                        let from = path.iter().position(|&v| v == b).expect("on stack");
                        return Transitivity::Cycle {
                            prompt: x,
                            actions: path[from..].to_vec(),
                        };
                    }
                    _ => {}
                }
            }
        }
    }
    Transitivity::Acyclic
}

fn draw(cfg: &GameConfig, pd1: &Policy, pd2: &Policy, oracle: &PreferenceFunction, seed: u64, i: u64) -> Record {
    let mut g = rng::stream(seed, i);
    let x = rng::categorical(&mut g, cfg.d0());
    let a1 = rng::categorical(&mut g, pd1.row(x));
    let a2 = rng::categorical(&mut g, pd2.row(x));
    let y = rng::bernoulli(&mut g, oracle.value(x, a1, a2));
    Record { x, a1, a2, y }
}

fn check_inputs(cfg: &GameConfig, pd1: &Policy, pd2: &Policy, oracle: &PreferenceFunction) -> Result<()> {
    cfg.check_policy(pd1)?;
    cfg.check_policy(pd2)?;
    cfg.check_payoff(oracle)
}

/// Records `start..end` of the stream that [`collect`] draws from.
pub fn collect_range(
    cfg: &GameConfig,
    pd1: &Policy,
    pd2: &Policy,
    oracle: &PreferenceFunction,
    start: u64,
    end: u64,
    seed: u64,
) -> Result<Vec<Record>> {
    check_inputs(cfg, pd1, pd2, oracle)?;
    Ok((start..end)
        .into_par_iter()
        .map(|i| draw(cfg, pd1, pd2, oracle, seed, i))
        .collect())
}

/// `n` labeled comparisons: `x ~ d0`, `a1 ~ pd1(.|x)`, `a2 ~ pd2(.|x)`, `y ~ Bernoulli(P(x,a1,a2))`.
///
/// Record `i` depends only on `(seed, i)`, so the result is independent of
/// how the index range is split across threads.
pub fn collect(
    cfg: &GameConfig,
    pd1: &Policy,
    pd2: &Policy,
    oracle: &PreferenceFunction,
    n: usize,
    seed: u64,
    behavior: [&str; 2],
) -> Result<PreferenceDataset> {
    let records = collect_range(cfg, pd1, pd2, oracle, 0, n as u64, seed)?;
    PreferenceDataset::new(records, seed, rng::RNG_ALGORITHM, behavior)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bt_examples() {
        let r = RewardTable::new(vec![vec![1.0, 0.0, 0.0]]).unwrap();
        let p = bt_oracle(&r);
        assert_eq!(p.value(0, 1, 2), 0.5);
        assert!((p.value(0, 0, 1) - 0.731_058_578_630_004_9).abs() < 1e-15);
        let r = RewardTable::new(vec![vec![10.0, -10.0]]).unwrap();
        let p = bt_oracle(&r);
        assert!((p.value(0, 0, 1) - (1.0 - 2.061_153_618_190_204e-9)).abs() < 1e-15);
        assert!(RewardTable::new(vec![vec![f64::INFINITY, 0.0]]).is_err());
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(-800.0), 0.0);
        assert_eq!(sigmoid(800.0), 1.0);
        assert!((sigmoid(-20.0) - 2.061_153_618_190_204e-9).abs() < 1e-22);
    }

    #[test]
    fn cyclic_examples() {
        let p = cyclic_oracle(1, 3, 0.75).unwrap();
        assert_eq!(p.upper(0), vec![0.75, 0.25, 0.75]);
        assert_eq!(
            transitivity_check(&p, 1e-9),
            Transitivity::Cycle { prompt: 0, actions: vec![0, 1, 2] }
        );
        let weak = cyclic_oracle(1, 3, 0.5 + 1e-9).unwrap();
        assert_eq!(transitivity_check(&weak, 1e-6), Transitivity::Acyclic);
        assert!(cyclic_oracle(1, 3, 0.5).is_err());
        assert!(cyclic_oracle(1, 2, 0.7).is_err());
        let p5 = cyclic_oracle(2, 5, 0.9).unwrap();
        assert_eq!(p5.value(1, 4, 0), 0.9);
        assert_eq!(p5.value(1, 0, 2), 0.5);
        assert!(matches!(transitivity_check(&p5, 0.0), Transitivity::Cycle { prompt: 0, ref actions } if actions.len() == 5));
    }

    #[test]
    fn indifferent_table_is_acyclic() {
        let a = ActionSpace::uniform(2, 4).unwrap();
        assert_eq!(
            transitivity_check(&PreferenceFunction::indifferent(&a), 0.0),
            Transitivity::Acyclic
        );
    }

    #[test]
    fn cycle_found_on_later_prompt() {
        let a = ActionSpace::uniform(2, 4).unwrap();
        // prompt 0 ordered, prompt 1 has 1 -> 2 -> 3 -> 1
        let p = PreferenceFunction::from_fn(&a, |x, a, b| match (x, a, b) {
            (0, _, _) => 0.8,
            (1, 1, 2) | (1, 2, 3) => 0.9,
            (1, 1, 3) => 0.1,
            _ => 0.5,
        })
        .unwrap();
        assert_eq!(
            transitivity_check(&p, 1e-9),
            Transitivity::Cycle { prompt: 1, actions: vec![1, 2, 3] }
        );
    }

    #[test]
    fn collect_is_deterministic_and_splittable() {
        let cfg = GameConfig::uniform(2, 3, 1.0).unwrap();
        let p = cyclic_oracle(2, 3, 0.75).unwrap();
        let u = Policy::uniform(cfg.actions());
        let a = collect(&cfg, &u, &u, &p, 500, 9, ["u", "u"]).unwrap();
        let b = collect(&cfg, &u, &u, &p, 500, 9, ["u", "u"]).unwrap();
        assert_eq!(a.to_text(), b.to_text());
        let mut parts = collect_range(&cfg, &u, &u, &p, 0, 200, 9).unwrap();
        parts.extend(collect_range(&cfg, &u, &u, &p, 200, 500, 9).unwrap());
        assert_eq!(parts, a.records);
        let c = collect(&cfg, &u, &u, &p, 500, 10, ["u", "u"]).unwrap();
        assert_ne!(a.records, c.records);
        assert!(collect(&cfg, &u, &u, &p, 0, 1, ["u", "u"]).unwrap().is_empty());
    }

    #[test]
    fn degenerate_oracle_gives_all_ones() {
        let cfg = GameConfig::uniform(1, 3, 1.0).unwrap();
        let p = PreferenceFunction::from_fn(cfg.actions(), |_, _, _| 1.0).unwrap();
        let first = Policy::deterministic(cfg.actions(), &[0]).unwrap();
        let last = Policy::deterministic(cfg.actions(), &[2]).unwrap();
        let d = collect(&cfg, &first, &last, &p, 1000, 3, ["a", "b"]).unwrap();
        assert!(d.records.iter().all(|r| r.y && r.a1 == 0 && r.a2 == 2));
    }

    #[test]
    fn label_mean_concentrates() {
        let cfg = GameConfig::uniform(1, 3, 1.0).unwrap();
        let p = cyclic_oracle(1, 3, 0.75).unwrap();
        let u = Policy::uniform(cfg.actions());
        let n = 100_000;
        let d = collect(&cfg, &u, &u, &p, n, 2024, ["u", "u"]).unwrap();
        let mean = d.records.iter().filter(|r| r.y).count() as f64 / n as f64;
        assert!((mean - 0.5).abs() < 3.0 * 0.5 / (n as f64).sqrt());
    }

    #[test]
    fn cell_frequencies_match_oracle() {
        let cfg = GameConfig::uniform(1, 2, 1.0).unwrap();
        let p = PreferenceFunction::from_upper(cfg.actions(), vec![vec![0.3]]).unwrap();
        let first = Policy::deterministic(cfg.actions(), &[0]).unwrap();
        let second = Policy::deterministic(cfg.actions(), &[1]).unwrap();
        let n = 50_000;
        let d = collect(&cfg, &first, &second, &p, n, 77, ["a", "b"]).unwrap();
        let f = d.records.iter().filter(|r| r.y).count() as f64 / n as f64;
        assert!((f - 0.3).abs() < 3.0 * (0.21f64 / n as f64).sqrt());
    }
}
