//! Best-of-n by single-elimination tournament.

use crate::error::{Error, Result};
use crate::game::{GameConfig, Policy, PreferenceFunction};
use crate::rng;

fn check_n(n: usize) -> Result<()> {
    if n == 0 || !n.is_power_of_two() {
        return Err(Error::InvalidParameter(format!("best-of-n needs a power of two, got {n}")));
    }
    Ok(())
}

/// Winner of a match between the earlier slot `e` and the later slot `l`.
/// The later slot needs a strict preference to win.
fn winner(rank: &PreferenceFunction, x: usize, e: usize, l: usize) -> usize {
    if rank.value(x, l, e) > 0.5 {
        l
    } else {
        e
    }
}

/// Winner distribution of the bracket at one prompt. Two halves of a bracket
/// are independent and identically distributed, so the distribution doubles
/// one round at a time.
pub fn best_of_n_row(row: &[f64], rank: &PreferenceFunction, x: usize, n: usize) -> Result<Vec<f64>> {
    check_n(n)?;
    let k = row.len();
    let mut w = row.to_vec();
    let mut size = 1;
    while size < n {
        let mut next = vec![0.0; k];
        for (e, &pe) in w.iter().enumerate() {
            if pe == 0.0 {
                continue;
            }
            for (l, &pl) in w.iter().enumerate() {
                next[winner(rank, x, e, l)] += pe * pl;
            }
        }
        w = next;
        size *= 2;
    }
    Ok(w)
}

/// Exact best-of-n policy of `main` under the ranking `rank`.
pub fn best_of_n_policy(main: &Policy, rank: &PreferenceFunction, n: usize, cfg: &GameConfig) -> Result<Policy> {
    check_n(n)?;
    cfg.check_policy(main)?;
    cfg.check_payoff(rank)?;
    let rows = (0..cfg.num_prompts())
        .map(|x| best_of_n_row(main.row(x), rank, x, n))
        .collect::<Result<Vec<_>>>()?;
    Policy::new(rows)
}

/// One tournament at prompt `x` with draws from `stream(seed, index)`.
pub fn best_of_n_sample(main: &Policy, rank: &PreferenceFunction, n: usize, x: usize, seed: u64, index: u64) -> Result<usize> {
    check_n(n)?;
    let mut g = rng::stream(seed, index);
    let mut slots: Vec<usize> = (0..n).map(|_| rng::categorical(&mut g, main.row(x))).collect();
    while slots.len() > 1 {
        slots = slots.chunks(2).map(|c| winner(rank, x, c[0], c[1])).collect();
    }
    Ok(slots[0])
}

/// Empirical best-of-n policy from `samples` tournaments per prompt.
pub fn best_of_n_sampled(
    main: &Policy,
    rank: &PreferenceFunction,
    n: usize,
    cfg: &GameConfig,
    samples: usize,
    seed: u64,
) -> Result<Policy> {
    check_n(n)?;
    cfg.check_policy(main)?;
    cfg.check_payoff(rank)?;
    if samples == 0 {
        return Err(Error::InvalidParameter("sample count must be positive".into()));
    }
    let mut rows = Vec::with_capacity(cfg.num_prompts());
    for x in 0..cfg.num_prompts() {
        let mut counts = vec![0.0; cfg.num_actions(x)];
        let prompt_seed = rng::derive_seed(seed, x as u64);
        for i in 0..samples {
            counts[best_of_n_sample(main, rank, n, x, prompt_seed, i as u64)?] += 1.0;
        }
        rows.push(counts.iter().map(|c| c / samples as f64).collect());
    }
    Policy::new(rows)
}

/// `ln n - (n - 1) / n`.
pub fn best_of_n_kl_bound(n: usize) -> f64 {
    let n = n as f64;
    n.ln() - (n - 1.0) / n
}
