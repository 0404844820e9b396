//! Pinned instances and classes used by the acceptance suite and examples.

use rand::RngCore;

use crate::error::Result;
use crate::game::{ActionSpace, GameConfig, Policy, PreferenceFunction, PromptSpace};
use crate::oracles::{bt_oracle, cyclic_oracle, RewardTable};
use crate::prefclass::FiniteClass;
use crate::rng;

/// Seed behind every pinned random instance.
pub const PINNED_SEED: u64 = 0x005E_ED0F_6A4E;

/// Temperatures cycled through by [`random_instance`].
pub const PINNED_ETAS: [f64; 3] = [0.5, 1.0, 5.0];

/// Uniform draw in `[lo, hi)`.
pub fn uniform_in(g: &mut impl RngCore, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng::uniform(g)
}

/// Flat Dirichlet draw of length `k`, floored at `floor` before renormalizing.
pub fn random_simplex(g: &mut impl RngCore, k: usize, floor: f64) -> Vec<f64> {
    let v: Vec<f64> = (0..k).map(|_| -(1.0 - rng::uniform(g)).ln() + floor).collect();
    let s: f64 = v.iter().sum();
    v.iter().map(|x| x / s).collect()
}

pub fn random_policy(g: &mut impl RngCore, actions: &ActionSpace, floor: f64) -> Policy {
    Policy::new(actions.counts().iter().map(|&k| random_simplex(g, k, floor)).collect()).expect("simplex rows")
}

/// Preference table with upper-triangle entries uniform in `[lo, hi]`.
pub fn random_preference(g: &mut impl RngCore, actions: &ActionSpace, lo: f64, hi: f64) -> PreferenceFunction {
    PreferenceFunction::from_fn(actions, |_, _, _| uniform_in(g, lo, hi)).expect("entries in [0, 1]")
}

/// Rock-paper-scissors: one prompt, three actions, uniform reference, each action beats the next with probability 0.75.
pub fn rps_instance(eta: f64) -> Result<(GameConfig, PreferenceFunction)> {
    Ok((GameConfig::uniform(1, 3, eta)?, cyclic_oracle(1, 3, 0.75)?))
}

/// One prompt, two actions, uniform reference, `eta = 1`, rewards `(1, 0)`.
pub fn bt_two_action_instance() -> Result<(GameConfig, PreferenceFunction)> {
    let cfg = GameConfig::uniform(1, 2, 1.0)?;
    Ok((cfg, bt_oracle(&RewardTable::new(vec![vec![1.0, 0.0]])?)))
}

/// Random instance number `index`: 1 to 3 prompts, 2 to 5 actions each,
/// random weights and reference policy, `eta` cycling through [`PINNED_ETAS`].
pub fn random_instance(index: u64) -> Result<(GameConfig, PreferenceFunction)> {
    let mut g = rng::stream(PINNED_SEED, index);
    let nx = 1 + (g.next_u64() % 3) as usize;
    let counts: Vec<usize> = (0..nx).map(|_| 2 + (g.next_u64() % 4) as usize).collect();
    let actions = ActionSpace::new(counts)?;
    let d0 = random_simplex(&mut g, nx, 0.1);
    let pi0 = random_policy(&mut g, &actions, 0.2);
    let p = random_preference(&mut g, &actions, 0.02, 0.98);
    let eta = PINNED_ETAS[(index % 3) as usize];
    Ok((GameConfig::new(PromptSpace::new(d0)?, actions, pi0, eta)?, p))
}

/// The twenty pinned random instances.
pub fn pinned_instances() -> Result<Vec<(GameConfig, PreferenceFunction)>> {
    (0..20).map(random_instance).collect()
}

/// Two prompts with three actions each, a random reference policy, and a class
/// of eight random tables whose member 3 is the truth.
pub fn confidence_setup() -> Result<(GameConfig, FiniteClass)> {
    let mut g = rng::stream(PINNED_SEED ^ 0xC1A5, 0);
    let actions = ActionSpace::uniform(2, 3)?;
    let pi0 = random_policy(&mut g, &actions, 0.5);
    let cfg = GameConfig::new(PromptSpace::new(vec![0.6, 0.4])?, actions.clone(), pi0, 1.0)?;
    let members = (0..8).map(|_| random_preference(&mut g, &actions, 0.1, 0.9)).collect();
    Ok((cfg, FiniteClass::new(members)?.with_truth(3)?))
}

/// Rock-paper-scissors truth (index 2) plus three alternatives with
/// non-uniform equilibria: a transitive order and two lopsided cycles.
/// Index 0, which the online loop fits before it has data, is not the truth.
pub fn rps_class() -> Result<FiniteClass> {
    let a = ActionSpace::uniform(1, 3)?;
    // upper triangle order: (0,1), (0,2), (1,2)
    FiniteClass::new(vec![
        bt_oracle(&RewardTable::new(vec![vec![1.0, 0.0, -1.0]])?),
        PreferenceFunction::from_upper(&a, vec![vec![0.7, 0.2, 0.55]])?,
        cyclic_oracle(1, 3, 0.75)?,
        PreferenceFunction::from_upper(&a, vec![vec![0.35, 0.6, 0.2]])?,
    ])?
    .with_truth(2)
}
