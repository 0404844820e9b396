//! Tabular solver and simulation lab for KL-regularized preference games.
//!
//! Two players pick per-prompt distributions over a finite action set. The
//! payoff of player one is the probability its action is preferred, minus a
//! KL penalty toward a reference policy; player two receives the negation.
//! The crate solves this game exactly, learns it from preference data
//! (offline with pessimism, online with an exploring enhancer), and checks the
//! associated guarantees numerically.

pub mod error;
pub mod game;
pub mod harness;
pub mod offline;
pub mod online;
pub mod oracles;
pub mod prefclass;
pub mod rng;
pub mod solver;

pub use error::{Error, Result};
pub use game::{
    duality_gap, expected_preference, game_value, gibbs_best_response, ActionSpace, GameConfig,
    Payoff, PayoffTable, Policy, PreferenceFunction, PromptSpace, Sign,
};
pub use oracles::{PreferenceDataset, Record, RewardTable};
pub use prefclass::{FiniteClass, LinearBTClass};
pub use solver::NashResult;
