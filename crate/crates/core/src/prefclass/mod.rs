//! Preference classes, maximum likelihood, version spaces and uncertainty bonuses.

mod finite;
mod linear;

pub use finite::{
    expected_sq_distance, log_likelihood, log_likelihood_tally, log_likelihood_unclipped, pair_bonus_empirical, pointwise_bonus,
    pointwise_bonus_table, sq_distance, sq_distance_tally, FiniteClass, PairBonus, LIKELIHOOD_CLIP,
};
pub use linear::{
    covariance_update, fit_logistic, linear_bt_bonus, logistic_log_likelihood, Covariance, FitOptions,
    LinearBTClass, LogisticFit, WeightedComparison,
};
