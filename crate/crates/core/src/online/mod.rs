//! Online learning: the batch loop with an exploring enhancer, and best-of-n selection.

mod bon;
mod enhancer;
mod run;

pub use bon::{best_of_n_kl_bound, best_of_n_policy, best_of_n_row, best_of_n_sample, best_of_n_sampled};
pub use enhancer::{
    kl_restricted_enhancer, log_ratio_bound, max_uncertainty_enhancer, restricted_candidates, restricted_set_sides,
    Enhancement, BON_SIZES, TILT_TEMPERATURES,
};
pub use run::{
    eluder_diagnostic, oelhf_run, online_suboptimality_bound, select_checkpoint, select_checkpoint_sampled,
    theorem2_hyperparams, EluderDiagnostic, EnhancerMode, IterationRecord, OnlineConfig, OnlineHyperparams,
    OnlineTrace,
};
