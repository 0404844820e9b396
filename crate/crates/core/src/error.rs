use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Shapes of policies, tables, or datasets disagree.
    #[error("structural mismatch: {0}")]
    Structure(String),

    /// A policy puts mass where the reference policy has none, so a KL term is undefined.
    #[error("support violation at prompt {prompt}, action {action}: reference policy has zero mass")]
    SupportViolation { prompt: usize, action: usize },

    /// A probability vector does not sum to one within tolerance or has a negative entry.
    #[error("invalid distribution at prompt {prompt}: {reason}")]
    InvalidDistribution { prompt: usize, reason: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// An iterative solver stopped without producing its certificate.
    #[error("{solver} did not converge after {iterations} iterations (best gap {best_gap:e})")]
    NonConvergence {
        solver: &'static str,
        iterations: usize,
        best_gap: f64,
        best: Box<crate::solver::NashResult>,
    },

    /// Projected gradient ascent for the linear Bradley-Terry class hit its iteration cap.
    #[error("linear-class MLE did not converge after {iterations} iterations (gradient norm {grad_norm:e})")]
    LinearFit {
        iterations: usize,
        grad_norm: f64,
        theta: Vec<f64>,
    },

    /// The online loop stopped early; `partial` holds the completed iterations.
    #[error("online run aborted at iteration {iteration}: {source}")]
    Aborted {
        iteration: usize,
        partial: Box<crate::online::OnlineTrace>,
        source: Box<Error>,
    },

    #[error("singular covariance matrix")]
    Singular,

    #[error("parse error: {0}")]
    Parse(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
