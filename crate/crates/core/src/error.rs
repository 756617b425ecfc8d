use thiserror::Error;

/// Errors raised by samplers, models and the estimator pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain an operation is defined on.
    #[error("domain error: {0}")]
    Domain(String),

    /// Every weight vanished, so no normalised distribution exists.
    #[error("degenerate weights{}", stage_suffix(*.stage))]
    DegenerateWeights { stage: Option<usize> },

    /// Conditional resampling needs positive mass on the reference index.
    #[error("conditioning impossible: reference index has zero probability")]
    ConditioningImpossible,

    /// A probability vector's raw sum strays too far from one.
    #[error("probability vector sums to {sum}, expected 1")]
    NotNormalized { sum: f64 },

    /// Linear algebra or iterative numerics failed.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// An internal bookkeeping invariant was violated.
    #[error("internal invariant violated: {0}")]
    Invariant(String),

    /// The estimator was asked for a value that is undefined for this input.
    #[error("estimator: {0}")]
    Estimator(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn stage_suffix(stage: Option<usize>) -> String {
    match stage {
        Some(s) => format!(" at stage {s}"),
        None => String::new(),
    }
}

pub type Result<T> = std::result::Result<T, Error>;
