use thiserror::Error;

/// Errors produced by the simulation and estimation layers.
#[derive(Debug, Error)]
pub enum CoreError {
    /// A configured value violates a precondition.
    #[error("configuration error: {0}")]
    Config(String),

    /// A requested operation would be aliased or under-resolved on the
    /// current grid. The message names the violated ratio and, where it
    /// exists, the safe range.
    #[error("sampling error: {0}")]
    Sampling(String),

    /// A requested quantity lies outside the validity window of the model.
    #[error("range error: {0}")]
    Range(String),

    /// The operation would need more memory or time than the slow
    /// reference path is meant to spend.
    #[error("resource error: {0}")]
    Resource(String),

    /// An iterative fit did not converge. Carries the final state so the
    /// caller can diagnose the failure.
    #[error(
        "fit did not converge after {iterations} iterations \
         (final rms residual {residual_rms:.3e}); parameter trace has {} entries",
        trace.len()
    )]
    NonConvergence {
        iterations: usize,
        residual_rms: f64,
        /// (iteration, cost, parameters) snapshots, oldest first.
        trace: Vec<(usize, f64, Vec<f64>)>,
    },

    /// The least-squares problem is singular along the named direction.
    #[error("degenerate fit: {null_direction} is not identifiable ({detail})")]
    Singular {
        null_direction: String,
        detail: String,
    },

    /// Input data violates an estimator precondition.
    #[error("invalid observation: {0}")]
    Observation(String),
}

pub type Result<T> = std::result::Result<T, CoreError>;
