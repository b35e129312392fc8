use thiserror::Error;

use crate::langevin::SpdeTrajectory;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure mode of the toolkit.
///
/// The variants are grouped by how a caller is expected to react: configuration
/// problems are fixed by the user, numerical degeneracies signal that an
/// estimate cannot be trusted, and the remaining ones are I/O plumbing.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("fields live on different bases ({left} vs {right})")]
    BasisMismatch { left: String, right: String },

    #[error("coefficient field is not positive: min value {min} at x = {x}")]
    Positivity { min: f64, x: f64 },

    #[error("series diverges: {0}")]
    Divergence(String),

    #[error("all importance weights underflowed (largest log-weight {max_log_weight})")]
    DegenerateWeights { max_log_weight: f64 },

    #[error("series is constant; autocorrelation time is undefined")]
    DegenerateSeries,

    #[error("quadrature did not converge: refinement changed a moment by {change:e}")]
    OracleUnreliable { change: f64 },

    #[error("ratio is undefined: {0}")]
    UndefinedRatio(String),

    #[error("finite-difference gradient requested on {requested} modes (limit {limit})")]
    CostGuard { requested: usize, limit: usize },

    #[error("SPDE integration diverged at t = {time}")]
    SpdeDivergence { time: f64, prefix: Box<SpdeTrajectory> },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// True for the failures that mean "the numbers cannot be trusted" rather
    /// than "the input was wrong".
    pub fn is_numerical_degeneracy(&self) -> bool {
        matches!(
            self,
            Error::DegenerateWeights { .. }
                | Error::DegenerateSeries
                | Error::Divergence(_)
                | Error::SpdeDivergence { .. }
                | Error::UndefinedRatio(_)
        )
    }
}
