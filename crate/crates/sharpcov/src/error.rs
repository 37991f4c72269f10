//! Error type shared across the library.

use thiserror::Error;

/// Errors produced by estimator construction and the experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    /// A centering direction with zero length cannot define a projector.
    #[error("invalid centering projector: {0}")]
    InvalidProjector(String),

    /// Requested dimensions are inconsistent with the inputs.
    #[error("dimension error: {0}")]
    DimensionError(String),

    /// Fewer than `q + 1` nonzero sample eigenvalues were found.
    #[error("rank deficient: {0}")]
    RankDeficient(String),

    /// A requested spike eigenvalue does not exceed the bulk noise floor.
    #[error("spike below noise floor: {0}")]
    SpikeBelowNoiseFloor(String),

    /// The optimization target vector has zero length.
    #[error("zero target vector")]
    ZeroTarget,

    /// The target lies (numerically) inside the span of the spike basis,
    /// so the bias quotient is undefined.
    #[error("target in spike span: |z - z_H| = {0:.3e}")]
    TargetInSpikeSpan(f64),

    /// A basis transform that must be invertible is singular.
    #[error("singular transform")]
    SingularTransform,

    /// A corrected spike magnitude collapsed below tolerance.
    #[error("degenerate correction: {0}")]
    DegenerateCorrection(String),

    /// A covariance matrix that must be positive definite is not.
    #[error("not positive definite: {0}")]
    NotPositiveDefinite(String),

    /// The quadratic objective has no meaningful maximizer (`c1 = 0`).
    #[error("degenerate objective: c1 = 0")]
    DegenerateObjective,

    /// Matrix entries that must be finite are not.
    #[error("non-finite values: {0}")]
    NonFinite(String),

    /// Invalid experiment configuration.
    #[error("config error: {0}")]
    Config(String),

    /// Too many Monte-Carlo trials failed numerically.
    #[error("{failed} of {attempted} trial evaluations failed (limit 1%)")]
    TooManySkips { failed: usize, attempted: usize },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
