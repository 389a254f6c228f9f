//! Error types shared across the crate.

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors surfaced by the numerical and statistical layers.
///
/// Near-singular information matrices, exhausted subdivision budgets and
/// degenerate samples are reported as typed errors instead of NaNs so that
/// callers (and the CLI exit-code mapping) can distinguish bad configuration
/// from bad data from genuine numerical failure.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// The integrand returned NaN or an infinity inside the window.
    #[error("non-finite integrand value at x = {x}")]
    NonFinite { x: f64 },

    /// An iteration budget ran out before the tolerance was met.
    #[error("budget exhausted: {0}")]
    Budget(String),

    /// A claimed CDF was not strictly increasing on the probe grid.
    #[error("cdf is not strictly increasing near x = {x}")]
    BadCdf { x: f64 },

    /// A normalizing integral failed to converge or came out non-positive.
    #[error("normalizing integral diverged: {0}")]
    Divergent(String),

    /// An eta-score was requested from a model with fixed known noise.
    #[error("noise model is not parametric")]
    NotParametricNoise,

    /// A theta-only operation was invoked on a model with parametric noise.
    #[error("operation requires a fixed known noise density")]
    KnownNoiseRequired,

    /// Information matrix failed the numerical nonsingularity check.
    #[error(
        "information matrix ill-conditioned: min/max eigenvalue ratio {ratio:.3e} (threshold {threshold:.1e})"
    )]
    IllConditionedInformation { ratio: f64, threshold: f64 },

    /// The sample cannot support the requested estimator.
    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    /// Vector/matrix dimensions disagree.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// Argument outside the documented domain.
    #[error("out of domain: {0}")]
    OutOfDomain(String),

    /// Invalid run configuration (CLI layer).
    #[error("invalid configuration: {0}")]
    Config(String),
}
