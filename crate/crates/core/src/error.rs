//! Crate-wide error type. Variants are coarse enough to match on and fine
//! enough to tell a caller what actually went wrong.

use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Coordinates do not describe a point of the manifold (wrong length,
    /// off the sphere beyond tolerance, non-positive half-plane height, ...).
    #[error("invalid point: {0}")]
    InvalidPoint(String),

    /// A tangent or cotangent vector is incompatible with its base point.
    #[error("invalid vector: {0}")]
    InvalidVector(String),

    /// Logarithm requested at or beyond the cut locus (antipodal points).
    #[error("cut locus: {0}")]
    CutLocus(String),

    /// A curve failed validation (times not strictly increasing, length
    /// mismatch, consecutive points out of injectivity range, ...).
    #[error("degenerate curve: {0}")]
    DegenerateCurve(String),

    /// An argument is outside the operation's domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// An index or evaluation time fell outside the stored range.
    #[error("out of range: {0}")]
    OutOfRange(String),

    /// An iterative solver exhausted its budget without meeting tolerance.
    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },

    /// An ODE or flow step produced a non-finite state.
    #[error("step failure: {0}")]
    StepFailure(String),

    /// Every Monte Carlo level recorded zero hits; no rate can be fitted.
    #[error("all levels recorded zero hits; nothing to fit")]
    AllZeroCounts,

    /// Fewer than two levels survived zero-count dropping.
    #[error("only {0} level(s) with hits; the slope fit needs at least 2")]
    TooFewLevels(usize),

    /// A persisted report declares a schema version this build cannot read.
    #[error("report schema version {found} (expected {expected})")]
    SchemaVersion { found: u32, expected: u32 },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}
