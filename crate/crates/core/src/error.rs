use alloc::string::String;

/// Errors raised by the trajectory, network and evaluation routines.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid task: {0}")]
    InvalidTask(&'static str),

    #[error("degenerate geometry: {0}")]
    Degenerate(&'static str),

    #[error("covariance is singular (determinant {det:e}); entropy undefined")]
    SingularCovariance { det: f64 },

    #[error("invalid argument `{name}`: {reason}")]
    InvalidArgument { name: &'static str, reason: String },

    #[error("shape mismatch in {layer}: expected {expected}, got {got}")]
    ShapeMismatch { layer: String, expected: String, got: String },

    #[error("stale cache: backward called for {layer} with a cache from a different forward pass")]
    StaleCache { layer: String },

    #[error("too few samples: need at least {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidArgument { name, reason: reason.into() }
}
