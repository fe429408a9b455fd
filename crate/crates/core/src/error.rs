use thiserror::Error;

/// Errors raised by every fallible operation in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty marginal")]
    EmptyMarginal,
    #[error("axis {axis} out of range for dimension {dim}")]
    AxisOutOfRange { axis: usize, dim: usize },
    #[error("supports do not match")]
    SupportMismatch,
    #[error("divergence undefined: {0}")]
    DivergenceUndefined(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("regime violated: {0}")]
    RegimeViolated(String),
    #[error("sample too small: {0}")]
    SampleTooSmall(String),
    #[error("pushforward requires finite output")]
    NonFiniteChannel,
    #[error("conditioning point {0} has zero mass")]
    ZeroMass(f64),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("missing subset entry {0:?}")]
    MissingSubset(Vec<usize>),
    #[error("use quadrature report instead")]
    DensityInstance,
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
