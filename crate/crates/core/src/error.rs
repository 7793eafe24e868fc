use thiserror::Error;

/// Errors raised by builders, checkers and the experiment runner.
#[derive(Debug, Error)]
pub enum LabError {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("point cap exceeded: space needs {required} points but the cap is {cap}")]
    PointCap { required: usize, cap: usize },

    #[error("unknown point id {id} (space has {len} points)")]
    UnknownPoint { id: usize, len: usize },

    #[error("operation requires a {expected} space")]
    WrongSpace { expected: &'static str },

    #[error("kernel is not symmetric: j({x},{y}) = {forward} but j({y},{x}) = {backward}")]
    AsymmetricKernel {
        x: usize,
        y: usize,
        forward: f64,
        backward: f64,
    },

    #[error("domain must contain at least one point")]
    EmptyDomain,

    #[error("degenerate grid: {0}")]
    DegenerateGrid(String),

    #[error("kernel has no density: {0}")]
    NoDensity(String),

    #[error("iteration did not converge after {iterations} steps")]
    NoConvergence { iterations: usize },

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, LabError>;

pub(crate) fn param(msg: impl Into<String>) -> LabError {
    LabError::Parameter(msg.into())
}
