use thiserror::Error;

/// Errors produced by grid construction, weight evaluation and the solvers.
#[derive(Debug, Error)]
pub enum TodaError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("field defined on a different grid (expected {expected:?}, got {got:?})")]
    GridMismatch { expected: String, got: String },

    #[error("boundary array has length {got}, expected {expected}")]
    BoundaryLength { expected: usize, got: usize },

    #[error("invalid weight: {0}")]
    InvalidWeight(String),

    #[error("mollification radius {delta} does not fit: grid outer radius {outer} (need outer + delta < 1)")]
    MollifierDomain { delta: f64, outer: f64 },

    #[error("invalid rank r = {0}, need r >= 2")]
    InvalidRank(usize),

    #[error("linear solve failed: {0}")]
    LinearSolveFailure(String),

    #[error("solver did not converge within {iterations} iterations (last residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("monotone iteration left its sub/supersolution bracket at iteration {iteration} (defect {defect:.3e})")]
    BracketViolation { iteration: usize, defect: f64 },

    #[error("config error at {path}: {message}")]
    Config { path: String, message: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("bad field file: {0}")]
    BadFieldFile(String),
}

pub type Result<T> = std::result::Result<T, TodaError>;
