use thiserror::Error;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },
    #[error("invalid image data: {0}")]
    InvalidData(&'static str),
    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),
    #[error("mask ratio {0} outside (0, 0.9)")]
    InvalidRatio(f64),
    #[error("pyramid level {width}x{height} is smaller than 16x16")]
    TooSmall { width: usize, height: usize },
    #[error("solver stopped at relative residual {residual:e} after {iterations} iterations")]
    SolverDivergence { iterations: usize, residual: f64 },
    #[error("zero-norm vector has no direction")]
    ZeroVector,
    #[error("no valid (unmasked) position to compare against")]
    EmptyValidSet,
    #[error("discriminator score {0} outside the open interval (0, 1)")]
    ScoreOutOfRange(f64),
    #[error("hole containing ({x}, {y}) touches no valid pixel")]
    IsolatedHole { x: usize, y: usize },
    #[error("no valid source pixel for flow targets")]
    NoValidSource,
    #[error("flow optimization produced a non-finite objective at step {0}")]
    Divergence(usize),
}
