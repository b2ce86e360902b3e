use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("grid size {0} must be positive and even")]
    InvalidGridSize(usize),

    #[error("dimension {0} is not supported (expected 1, 2 or 3)")]
    InvalidDimension(usize),

    #[error("expected {expected} samples, got {got}")]
    SampleCount { expected: usize, got: usize },

    #[error("shape mismatch: (d={}, N={}) vs (d={}, N={})", .left.0, .left.1, .right.0, .right.1)]
    ShapeMismatch {
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("parameter `{name}` must be non-negative, got {value}")]
    NegativeParameter { name: &'static str, value: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite value {value} at grid point {index:?}")]
    NonFinite { index: Vec<usize>, value: f64 },

    #[error("truncation level {level} lies inside the non-convex region (W''({level}) = {curvature})")]
    TruncationInNonConvexRegion { level: f64, curvature: f64 },

    #[error("adaptive quadrature on [{a}, {b}] did not reach tolerance (error estimate {estimate:e})")]
    Quadrature { a: f64, b: f64, estimate: f64 },

    #[error("step range [{start}, {end}) exceeds the horizon of {horizon} steps")]
    StepRange {
        start: usize,
        end: usize,
        horizon: usize,
    },

    #[error("blow-up at step {step} (t = {time}): {reason}")]
    BlowUp {
        step: usize,
        time: f64,
        reason: String,
    },

    #[error("outer interval closed after {done} of {expected} substeps")]
    IntervalIncomplete { done: usize, expected: usize },

    #[error("at least two checkpoints are required, got {0}")]
    TooFewCheckpoints(usize),

    #[error("iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("{blown} of {total} replicates blew up (limit 5%)")]
    TooManyBlowUps { blown: usize, total: usize },

    #[error("incompatible configurations: {0}")]
    Incompatible(String),

    #[error("checkpoint format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
