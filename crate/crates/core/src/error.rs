use thiserror::Error;

/// Errors raised by the laboratory's numerical operations.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("time too large for domain (kernel radius {radius} nodes exceeds {points} points per axis)")]
    TimeTooLarge { radius: usize, points: usize },

    #[error("point {0:?} lies outside the box")]
    OutsideDomain(Vec<f64>),

    #[error("shape does not fit inside the box with margin {required} (available {available})")]
    ShapeTouchesBoundary { required: f64, available: f64 },

    #[error("time step {dt:e} violates the explicit limit {limit:e}")]
    DtViolation { dt: f64, limit: f64 },

    #[error("non-finite value after step {step} (t = {time:e})")]
    NonFinite { step: usize, time: f64 },

    #[error("empty contour")]
    EmptyContour,

    #[error("empty input")]
    EmptyInput,

    #[error("need at least {required} snapshots in (0, eps^2], found {found}")]
    NotEnoughSnapshots { found: usize, required: usize },

    #[error("epsilon too large or t0 outside fattening window: {0}")]
    EndpointCondition(String),

    #[error("symmetry group incompatible with grid: {0}")]
    IncompatibleGroup(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("malformed field file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("image export failed: {0}")]
    Image(#[from] image::ImageError),
}

pub type Result<T> = std::result::Result<T, Error>;
