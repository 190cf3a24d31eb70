use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate grid: {0}")]
    DegenerateGrid(String),

    #[error("empty radial interval [{lo}, {hi})")]
    EmptyInterval { lo: f64, hi: f64 },

    #[error("length mismatch: expected {expected} samples, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("dimension {dim} is not supported here: {reason}")]
    UnsupportedDimension { dim: usize, reason: &'static str },

    #[error("scale {lambda} is under-resolved ({per_unit:.1} nodes per unit scale, need {required})")]
    UnderResolved {
        lambda: f64,
        per_unit: f64,
        required: f64,
    },

    #[error("spectral inconsistency: {0}")]
    Spectral(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("spectral tail fraction {fraction:e} exceeds {tolerance:e}; refine the grid")]
    Aliasing { fraction: f64, tolerance: f64 },

    #[error("modulation fit did not converge after {iterations} iterations (residual {residual:e})")]
    FitFailure { iterations: usize, residual: f64 },

    #[error("degenerate modulation fit: {0}")]
    DegenerateFit(String),

    #[error("truncated potential violates property ({index}): {detail}")]
    QProperty { index: u8, detail: String },

    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
