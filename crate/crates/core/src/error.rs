use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("invalid boundary data: {0}")]
    InvalidBoundaryData(String),

    #[error("resolution error: {0}")]
    Resolution(String),

    #[error("singularity: {0}")]
    Singularity(String),

    #[error("undersampled contour: rounding defect {defect:.3e} (n_samples = {samples})")]
    Undersampling { defect: f64, samples: usize },

    #[error("assembly error: {0}")]
    Assembly(String),

    #[error("channel truncation: extreme channel j = {channel} has |lambda| = {lambda:.6} inside twice the window")]
    ChannelTruncation { channel: i64, lambda: f64 },

    #[error("calibration failure: {0}")]
    Calibration(String),

    #[error("eigensolver did not converge: {0}")]
    NoConvergence(String),

    #[error("operator dimension {dim} exceeds cap {cap}; lower the resolution")]
    Size { dim: usize, cap: usize },

    #[error("inconclusive: {0}")]
    Inconclusive(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
