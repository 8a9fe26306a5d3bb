use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad file format: {0}")]
    Format(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("degenerate image: v_hi ({hi}) <= v_lo ({lo})")]
    Degenerate { lo: f64, hi: f64 },
    #[error("not enough matches: need {need}, got {got}")]
    NotEnoughMatches { need: usize, got: usize },
    #[error("pose estimation failed")]
    EstimationFailed,
    #[error("missing metadata: {0}")]
    MissingMetadata(&'static str),
    #[error("value out of range for parameter {name}: {value}")]
    OutOfRange { name: String, value: String },
    #[error("no correspondences survive")]
    NoCorrespondences,
    #[error("empty input")]
    Empty,
    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
