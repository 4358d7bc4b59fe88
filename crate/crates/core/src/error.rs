use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum GaussianError {
    #[error("inconsistent delta messages")]
    InconsistentDeltas,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Gaussian(#[from] GaussianError),
    #[error("vehicle left coverage (theta = {theta})")]
    LeftCoverage { theta: f64 },
    #[error("range must be positive, got {0}")]
    NonPositiveRange(f64),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
