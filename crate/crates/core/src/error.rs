use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("geometry: {0}")]
    Geometry(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid chain initialization: initial log-posterior is {0}")]
    InvalidInitialization(f64),
    #[error("invalid measurement: {0}")]
    Measurement(String),
    #[error("no measurements to estimate from")]
    EmptyMeasurements,
    #[error("lanelet model: {0}")]
    Lanelet(String),
    #[error("trajectory {0} has no lanelet assignment")]
    Unassigned(String),
    #[error("generation gave up after {0} attempts")]
    GenerationExhausted(usize),
    #[error("dataset parse error: {0}")]
    Parse(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
