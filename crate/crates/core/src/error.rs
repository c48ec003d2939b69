use thiserror::Error;

/// Errors raised across the simulation, estimation and bound pipelines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("ill-conditioned geometry: {0}")]
    IllConditionedGeometry(String),

    #[error("infeasible geometry: {0}")]
    InfeasibleGeometry(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("no delay peak above threshold: {0}")]
    RisPathLost(String),

    #[error("optimizer failure: {0}")]
    Optimizer(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
