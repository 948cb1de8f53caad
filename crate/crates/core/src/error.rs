use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("gamma must be strictly positive and finite, got {0}")]
    InvalidGamma(f64),

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("non-finite density at observation {index}")]
    NonFiniteDensity { index: usize },

    #[error("degenerate objective: every density term vanishes at the data")]
    DegenerateObjective,

    #[error("response {y} is outside the support of the {model} model")]
    UnsupportedResponse { model: &'static str, y: f64 },

    #[error("Poisson power series did not converge (lambda = {lambda}, cap = {cap} terms)")]
    TruncationNotConverged { lambda: f64, cap: usize },

    #[error("quadrature failure: {0}")]
    QuadratureFailure(String),

    #[error("parameter vector has length {found}, expected {expected}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("vectors have different lengths: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("design matrix is rank deficient")]
    SingularDesign,

    #[error("perfect separation detected and the ridge-damped fallback failed")]
    SeparationDetected,

    #[error("line search found no descent direction at the initial point")]
    NoDescent,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
