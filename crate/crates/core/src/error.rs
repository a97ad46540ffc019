//! Error taxonomy shared across the workspace.

use thiserror::Error;

/// Unified error type for model construction, estimation, and experiments.
#[derive(Debug, Error)]
pub enum ShrinkError {
    /// Shape or size requirements violated (n < 2, mismatched dimensions, ...).
    #[error("dimension error: {0}")]
    Dimension(String),

    /// Covariance descriptor is not symmetric positive definite.
    #[error("covariance error: {0}")]
    Covariance(String),

    /// Ridge constant or resolved ridge level is not strictly positive.
    #[error("ridge error: {0}")]
    Ridge(String),

    /// Data degenerate for the requested quantity (e.g. trW = 0).
    #[error("degenerate data: {0}")]
    DegenerateData(String),

    /// Eigenvalues too close for a divided difference and no limit supplied.
    #[error("divided-difference degeneracy between eigenvalues {i} and {k}")]
    EigenvalueCollision { i: usize, k: usize },

    /// Experiment or sweep setting outside the supported regime.
    #[error("setting error: {0}")]
    Setting(String),

    /// Invalid experiment configuration.
    #[error("config error: {0}")]
    Config(String),

    /// CSV cell failed to parse.
    #[error("csv parse error at row {row}, column {col}: {msg}")]
    CsvParse { row: usize, col: usize, msg: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("linear algebra backend error: {0}")]
    Linalg(#[from] ndarray_linalg::error::LinalgError),
}

pub type Result<T> = std::result::Result<T, ShrinkError>;
