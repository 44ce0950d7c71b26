use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the estimation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("row {row}: outcome is present for a unit that did not survive")]
    OutcomePresentForDeath { row: usize },

    #[error("row {row}: outcome is missing for a surviving unit")]
    OutcomeMissingForSurvivor { row: usize },

    #[error("row {row}: missing value for covariate `{column}`")]
    MissingCovariate { row: usize, column: String },

    #[error("header mismatch: {0}")]
    Header(String),

    #[error("covariate `{0}` has zero variance and cannot be standardized")]
    DegenerateColumn(String),

    #[error("tree structure: {0}")]
    Structural(String),

    #[error("unit {unit}: {message}")]
    Numerical { unit: usize, message: String },

    #[error("initialization failed: {0}")]
    Initialization(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("likely always-survivor set is empty: {0}")]
    EmptyLikelySet(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by malformed or inconsistent input data.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. }
                | Error::OutcomePresentForDeath { .. }
                | Error::OutcomeMissingForSurvivor { .. }
                | Error::MissingCovariate { .. }
                | Error::Header(_)
                | Error::DegenerateColumn(_)
                | Error::EmptyLikelySet(_)
                | Error::Io { .. }
                | Error::Csv(_)
                | Error::Json(_)
        )
    }

    /// True for failures of the numerical machinery itself.
    pub fn is_numerical_error(&self) -> bool {
        matches!(
            self,
            Error::Numerical { .. } | Error::Initialization(_) | Error::Structural(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
