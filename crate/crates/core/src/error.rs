use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("config parse error: {0}")]
    Parse(String),

    #[error("invalid value for `{field}`: {reason}")]
    Invalid { field: String, reason: String },

    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),

    #[error("cannot sample {k} neighbours from a population of {n}")]
    InvalidNeighbourCount { n: usize, k: usize },

    #[error("carbon stock must be non-negative, got {0}")]
    NegativeCarbon(f64),

    #[error("sample is degenerate (zero variance or fewer than 4 values)")]
    DegenerateSample,

    #[error("non-finite {quantity} in year {year}")]
    NonFinite { year: i32, quantity: &'static str },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Invalid {
            field: field.into(),
            reason: reason.into(),
        }
    }
}
