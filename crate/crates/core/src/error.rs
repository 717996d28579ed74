use thiserror::Error;

/// Crate-wide result type.
pub type Result<T> = std::result::Result<T, Error>;

/// Coarse classification used by callers to map errors onto exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Invalid configuration or arguments.
    Usage,
    /// Problems with input files or their contents.
    Data,
    /// Numerically undefined or unstable computation.
    Numeric,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("invalid column mapping: {0}")]
    InvalidMapping(String),

    #[error("mapped header '{0}' not found in file")]
    MissingHeader(String),

    #[error("zero parseable rows")]
    NoRows,

    #[error("column {0} not present in dataset")]
    MissingColumn(String),

    #[error("{0}")]
    Data(String),

    #[error("{0}")]
    Numeric(String),

    #[error("rank-deficient design: dependent column(s) {0:?}")]
    RankDeficient(Vec<usize>),
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InvalidMapping(_) => ErrorClass::Usage,
            Error::Io(_)
            | Error::Csv(_)
            | Error::MissingHeader(_)
            | Error::NoRows
            | Error::MissingColumn(_)
            | Error::Data(_) => ErrorClass::Data,
            Error::Numeric(_) | Error::RankDeficient(_) => ErrorClass::Numeric,
        }
    }

    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }
}
