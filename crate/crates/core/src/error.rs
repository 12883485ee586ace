use thiserror::Error;

/// Errors raised by the detector-update library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("architecture mismatch between parameter sets")]
    ArchitectureMismatch,

    #[error("parameter vector length {actual} does not match architecture ({expected})")]
    ParamCount { expected: usize, actual: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid generator spec: {0}")]
    InvalidGenerator(String),

    #[error("unknown sample id {0}")]
    UnknownSample(usize),
}

pub type Result<T> = std::result::Result<T, Error>;
