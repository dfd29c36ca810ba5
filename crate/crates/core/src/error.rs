use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("lattice would hold {states} states, above the cap of {cap}")]
    Capacity { states: u128, cap: u128 },

    #[error("state {0:?} is not in the simplex lattice")]
    InvalidState(Vec<i64>),

    #[error("linear system is numerically singular: {0}")]
    Singular(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("index collision: pattern requires distinct indices, got {0:?}")]
    IndexCollision(Vec<usize>),

    #[error("config error: {0}")]
    Config(String),

    #[error("at N = {n}: {source}")]
    AtN { n: usize, source: Box<Error> },

    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Tags the error with the population size that produced it.
    pub fn at_n(self, n: usize) -> Self {
        Error::AtN { n, source: Box::new(self) }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}
