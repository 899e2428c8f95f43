use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("validation failed: {}", .0.join("; "))]
    Validation(Vec<String>),

    #[error("unresolved practice id {0:?}")]
    UnresolvedPractice(String),

    #[error("no practices given")]
    NoPractices,

    #[error("baseline {0:?} misses nothing; miss reduction is undefined")]
    ZeroBaselineMisses(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
