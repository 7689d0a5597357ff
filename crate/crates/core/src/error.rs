use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A pivot or curvature term that must be strictly positive (or nonzero)
    /// was not, so the recurrence cannot continue.
    #[error("numerical breakdown: {0}")]
    Breakdown(String),

    #[error("problem size {n} exceeds the dense limit of {limit}")]
    TooLarge { n: usize, limit: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
