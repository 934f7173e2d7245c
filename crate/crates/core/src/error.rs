use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("absorbing state: {0}")]
    AbsorbingState(String),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("propagation failed: {0}")]
    Propagation(String),

    #[error("unsorted input: {0}")]
    Unsorted(String),

    #[error("no peak in window [{lo}, {hi}] eV")]
    NoPeak { lo: f64, hi: f64 },

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by bad inputs rather than a failed computation.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidInput(_)
                | Error::AbsorbingState(_)
                | Error::Unsorted(_)
                | Error::Format(_)
                | Error::Io(_)
                | Error::Json(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}
