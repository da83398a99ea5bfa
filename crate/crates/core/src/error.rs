use thiserror::Error;

/// Errors raised by the estimation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("expected {expected} parameters, got {found}")]
    WrongKind { expected: String, found: String },

    #[error("singular matrix at {freq_hz} Hz: {what}")]
    Singular { freq_hz: f64, what: String },

    #[error("frequency {freq_hz} Hz is outside the tabulated range [{min_hz}, {max_hz}] Hz")]
    OutOfRange { freq_hz: f64, min_hz: f64, max_hz: f64 },

    #[error("touchstone line {line}: {msg}")]
    Touchstone { line: usize, msg: String },

    #[error("waveform csv line {line}: {msg}")]
    Csv { line: usize, msg: String },

    #[error("rank-deficient least-squares system ({0}); try fewer poles or more frequency samples")]
    RankDeficient(String),

    #[error("model is not passive (minimum conductance eigenvalue {min_eig:e} S); enforce passivity or pass an override")]
    NonPassive { min_eig: f64 },

    #[error("model has a nonzero proportional (e) term; refit with the proportional term disabled")]
    ProportionalTerm,

    #[error("waveforms are not aligned: {0}")]
    Misaligned(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// True for errors caused by malformed input files or arguments rather than
    /// by a numerical failure.
    pub fn is_parse_error(&self) -> bool {
        matches!(
            self,
            Error::Touchstone { .. } | Error::Csv { .. } | Error::Json(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
