use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed container or payload (WAV, SFT1, checkpoint).
    #[error("format error: {0}")]
    Format(String),

    /// Well-formed input that this toolkit does not handle (e.g. stereo WAV).
    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),

    /// Signal with no usable content (all-zero, all-silent).
    #[error("degenerate signal: {0}")]
    DegenerateSignal(String),

    #[error("signal too short: {0}")]
    TooShort(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// Manifest record that fails validation; `line` is 1-based.
    #[error("{path}:{line}: {message}")]
    Validation {
        path: String,
        line: usize,
        message: String,
    },

    #[error("class {class} has {found} distinct speakers, at least {required} are required")]
    InsufficientSpeakers {
        class: String,
        found: usize,
        required: usize,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("batch too small: {0}")]
    BatchTooSmall(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            context: path.into().display().to_string(),
            source,
        }
    }

    /// Errors caused by bad user input rather than a failure while running.
    /// The CLI maps these to exit status 1 and everything else to 2.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Argument(_)
                | Error::Config(_)
                | Error::Validation { .. }
                | Error::InsufficientSpeakers { .. }
                | Error::UnsupportedFormat(_)
        )
    }
}
