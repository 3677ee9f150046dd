//! Error type shared across the toolkit.

use std::fmt;

/// Errors produced by tensor, factorization, and inverse operations.
#[derive(Debug)]
pub enum TfaError {
    /// Incompatible shapes (message names the offending dimensions).
    ShapeMismatch(String),
    /// Mode index outside `0..=M`.
    ModeOutOfRange { mode: usize, modes: usize },
    /// Invalid argument value (rank out of range, empty input, bad parameter).
    InvalidArgument(String),
    /// Input contains NaN or infinity.
    NonFinite(String),
    /// Iterative update exploded; advises a smaller learning rate.
    Divergence(String),
    /// I/O failure.
    Io(std::io::Error),
    /// Malformed file contents.
    Format(String),
    /// JSON (de)serialization failure.
    Json(serde_json::Error),
}

impl fmt::Display for TfaError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TfaError::ShapeMismatch(msg) => write!(f, "shape mismatch: {msg}"),
            TfaError::ModeOutOfRange { mode, modes } => {
                write!(f, "mode {mode} out of range for a tensor with {modes} modes")
            }
            TfaError::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            TfaError::NonFinite(msg) => write!(f, "non-finite input: {msg}"),
            TfaError::Divergence(msg) => write!(f, "divergence: {msg}"),
            TfaError::Io(err) => write!(f, "i/o error: {err}"),
            TfaError::Format(msg) => write!(f, "format error: {msg}"),
            TfaError::Json(err) => write!(f, "json error: {err}"),
        }
    }
}

impl std::error::Error for TfaError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            TfaError::Io(err) => Some(err),
            TfaError::Json(err) => Some(err),
            _ => None,
        }
    }
}

impl From<std::io::Error> for TfaError {
    fn from(err: std::io::Error) -> Self {
        TfaError::Io(err)
    }
}

impl From<serde_json::Error> for TfaError {
    fn from(err: serde_json::Error) -> Self {
        TfaError::Json(err)
    }
}

pub type Result<T> = std::result::Result<T, TfaError>;
