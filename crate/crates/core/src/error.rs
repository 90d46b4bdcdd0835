use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("channel mismatch: {expected} channels vs {found}")]
    ChannelMismatch { expected: usize, found: usize },

    #[error("zero vector has no direction")]
    ZeroVector,

    #[error("vectors are antipodal (omega = {omega}); geodesic direction undefined")]
    AntipodalVectors { omega: f64 },

    #[error("all weights are zero")]
    AllZeroWeights,

    #[error("invalid weight {0}: weights must be finite and non-negative")]
    InvalidWeight(f64),

    #[error("empty set: {0}")]
    EmptySet(String),

    #[error("non-finite value at index {0}")]
    NonFinite(usize),

    #[error("invalid shape: {0}")]
    InvalidShape(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("bad npy magic at byte {offset}")]
    BadMagic { offset: usize },

    #[error("malformed npy header at byte {offset}: {reason}")]
    BadHeader { offset: usize, reason: String },

    #[error("unsupported npy dtype {descr:?} at byte {offset}")]
    UnsupportedDtype { offset: usize, descr: String },

    #[error("unsupported npy order (fortran_order = True) at byte {offset}")]
    UnsupportedOrder { offset: usize },

    #[error("truncated npy payload at byte {offset}: expected {expected} bytes, found {found}")]
    TruncatedPayload {
        offset: usize,
        expected: usize,
        found: usize,
    },

    #[error("provider unavailable for {modality} description: {reason}")]
    ProviderUnavailable { modality: String, reason: String },

    #[error("provider failed on {modality} description: {reason}")]
    ProviderFailure { modality: String, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },

    #[error("style {source_index}: {inner}")]
    AtStyle {
        source_index: usize,
        #[source]
        inner: Box<Error>,
    },

    #[error("{context}: {inner}")]
    Context {
        context: String,
        #[source]
        inner: Box<Error>,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json {
            context: context.into(),
            source,
        }
    }

    /// Wraps the error with a prefix naming the offending input; the exit code is preserved.
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            inner: Box::new(self),
        }
    }

    /// The innermost error, past any context wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { inner, .. } | Error::AtStyle { inner, .. } => inner.root(),
            other => other,
        }
    }

    /// Stable CLI exit codes: 2 input validation, 3 numeric domain,
    /// 4 provider unavailable, 5 provider failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::ZeroVector | Error::AntipodalVectors { .. } => 3,
            Error::ProviderUnavailable { .. } => 4,
            Error::ProviderFailure { .. } => 5,
            Error::Context { inner, .. } | Error::AtStyle { inner, .. } => inner.exit_code(),
            _ => 2,
        }
    }
}
