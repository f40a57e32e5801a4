use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by the harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("malformed record at line {line}: {message}")]
    MalformedRecord { line: usize, message: String },

    #[error("invalid sample {id}: {message}")]
    InvalidSample { id: String, message: String },

    #[error("duplicate sample id {id} (line {line})")]
    DuplicateId { id: String, line: usize },

    #[error("stratum {stratum} has {count} samples; at least 2 required for a split")]
    StratumTooSmall { stratum: String, count: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("backend {id}: {message}")]
    Backend { id: String, message: String },

    #[error("backend {id} returned an empty completion")]
    EmptyCompletion { id: String },

    #[error("http request to {url} failed: {message}")]
    Http { url: String, message: String },

    #[error("detector {id}: {message}")]
    Detector { id: String, message: String },

    #[error("degenerate input for {operation}: {message}")]
    Degenerate { operation: String, message: String },

    #[error("attack {id} failed: {message}")]
    Attack { id: String, message: String },

    #[error("attack {id} failed on segment {segment}: {message}")]
    SegmentAttack {
        id: String,
        segment: usize,
        message: String,
    },

    #[error("unknown registry name {name} ({registry} registry)")]
    UnknownRegistryName { registry: String, name: String },

    #[error("missing stream {name}; run the producing subcommand first")]
    MissingStream { name: String },

    #[error("config hash mismatch: store was created with {expected}, supplied config hashes to {actual}")]
    ConfigHashMismatch { expected: String, actual: String },

    #[error("another measured attack run is active; overhead measurement is exclusive")]
    MeasurementBusy,

    #[error("concurrent attack runs observed during measurement; record discarded")]
    MeasurementNotExclusive,

    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    pub fn backend(id: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Backend {
            id: id.into(),
            message: message.into(),
        }
    }

    pub fn detector(id: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Detector {
            id: id.into(),
            message: message.into(),
        }
    }

    pub fn attack(id: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Attack {
            id: id.into(),
            message: message.into(),
        }
    }

    pub fn degenerate(operation: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Degenerate {
            operation: operation.into(),
            message: message.into(),
        }
    }
}
