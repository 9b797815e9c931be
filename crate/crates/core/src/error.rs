use std::path::PathBuf;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("config parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid value for `{key}`: {msg}")]
    Validation { key: String, msg: String },

    #[error("shape error: {0}")]
    Shape(String),

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("training failed at step {step}: {msg}")]
    Training { step: usize, msg: String },

    #[error("sensor placement: requested {requested} sensors, only {achieved} could be placed")]
    SensorPlacement { requested: usize, achieved: usize },

    #[error("bad magic in {path}: expected {expected:?}")]
    BadMagic { path: PathBuf, expected: String },

    #[error("unsupported format version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("malformed header: {0}")]
    MalformedHeader(String),

    #[error("payload truncated: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },

    #[error("length mismatch: manifest declares {expected} values, blob holds {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("parameter manifest mismatch at `{name}`: {msg}")]
    ManifestMismatch { name: String, msg: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("usage: {0}")]
    Usage(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn validation(key: &str, msg: impl Into<String>) -> Self {
        Error::Validation {
            key: key.to_string(),
            msg: msg.into(),
        }
    }

    /// Process exit code for the CLI: 1 usage, 2 config, 3 io, 4 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) => 1,
            Error::Config(_) | Error::Parse { .. } | Error::Validation { .. } => 2,
            Error::BadMagic { .. }
            | Error::VersionMismatch { .. }
            | Error::MalformedHeader(_)
            | Error::Truncated { .. }
            | Error::LengthMismatch { .. }
            | Error::ManifestMismatch { .. }
            | Error::Io { .. } => 3,
            Error::Shape(_)
            | Error::Contract(_)
            | Error::Domain(_)
            | Error::Numerical(_)
            | Error::Training { .. }
            | Error::SensorPlacement { .. } => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
