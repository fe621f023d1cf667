//! Error types shared across the crate.

/// Convenience alias used by every fallible operation in this crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Everything that can go wrong in this crate.
///
/// Variants are split by failure class so callers (the CLI in particular)
/// can map them onto distinct exit codes without string matching.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A value fell outside its documented domain (bad label, score above 10,
    /// negative volume, fraction outside `[0, 1]`, ...).
    #[error("{0}")]
    Domain(String),

    /// Two volumes disagree on dimensions or voxel spacing.
    #[error("geometry mismatch: {0}")]
    Geometry(String),

    /// A mask is all-zero or all-one where a boundary is required.
    #[error("degenerate mask: {0}")]
    Degenerate(String),

    /// A required volume header key was absent.
    #[error("header key `{key}` is missing")]
    MissingKey { key: &'static str },

    /// A volume header key was present but its value is unusable.
    #[error("header key `{key}` has invalid value `{value}`: {reason}")]
    InvalidHeaderValue {
        key: String,
        value: String,
        reason: String,
    },

    /// The raw payload does not hold exactly the number of bytes the header promises.
    #[error("payload length mismatch: header implies {expected} bytes, file holds {found}")]
    PayloadLength { expected: usize, found: usize },

    /// A score table CSV could not be parsed.
    #[error("score table: {0}")]
    Table(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Shorthand for a [`Error::Domain`] with a formatted message.
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// Shorthand for a [`Error::Geometry`] with a formatted message.
    pub fn geometry(msg: impl Into<String>) -> Self {
        Error::Geometry(msg.into())
    }
}
