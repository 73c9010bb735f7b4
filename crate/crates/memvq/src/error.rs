//! Error types shared across the codec, store, and evaluation modules.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// All failure classes surfaced by this crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Matrix or codebook dimensions do not line up.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Input contains NaN or infinite entries.
    #[error("non-finite input: {0}")]
    NonFinite(String),

    /// Training sample is smaller than the requested code count.
    #[error("insufficient sample: need at least {needed} vectors, got {got}")]
    InsufficientSample { needed: usize, got: usize },

    /// Invalid configuration value (EMA factor, batch size, ...).
    #[error("invalid config: {0}")]
    Config(String),

    /// A code id is out of range for its codebook.
    #[error("corrupt codes: {0}")]
    CorruptCodes(String),

    /// Shard bytes do not follow the on-disk format.
    #[error("shard format: {0}")]
    Format(String),

    /// Shard is shorter than its header claims.
    #[error("truncated shard: {0}")]
    Truncated(String),

    /// Payload checksum does not match the header.
    #[error("shard corruption: checksum mismatch (header {expected:#018x}, payload {actual:#018x})")]
    Corruption { expected: u64, actual: u64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
