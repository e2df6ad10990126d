use thiserror::Error;

/// Errors shared by all modules.
#[derive(Debug, Error)]
pub enum Error {
    /// Shapes of two arguments do not line up.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A value is outside its documented domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// Text input (CSV, config) could not be parsed.
    #[error("parse error: {0}")]
    Parse(String),

    /// An operation needs data the input does not carry (e.g. clean labels).
    #[error("missing data: {0}")]
    MissingData(String),

    /// IDX byte stream does not start with a valid magic header.
    #[error("idx format error: {0}")]
    IdxFormat(String),

    /// IDX payload shorter than the header promises.
    #[error("idx length error: expected {expected} payload bytes, found {actual}")]
    IdxLength { expected: usize, actual: usize },

    /// IDX element type this parser does not handle.
    #[error("idx unsupported type code 0x{0:02x} (only 0x08 unsigned byte is supported)")]
    IdxUnsupportedType(u8),

    /// Training produced a non-finite loss.
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
