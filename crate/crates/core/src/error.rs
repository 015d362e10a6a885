//! Crate-wide error type.

use thiserror::Error;

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors emitted by the prediction toolkit.
///
/// Variants are grouped by origin: numeric-domain violations, dump-format
/// failures (each file defect gets its own named variant so callers can
/// report the exact failure kind), and training/simulation contract errors.
#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value in {what}")]
    NonFinite { what: &'static str },

    #[error("temperature must be positive, got {0}")]
    NonPositiveTemperature(f64),

    #[error("invalid probability vector: {reason}")]
    InvalidProbability { reason: String },

    #[error("correlation undefined: {reason}")]
    UndefinedCorrelation { reason: String },

    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("empty input: {what}")]
    EmptyInput { what: &'static str },

    #[error("invalid argument for {what}: {reason}")]
    InvalidArgument { what: &'static str, reason: String },

    #[error("degenerate bins: {reason}")]
    DegenerateBins { reason: String },

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("unsupported format version {found} (supported: {supported})")]
    BadVersion { found: u32, supported: u32 },

    #[error("truncated file: {context}")]
    Truncated { context: String },

    #[error("manifest offset {offset} out of range for record {id} (file length {file_len})")]
    OffsetOutOfRange {
        id: String,
        offset: u64,
        file_len: u64,
    },

    #[error("record {id} has zero prompt tokens")]
    ZeroTokens { id: String },

    #[error("manifest error: {reason}")]
    Manifest { reason: String },

    #[error("non-finite gradient at epoch {epoch}, batch {batch}")]
    NonFiniteGradient { epoch: usize, batch: usize },

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("batch plan inconsistent with job list: {reason}")]
    PlanMismatch { reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by bad arguments rather than bad files or I/O.
    ///
    /// The CLI maps usage errors to exit code 2 and everything else to 1.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::NonFinite { .. }
                | Error::NonPositiveTemperature(_)
                | Error::InvalidProbability { .. }
                | Error::UndefinedCorrelation { .. }
                | Error::DimensionMismatch { .. }
                | Error::EmptyInput { .. }
                | Error::InvalidArgument { .. }
                | Error::DegenerateBins { .. }
        )
    }
}
