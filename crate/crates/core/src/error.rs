//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not symmetric: max |A - A^T| = {max_asym}")]
    NotSymmetric { max_asym: f64 },

    #[error("matrix is not positive definite (pivot {pivot} <= 0 at index {index})")]
    NotPositiveDefinite { index: usize, pivot: f64 },

    #[error("shape mismatch in {op}: {details}")]
    ShapeMismatch { op: &'static str, details: String },

    #[error("non-finite entry at index {index}")]
    NonFinite { index: usize },

    #[error("partition mismatch: {0}")]
    PartitionMismatch(String),

    #[error("forward cache missing or built for a different loss tap: {0}")]
    MissingForwardCache(String),

    #[error("invalid config: {0}")]
    ConfigError(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("quantization profile mismatch: {0}")]
    ProfileMismatch(String),

    #[error("bitstream does not match this profile: {0}")]
    ModelMismatch(String),

    #[error("truncation mask keeps no entries")]
    MaskEmpty,

    #[error("format error: {0}")]
    FormatError(String),

    #[error("image geometry inconsistent with vector length: {0}")]
    GeometryMismatch(String),

    #[error("image/label count mismatch: {images} images vs {labels} labels")]
    CountMismatch { images: usize, labels: usize },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
