//! Error types shared across the toolkit.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PlanarError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("behind camera: z = {0}")]
    BehindCamera(f64),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("empty support: {0}")]
    EmptySupport(String),

    #[error("empty overlap: no contributing pixels between the two views")]
    EmptyOverlap,

    #[error("degenerate encoding: anchor + residual has near-zero norm")]
    DegenerateEncoding,

    #[error("undefined recall: no ground-truth planes")]
    UndefinedRecall,

    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),
}

pub type Result<T> = std::result::Result<T, PlanarError>;
