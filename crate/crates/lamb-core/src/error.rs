//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A latitude or longitude outside its legal range.
    #[error("coordinate out of range: {field} = {value}")]
    InvalidCoordinate { field: &'static str, value: f64 },

    /// Malformed or invalid record in a data file.
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    /// A POI that violates a collection invariant.
    #[error("poi {id}: {message}")]
    InvalidPoi { id: String, message: String },

    /// A POI id that does not resolve in the collection.
    #[error("unknown poi id: {id}")]
    UnknownPoi { id: String },

    /// A POI with no usable review text.
    #[error("empty POI text: {id}")]
    EmptyPoiText { id: String },

    /// A city not present in the collection.
    #[error("unknown city: {city}")]
    UnknownCity { city: String },

    /// Invalid configuration or argument value.
    #[error("invalid config: {0}")]
    Config(String),

    /// Tensor or vector dimensions that do not line up.
    #[error("shape mismatch in {context}: expected {expected}, got {got}")]
    ShapeMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    /// A token or row index past the end of a table.
    #[error("index {index} out of range (limit {limit})")]
    IndexOutOfRange { index: usize, limit: usize },

    /// A gradient that turned NaN or infinite.
    #[error("non-finite gradient in parameter {name}")]
    NonFiniteGrad { name: String },

    /// Cosine similarity of a zero vector is undefined.
    #[error("zero vector in cosine similarity")]
    ZeroVector,

    /// An operation that requires non-empty input.
    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    /// A value outside its documented domain.
    #[error("{name} = {value} outside [{lo}, {hi}]")]
    OutOfDomain {
        name: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    /// Not enough distinct candidates to fill a sample.
    #[error("candidate pool too small: need {needed}, have {available}")]
    InsufficientPool { needed: usize, available: usize },

    /// A persisted file whose magic bytes are wrong.
    #[error("bad magic in {path}")]
    BadMagic { path: String },

    /// A persisted file with a recognized magic but unsupported version.
    #[error("unsupported format version {got} in {path} (expected {expected})")]
    VersionMismatch {
        path: String,
        expected: u8,
        got: u8,
    },

    /// A persisted file that ends before its declared contents.
    #[error("truncated file {path}: {what}")]
    Truncated { path: String, what: &'static str },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
