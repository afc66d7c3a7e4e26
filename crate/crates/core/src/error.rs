use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("file not found: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("schema violation in {context}: {message}")]
    SchemaViolation { context: String, message: String },

    #[error("duplicate image_id {image_id:?} for method {method_tag:?} (entry {index})")]
    DuplicateImageId { image_id: String, method_tag: String, index: usize },

    #[error("shape mismatch: expected {expected_h}x{expected_w}, found {found_h}x{found_w}")]
    ShapeMismatch { expected_h: usize, expected_w: usize, found_h: usize, found_w: usize },

    #[error("non-finite value {value} at row {row}, column {col}")]
    NonFiniteValue { row: usize, col: usize, value: f64 },

    #[error("unsupported npy dtype {0:?}")]
    UnsupportedDtype(String),

    #[error("malformed npy file: {0}")]
    BadNpy(String),

    #[error("bad run-length encoding for segment {segment:?}: {message}")]
    BadRle { segment: String, message: String },

    #[error("mask for segment {segment:?} is {found_h}x{found_w}, grid is {expected_h}x{expected_w}")]
    MaskShapeMismatch { segment: String, expected_h: usize, expected_w: usize, found_h: usize, found_w: usize },

    #[error("segmentation {0:?} has no non-empty segments")]
    NoSegments(String),

    #[error("empty mask{}", segment.as_ref().map(|s| format!(" for segment {s:?}")).unwrap_or_default())]
    EmptyMask { segment: Option<String> },

    #[error("invalid grid {height}x{width}")]
    BadGrid { height: usize, width: usize },

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("mixed method tags in one aggregation: {0:?}")]
    MixedMethodTags(Vec<String>),

    #[error("segment {0:?} is not part of the target name set")]
    UnknownName(String),

    #[error("unknown field {field:?}; valid fields: {}", valid.join(", "))]
    UnknownField { field: String, valid: Vec<String> },

    #[error("bad comparator in {0:?}; expected one of >=, <=, ==, !=, >, <")]
    BadComparator(String),

    #[error("bad query: {0}")]
    BadQuery(String),

    #[error("p-value {0} outside [0, 1]")]
    OutOfRangeP(f64),

    #[error("alpha {0} outside (0, 1)")]
    InvalidAlpha(f64),

    #[error("significance needs at least two SATs, got {0}")]
    DegenerateCorpus(usize),

    #[error("diagram needs at least two segment names, got {0}")]
    DegenerateReport(usize),

    #[error("bad difference vector: {0}")]
    BadSample(String),

    #[error("bad configuration: {0}")]
    BadConfig(String),

    #[error("training diverged after {halvings} step halvings")]
    Divergence { halvings: u32 },

    #[error("manifest entry {index} ({image_id}): {source}")]
    Entry {
        index: usize,
        image_id: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile(path)
        } else {
            Error::Io { path, source }
        }
    }

    pub(crate) fn schema(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::SchemaViolation { context: context.into(), message: message.into() }
    }

    /// True for failures of the filesystem rather than of the data.
    pub fn is_io(&self) -> bool {
        match self {
            Error::MissingFile(_) | Error::Io { .. } => true,
            Error::Entry { source, .. } => source.is_io(),
            _ => false,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
