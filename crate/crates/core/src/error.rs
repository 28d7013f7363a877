use thiserror::Error;

/// Errors produced anywhere in the analysis pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid image: {0}")]
    InvalidImage(String),

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("invalid spec: {0}")]
    InvalidSpec(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("png: {0}")]
    Png(String),

    #[error("degenerate segmentation: {0}")]
    DegenerateSegmentation(String),

    #[error("unsupported nesting: region {label} sits at depth {depth}, at most 2 is supported")]
    UnsupportedNesting { label: u32, depth: usize },

    #[error("insufficient pixels for {what}: {n} (need at least {need})")]
    InsufficientPixels {
        what: String,
        n: usize,
        need: usize,
    },

    #[error("degenerate confidence region: {0}")]
    DegenerateRegion(String),

    #[error("value {0} does not occur in the image")]
    ValueNotFound(f64),

    #[error("rank-deficient local fit at pixel ({x}, {y}): {neighbors} weighted neighbors for {coefficients} coefficients")]
    RankDeficient {
        x: usize,
        y: usize,
        neighbors: usize,
        coefficients: usize,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn parse_err(row: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        row,
        column,
        message: message.into(),
    }
}
