use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("count mismatch for {what}: expected {expected}, found {found}")]
    CountMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),
    #[error("malformed header {path}: {reason}")]
    MalformedHeader { path: PathBuf, reason: String },
    #[error("payload size mismatch in {path}: expected {expected} bytes, found {found}")]
    PayloadSize {
        path: PathBuf,
        expected: u64,
        found: u64,
    },
    #[error("invalid sampling masks: {0}")]
    InvalidMask(String),
    #[error("all-zero data cannot be normalized")]
    ZeroData,
    #[error("grid {rows}x{cols} is too small for a support of radius {radius}")]
    GridTooSmall {
        rows: usize,
        cols: usize,
        radius: usize,
    },
    #[error("lifted matrix does not match its layout: {0}")]
    InconsistentLift(String),
    #[error("singular value decomposition failed")]
    SvdFailure,
    #[error("reconstruction diverged at iteration {iteration} (relative change {relative_change:e})")]
    Diverged {
        iteration: usize,
        relative_change: f64,
    },
    #[error("degenerate coil geometry: {0}")]
    DegenerateGeometry(String),
    #[error("direction set is rank deficient (rank {rank} < 6)")]
    RankDeficient { rank: usize },
    #[error("no jointly valid pixels to compare")]
    NoValidPixels,
    #[error("config error: {0}")]
    Config(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
