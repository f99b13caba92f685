use thiserror::Error;

/// Errors produced by the analysis and synthesis routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid signal: {0}")]
    InvalidSignal(String),
    #[error("degenerate signal: zero power over the full record")]
    DegenerateSignal,
    #[error("geometry mismatch: {0}")]
    GeometryMismatch(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("window truncation: {0}")]
    WindowTruncation(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("frequency outside tonotopic range: {0}")]
    OutsideTonotopicRange(String),
    #[error("frequency outside lattice: {0}")]
    OutsideLattice(String),
    #[error("unknown method `{0}`")]
    UnknownMethod(String),
    #[error("no overlapping nonempty slices")]
    NoOverlap,
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
