use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unsupported MRA size {0} (built-in table covers 2..=10)")]
    UnsupportedSize(usize),

    #[error("subarray sizes sum to {got}, array has {expected} sensors")]
    SizeMismatch { expected: usize, got: usize },

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("layout has no inter-subarray spacing; supply calibration explicitly")]
    UnsupportedLayout,

    #[error("empty data: {0}")]
    EmptyData(String),

    #[error("{d} sources requested but the smoothed covariance has dimension {m}")]
    TooManySources { d: usize, m: usize },

    #[error("only {found} spectral peaks found, {wanted} requested")]
    InsufficientPeaks { found: usize, wanted: usize },

    #[error("index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("calibration derivatives are undefined for the reference subarray")]
    ReferenceSubarray,

    #[error("covariance is singular (noise variance must be positive)")]
    SingularCovariance,

    #[error("DOA block is not identifiable (Schur complement condition number {cond:e})")]
    NonIdentifiable { cond: f64 },

    #[error("lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
