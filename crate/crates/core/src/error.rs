use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("empty support")]
    EmptySupport,
    #[error("negative weight {weight} at atom {index}")]
    NegativeWeight { index: usize, weight: f64 },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("weights sum to {sum}, outside tolerance of 1")]
    WeightSum { sum: f64 },
    #[error("unsupported Wasserstein order {0}")]
    UnsupportedOrder(f64),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("missing contraction certificate for model `{0}`")]
    MissingCertificate(String),
    #[error("Picard iteration did not converge after {iters} iterations (residual {residual:e})")]
    PicardDiverged { iters: usize, residual: f64 },
    #[error("replication {replication}: {source}")]
    Replication {
        replication: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("non-finite value encountered: {0}")]
    NonFinite(String),
    #[error("enumeration too large: {size} exceeds guard {guard}")]
    EnumerationTooLarge { size: f64, guard: f64 },
    #[error("implicit state equation has {count} solutions for draw {draw}")]
    NonUniqueState { count: usize, draw: String },
    #[error("no fixed point on the measure lattice of size {0}; refine the lattice")]
    NoLatticeFixedPoint(usize),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
