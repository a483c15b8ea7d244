use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Broad classes of failure, used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("singular matrix: eigenvalue {eigenvalue:e} is not above tolerance {tolerance:e}")]
    Singular { eigenvalue: f64, tolerance: f64 },

    #[error("degenerate Kronecker factorization: {0}")]
    DegenerateFactorization(String),

    #[error("rank-deficient projection: {0}")]
    RankDeficient(String),

    #[error("degenerate scale: {0}")]
    DegenerateScale(String),

    #[error("negative eigenvalue {0:e} in a matrix that should be positive semidefinite")]
    NegativeRoot(f64),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("generation failed: {0}")]
    Generation(String),

    #[error("replication {rep}: {source}")]
    Replication {
        rep: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) | Error::Unsupported(_) => ErrorKind::Config,
            Error::Data(_) | Error::InvalidArgument(_) => ErrorKind::Data,
            Error::Replication { source, .. } => source.kind(),
            _ => ErrorKind::Numerical,
        }
    }
}
