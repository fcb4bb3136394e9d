use thiserror::Error;

/// Errors produced across the library.
///
/// The variants mirror the failure classes a caller can act on: bad shapes,
/// bad parameters, unsupported model configurations and numerical breakdowns.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("covariance {index} is not symmetric positive definite")]
    NotPositiveDefinite { index: usize },

    #[error("class {class} has {count} members, need at least {required}")]
    EmptyClass { class: usize, count: usize, required: usize },

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("singular covariance for class {class} after ridge fallback")]
    Singularity { class: usize },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("quadrature did not converge: estimated error {error:e} after {intervals} intervals")]
    Quadrature { error: f64, intervals: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("relative-efficiency cell failed: {0}")]
    Cell(String),

    #[error("could not build folds: {0}")]
    Fold(String),

    #[error("curve error: {0}")]
    Curve(String),

    #[error("requested rank {requested} exceeds data rank {rank}")]
    Rank { requested: usize, rank: usize },

    #[error("io: {0}")]
    Io(String),

    #[error("parse: {0}")]
    Parse(String),
}

impl Error {
    /// Stable machine-readable tag for the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Dimension { .. } => "DimensionError",
            Error::InvalidParameter(_) => "InvalidParameter",
            Error::NotPositiveDefinite { .. } => "NotPositiveDefinite",
            Error::EmptyClass { .. } => "EmptyClassError",
            Error::Contract(_) => "ContractError",
            Error::Singularity { .. } => "SingularityError",
            Error::Unsupported(_) => "UnsupportedError",
            Error::Quadrature { .. } => "QuadratureError",
            Error::Domain(_) => "DomainError",
            Error::Cell(_) => "CellError",
            Error::Fold(_) => "FoldError",
            Error::Curve(_) => "CurveError",
            Error::Rank { .. } => "RankError",
            Error::Io(_) => "IoError",
            Error::Parse(_) => "ParseError",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
