use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("degenerate basis: component {index} has near-zero norm after orthogonalization")]
    DegenerateBasis { index: usize },

    #[error("degenerate basis: mass matrix is not positive definite ({0})")]
    SingularMass(String),

    #[error("covariance matrix is not positive definite even with jitter {jitter:e}")]
    DegenerateCovariance { jitter: f64 },

    #[error("unsupported forcing: {0}")]
    UnsupportedForcing(String),

    #[error("linear solver failed: {0}")]
    Solver(String),

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("undefined relative error: reference has zero norm")]
    ZeroReference,

    #[error("sample {index}: {source}")]
    Sample {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::ShapeMismatch(msg.into())
    }

    /// True for errors caused by bad numerics rather than bad inputs or files.
    pub fn is_numeric(&self) -> bool {
        match self {
            Error::DegenerateBasis { .. }
            | Error::SingularMass(_)
            | Error::DegenerateCovariance { .. }
            | Error::Solver(_)
            | Error::NonFiniteLoss { .. }
            | Error::ZeroReference => true,
            Error::Sample { source, .. } => source.is_numeric(),
            _ => false,
        }
    }
}
