use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrix is not symmetric: entry ({row}, {col}) differs from its transpose")]
    NotSymmetric { row: usize, col: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("degenerate spectrum: {0}")]
    DegenerateSpectrum(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("division by zero: {0}")]
    DivisionByZero(String),
    #[error("iteration diverged at step {step}")]
    Divergence { step: usize },
    #[error("bound not applicable: {0}")]
    BoundInapplicable(String),
    #[error("no feasible stepsize on the grid")]
    NoFeasibleStepsize,
    #[error("undefined correlation: {0}")]
    UndefinedCorrelation(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn dims(msg: impl Into<String>) -> Self {
        Error::DimensionMismatch(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// True for errors that come from the numerics rather than from bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Numerical(_)
                | Error::DegenerateSpectrum(_)
                | Error::Divergence { .. }
                | Error::DivisionByZero(_)
                | Error::UndefinedCorrelation(_)
        )
    }

    /// True for errors meaning the experiment has no feasible outcome.
    pub fn is_infeasible(&self) -> bool {
        matches!(self, Error::NoFeasibleStepsize | Error::BoundInapplicable(_))
    }
}
