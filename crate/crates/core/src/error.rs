use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("entry ({row}, {col}) is {value}; incidence entries must be 0 or 1")]
    NonBinary { row: usize, col: usize, value: i64 },

    #[error("route {0} does not use any monitored link")]
    ZeroColumn(usize),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("basis block is singular (det = 0)")]
    Singular,

    #[error("basis block is not unimodular (det = {0})")]
    NotUnimodular(String),

    #[error("cannot complete a basis: routing matrix is rank deficient")]
    RankDeficient,

    #[error("no unimodular basis found within {0} alternative completions")]
    NoUnimodularBasis(usize),

    #[error("link counts admit no nonnegative route flows")]
    Infeasible,

    #[error("link counts admit rational but no integer route flows")]
    IntegerInfeasible,

    #[error("feasible set has more than {0} points")]
    CapExceeded(usize),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of the mathematics rather than of the input data.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Singular
                | Error::NotUnimodular(_)
                | Error::RankDeficient
                | Error::NoUnimodularBasis(_)
                | Error::Infeasible
                | Error::IntegerInfeasible
                | Error::CapExceeded(_)
                | Error::Numerical(_)
        )
    }
}
