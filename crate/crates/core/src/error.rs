use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite value in `{field}` at row {row}, column {column}")]
    NonFiniteValue {
        field: &'static str,
        row: usize,
        column: usize,
    },

    #[error("too few observations: got {0}, need at least 2")]
    TooFewObservations(usize),

    #[error("bandwidth must be strictly positive and finite")]
    BandwidthNonPositive,

    #[error("column {0} has zero sample variance")]
    DegenerateColumn(usize),

    #[error("index has zero sample variance")]
    DegenerateIndex,

    #[error("optimizer did not move from any start point (flat criterion)")]
    OptimizerDidNotMove,

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    #[error("row {row}, column `{column}`: {message}")]
    Csv {
        row: usize,
        column: String,
        message: String,
    },

    #[error("{0}")]
    Io(String),
}

impl Error {
    /// Name of the library module that raises this kind of error.
    pub fn module(&self) -> &'static str {
        match self {
            Error::DimensionMismatch(_)
            | Error::NonFiniteValue { .. }
            | Error::TooFewObservations(_)
            | Error::InvalidSpec(_)
            | Error::Csv { .. }
            | Error::Io(_) => "core_types",
            Error::BandwidthNonPositive => "kernels",
            Error::DegenerateColumn(_) => "generated_regressor",
            Error::OptimizerDidNotMove => "sls_estimator",
            Error::DegenerateIndex => "simulation",
            Error::LengthMismatch { .. } => "wild_bootstrap",
        }
    }

    /// True for failures of the numerical procedures rather than of the input data.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::BandwidthNonPositive
                | Error::DegenerateIndex
                | Error::OptimizerDidNotMove
                | Error::LengthMismatch { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
