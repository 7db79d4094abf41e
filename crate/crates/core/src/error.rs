use thiserror::Error;

/// Errors produced by grid construction, assembly, time stepping and inversion.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("time {t} outside schedule domain [0, {t_final}]")]
    TimeOutOfRange { t: f64, t_final: f64 },

    #[error("non-positive principal diffusivity {value} ({component} at node ({i}, {j}))")]
    NonPositiveDiffusivity {
        component: &'static str,
        i: usize,
        j: usize,
        value: f64,
    },

    #[error("singular Robin closure on {edge} edge at node {index}: normal coefficient {pivot:e}")]
    SingularClosure {
        edge: &'static str,
        index: usize,
        pivot: f64,
    },

    #[error("Crank-Nicolson step {step} failed: {reason}")]
    StepFailure { step: usize, reason: String },

    #[error("Jacobian column {column} failed: {source}")]
    ColumnFailure {
        column: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("normal equations not positive definite (mu = {mu:e}); increase damping")]
    IndefiniteSystem { mu: f64 },

    #[error("expression error at column {column}: {message}")]
    Expression { column: usize, message: String },

    #[error("config error in {path}: {message}")]
    Config { path: String, message: String },

    #[error("io error: {0}")]
    Io(String),

    #[error("malformed data file {path} line {line}: {message}")]
    Format {
        path: String,
        line: usize,
        message: String,
    },
}

impl Error {
    /// Stable machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "invalid_argument",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::TimeOutOfRange { .. } => "time_out_of_range",
            Error::NonPositiveDiffusivity { .. } => "non_positive_diffusivity",
            Error::SingularClosure { .. } => "singular_closure",
            Error::StepFailure { .. } => "step_failure",
            Error::ColumnFailure { .. } => "column_failure",
            Error::IndefiniteSystem { .. } => "indefinite_system",
            Error::Expression { .. } => "expression",
            Error::Config { .. } => "config",
            Error::Io(_) => "io",
            Error::Format { .. } => "format",
        }
    }

    /// `1` for bad input, `2` for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NonPositiveDiffusivity { .. }
            | Error::SingularClosure { .. }
            | Error::StepFailure { .. }
            | Error::ColumnFailure { .. }
            | Error::IndefiniteSystem { .. } => 2,
            _ => 1,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
