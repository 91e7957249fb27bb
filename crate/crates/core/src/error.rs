use num_complex::Complex64;
use thiserror::Error;

/// Errors produced anywhere in the recovery pipeline.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("matrix entry ({row}, {col}) is not finite")]
    NonFinite { row: usize, col: usize },

    #[error("backend iteration did not converge: {0}")]
    ConvergenceFailure(String),

    #[error("invalid exponential sum: {0}")]
    InvalidSum(String),

    #[error("bad parameters: {0}")]
    BadParameters(String),

    #[error(
        "frequency {lambda} of term {term} on axis {axis} equals 2*pi*i*{index}/P; \
         the Fourier coefficients lose their rational structure"
    )]
    DegenerateFrequency { term: usize, axis: usize, index: i64, lambda: Complex64 },

    #[error("sample at index {index} is inconsistent with an otherwise converged rational fit")]
    DegenerateSample { index: i64 },

    #[error("coefficient at index {0:?} is not available in the source")]
    MissingCoefficient(Vec<i64>),

    #[error("AAA stopped at order {order} with relative residual {residual:e} above tolerance")]
    NoConvergence { order: usize, residual: f64 },

    #[error("numerical rank {rank} of the Loewner matrix is below the requested order {order}")]
    RankDeficient { rank: usize, order: usize },

    #[error("axis {axis} yields order {found}, the first axis yields {expected}")]
    AxisOrderMismatch { axis: usize, expected: usize, found: usize },

    #[error("{context}: numerical rank {rank} below the required {required}")]
    IllConditioned { context: String, rank: usize, required: usize },

    #[error(
        "no unambiguous pairing at stage {stage}, row {row}: best score {best:e}, runner-up {runner_up:e}"
    )]
    AmbiguousPairing { stage: usize, row: usize, best: f64, runner_up: f64 },

    #[error("recovered pole {pole} on axis {axis} violates |Re b| < tau = {tau}")]
    TauViolation { axis: usize, pole: Complex64, tau: usize },

    #[error("truth has order {truth}, reconstruction has order {recon}")]
    OrderMismatch { truth: usize, recon: usize },

    #[error("re-synthesis residual {residual:e} exceeds {threshold:e}; a pole may be hidden by a vanishing axis value")]
    ResidualCheck { residual: f64, threshold: f64 },

    #[error("at pole path {path:?}: {source}")]
    AtNode { path: Vec<Complex64>, source: Box<Error> },
}

impl Error {
    /// Stable name of the error kind, used in machine-readable output.
    pub fn name(&self) -> &'static str {
        match self {
            Error::ShapeMismatch(_) => "ShapeMismatch",
            Error::NonFinite { .. } => "NonFinite",
            Error::ConvergenceFailure(_) => "ConvergenceFailure",
            Error::InvalidSum(_) => "InvalidSum",
            Error::BadParameters(_) => "BadParameters",
            Error::DegenerateFrequency { .. } => "DegenerateFrequency",
            Error::DegenerateSample { .. } => "DegenerateFrequency",
            Error::MissingCoefficient(_) => "MissingCoefficient",
            Error::NoConvergence { .. } => "NoConvergence",
            Error::RankDeficient { .. } => "RankDeficient",
            Error::AxisOrderMismatch { .. } => "AxisOrderMismatch",
            Error::IllConditioned { .. } => "IllConditioned",
            Error::AmbiguousPairing { .. } => "AmbiguousPairing",
            Error::TauViolation { .. } => "TauViolation",
            Error::OrderMismatch { .. } => "OrderMismatch",
            Error::ResidualCheck { .. } => "ResidualCheck",
            Error::AtNode { source, .. } => source.name(),
        }
    }

    /// Strips tree-path context.
    pub fn root_cause(&self) -> &Error {
        match self {
            Error::AtNode { source, .. } => source.root_cause(),
            other => other,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
