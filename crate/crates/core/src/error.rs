use thiserror::Error;

/// Errors raised anywhere in the solver stack.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("alpha1 + alpha2 must be < 1 (got {alpha1} + {alpha2})")]
    ParameterConflict { alpha1: f64, alpha2: f64 },

    #[error("sigma0 = {sigma0} is below the admissible floor alpha2*beta/l1 = {floor}")]
    StepSeedTooSmall { sigma0: f64, floor: f64 },

    #[error("initial Hessian approximation has spectrum [{min}, {max}] outside [mu, l1] = [{mu}, {l1}]")]
    SpectrumViolation { min: f64, max: f64, mu: f64, l1: f64 },

    #[error("curvature bounds are degenerate: mu = {mu}, l1 = {l1}")]
    DegenerateCurvature { mu: f64, l1: f64 },

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid spectrum request: mu = {mu}, l1 = {l1}")]
    InvalidSpectrum { mu: f64, l1: f64 },

    #[error("matrix market parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("matrix is not symmetric (|a[{i},{j}] - a[{j},{i}]| = {gap})")]
    NotSymmetric { i: usize, j: usize, gap: f64 },

    #[error("matrix is not positive definite (lambda_min = {lambda_min})")]
    NotPositiveDefinite { lambda_min: f64 },

    #[error("io error on {path}: {reason}")]
    Io { path: String, reason: String },

    #[error("conjugate residual did not reach the tolerance within {max_iters} iterations (residual {residual}, target {target})")]
    IterationCapExceeded { max_iters: usize, residual: f64, target: f64 },

    #[error("symmetric eigendecomposition did not converge")]
    EigFailure,

    #[error("loss sample has zero displacement")]
    ZeroDisplacement,

    #[error("learner update called without a matching prediction for round {round}")]
    StateMismatch { round: usize },

    #[error("line search exceeded {attempts} attempts (last step {eta}); curvature metadata is likely invalid")]
    BacktrackCapExceeded { attempts: usize, eta: f64 },

    #[error("non-finite iterate or gradient at iteration {k}")]
    NonFiniteIterate { k: usize },

    #[error("ground truth missing for check {check}: {what}")]
    MissingGroundTruth { check: &'static str, what: &'static str },

    #[error("line search failed after {attempts} attempts")]
    LineSearchFailure { attempts: usize },

    #[error("objective does not expose function values")]
    MissingValue,

    #[error("config key {key}: {reason}")]
    Config { key: String, reason: String },
}

impl Error {
    /// Stable machine-readable category name.
    pub fn category(&self) -> &'static str {
        match self {
            Error::ParameterConflict { .. } => "ParameterConflict",
            Error::StepSeedTooSmall { .. } => "StepSeedTooSmall",
            Error::SpectrumViolation { .. } => "SpectrumViolation",
            Error::DegenerateCurvature { .. } => "DegenerateCurvature",
            Error::InvalidParameter { .. } => "InvalidParameter",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::InvalidSpectrum { .. } => "InvalidSpectrum",
            Error::Parse { .. } => "ParseError",
            Error::NotSymmetric { .. } => "NotSymmetric",
            Error::NotPositiveDefinite { .. } => "NotPositiveDefinite",
            Error::Io { .. } => "IoError",
            Error::IterationCapExceeded { .. } => "IterationCapExceeded",
            Error::EigFailure => "EigFailure",
            Error::ZeroDisplacement => "ZeroDisplacement",
            Error::StateMismatch { .. } => "StateMismatch",
            Error::BacktrackCapExceeded { .. } => "BacktrackCapExceeded",
            Error::NonFiniteIterate { .. } => "NonFiniteIterate",
            Error::MissingGroundTruth { .. } => "MissingGroundTruth",
            Error::LineSearchFailure { .. } => "LineSearchFailure",
            Error::MissingValue => "MissingValue",
            Error::Config { .. } => "ConfigError",
        }
    }

    /// True for errors caused by invalid user input rather than a runtime failure.
    pub fn is_usage_error(&self) -> bool {
        matches!(
            self,
            Error::ParameterConflict { .. }
                | Error::StepSeedTooSmall { .. }
                | Error::SpectrumViolation { .. }
                | Error::DegenerateCurvature { .. }
                | Error::InvalidParameter { .. }
                | Error::DimensionMismatch { .. }
                | Error::InvalidSpectrum { .. }
                | Error::Parse { .. }
                | Error::NotSymmetric { .. }
                | Error::NotPositiveDefinite { .. }
                | Error::Io { .. }
                | Error::Config { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
