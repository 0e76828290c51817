use thiserror::Error;

/// Errors raised by the estimation pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("no events in the data")]
    NoEvents,
    #[error("information matrix is singular or not positive definite")]
    SingularInformation,
    #[error("Cox fit did not converge after {iterations} iterations")]
    NotConverged { iterations: usize },
    #[error("non-finite input: {0}")]
    NonFiniteInput(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("validation subset is empty")]
    EmptyValidation,
    #[error("calibration design matrix is rank deficient")]
    RankDeficientDesign,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("recalibration window at t = {time} has {size} validated subjects at risk")]
    InsufficientRiskSet { time: f64, size: usize },
    #[error("raking system is singular")]
    SingularB,
    #[error("raking did not converge (residual {residual:e} after {iterations} iterations)")]
    RakingNotConverged { residual: f64, iterations: usize },
    #[error("auxiliary column {0} is numerically zero")]
    AuxiliaryDegenerate(usize),
    #[error("invalid sampling plan: {0}")]
    InvalidPlan(String),
    #[error("{failed} of {total} bootstrap replicates failed")]
    AllReplicatesFailed { failed: usize, total: usize },
    #[error("invalid scenario configuration: {0}")]
    InvalidConfig(String),
    #[error("censoring target {target} not reachable; achievable range [{low}, {high}]")]
    NotBracketed { target: f64, low: f64, high: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
