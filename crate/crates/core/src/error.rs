use thiserror::Error;

/// Errors raised by the clustering library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum GcrError {
    #[error("matrix is not positive definite (pivot {pivot:e} at index {index})")]
    NotPositiveDefinite { index: usize, pivot: f64 },

    #[error("rank-1 downdate would destroy positive definiteness (denominator {denominator:e})")]
    DowndateSingular { denominator: f64 },

    #[error("empty input")]
    EmptyInput,

    #[error("argument out of domain: {0}")]
    DomainError(String),

    #[error("cluster {0} is empty")]
    EmptyCluster(usize),

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("invalid hyperparameters: {0}")]
    InvalidHyperparams(String),

    #[error("invalid indicator vector: {0}")]
    InvalidIndicators(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("eigensolver did not converge")]
    EigenFailure,

    #[error("MAP ascent did not converge within {0} sweeps")]
    NonConvergence(usize),

    #[error("enumeration of {0} assignments exceeds the limit")]
    TooLarge(u128),

    #[error("quadrature failed to reach tolerance: {0}")]
    QuadratureFailure(String),

    #[error("angle {theta} has vanishing cosine")]
    DegenerateAngle { theta: f64 },
}

pub type Result<T> = std::result::Result<T, GcrError>;
