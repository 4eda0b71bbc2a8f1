use thiserror::Error;

pub type Result<T> = std::result::Result<T, CombError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CombError {
    #[error("size limit exceeded: {entries} entries requested, cap is {cap}")]
    Size { entries: usize, cap: usize },

    #[error("shape error: {0}")]
    Shape(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("unknown leg label `{0}`")]
    UnknownLabel(String),

    #[error("duplicate leg label `{0}`")]
    DuplicateLabel(String),

    #[error("non-finite entry at index {0}")]
    NonFinite(usize),

    #[error("invalid time set: {0}")]
    InvalidTimeSet(String),

    #[error("time set {sub} is not contained in {sup}")]
    NotContained { sub: String, sup: String },

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("invalid channel: {0}")]
    InvalidChannel(String),

    #[error("invalid basis: {0}")]
    InvalidBasis(String),

    #[error("no identity defined at time {time}: slot maps dimension {dim_in} to {dim_out} and no generalized identity is registered")]
    MissingIdentity {
        time: String,
        dim_in: usize,
        dim_out: usize,
    },

    #[error("inconsistent factorization: {0}")]
    InconsistentFactorization(String),

    #[error("numerical integrity: imaginary residue {residue:e} exceeds {tol:e}")]
    NumericalIntegrity { residue: f64, tol: f64 },

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid family: {0}")]
    InvalidFamily(String),

    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),

    #[error("invalid scenario parameters: {0}")]
    InvalidParameters(String),
}
