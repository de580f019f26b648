use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum MixlapError {
    #[error("gamma function pole at {0}")]
    GammaPole(f64),

    #[error("invalid hypergeometric arguments: {0}")]
    InvalidHypergeometric(String),

    #[error("hypergeometric series diverges at z = 1 (c - a - b = {0} <= 0)")]
    HypergeometricDivergence(f64),

    #[error("{what} did not converge within {limit} iterations")]
    NonConvergence { what: &'static str, limit: usize },

    #[error("limit regime mismatch: requested {requested}, but c - a - b = {excess}")]
    RegimeMismatch {
        requested: &'static str,
        excess: f64,
    },

    #[error("parameter out of domain: {0}")]
    Domain(String),

    #[error(
        "function is not in the weighted space L^s (tail exponent {tail_exponent} >= 2s = {two_s})"
    )]
    NotInWeightedSpace { tail_exponent: f64, two_s: f64 },

    #[error("calibration of the closed-form prefactor failed: {0}")]
    Calibration(String),

    #[error("regime precondition violated: {0}")]
    RegimePrecondition(String),

    #[error("assembly sign pattern violated at row {row}, column {col}: entry {value}")]
    SignPattern { row: usize, col: usize, value: f64 },

    #[error("linear system is singular")]
    Singular,

    #[error("invalid grid: {0}")]
    Grid(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, MixlapError>;

impl From<std::io::Error> for MixlapError {
    fn from(e: std::io::Error) -> Self {
        MixlapError::Io(e.to_string())
    }
}
