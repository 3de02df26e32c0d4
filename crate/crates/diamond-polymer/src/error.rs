//! Error type shared by every module.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid lattice parameters: {0}")]
    InvalidParams(String),
    #[error("enumeration of {count} items exceeds cap {cap}")]
    CapExceeded { count: String, cap: u64 },
    #[error("address does not fit the {bits}-bit key space at depth {depth}")]
    AddressCapacity { depth: usize, bits: u32 },
    #[error("address mismatch: {0}")]
    AddressMismatch(String),
    #[error("beta = {beta} outside the finite-moment range of {family}")]
    OutOfRange { family: String, beta: f64 },
    #[error("invalid disorder family: {0}")]
    InvalidDisorder(String),
    #[error("depth {depth} exceeds the configured budget {budget}")]
    DepthTooLarge { depth: usize, budget: usize },
    #[error("tolerance {tol} not reached after {iterations} iterations")]
    ToleranceNotReached { tol: f64, iterations: usize },
    #[error("beta_hat = {beta_hat} is at or beyond the critical value {critical}")]
    AtOrBeyondCritical { beta_hat: f64, critical: f64 },
    #[error("no blow-up detected within {steps} steps")]
    NoBlowUpDetected { steps: usize },
    #[error("leaf array has length {got}, expected {expected}")]
    LengthMismatch { got: usize, expected: usize },
    #[error("variant mismatch: {0}")]
    VariantMismatch(String),
    #[error("regime mismatch: {0}")]
    Regime(String),
    #[error("config error in `{field}`: {msg}")]
    Config { field: String, msg: String },
    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}
