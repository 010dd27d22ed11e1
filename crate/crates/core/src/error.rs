use thiserror::Error;

/// Errors raised by the rate calculator.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: String, found: String },

    #[error("unphysical state: symplectic eigenvalue {nu} below 1")]
    UnphysicalState { nu: f64 },

    #[error("unphysical channel: {0}")]
    UnphysicalChannel(String),

    #[error("neither noise condition (a) nor (b) holds; no outer bound available")]
    NoBoundAvailable,

    #[error("{0} senders requested; at most {1} supported")]
    TooManySenders(usize, usize),

    #[error("Fock truncation too small: tail mass {tail:e} exceeds {limit:e}")]
    Truncation { tail: f64, limit: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
