use thiserror::Error;

/// Errors raised by tensor-train operations.
#[derive(Debug, Error)]
pub enum TtError {
    #[error("mode sizes do not match: {left:?} vs {right:?}")]
    ShapeMismatch { left: Vec<usize>, right: Vec<usize> },

    #[error("index {index:?} out of bounds for mode sizes {sizes:?}")]
    IndexOutOfBounds { index: Vec<usize>, sizes: Vec<usize> },

    #[error("dense realization of {size} entries exceeds the cap of {cap}")]
    DenseTooLarge { size: u128, cap: usize },

    #[error("invalid tolerance {0}: must satisfy 0 <= tol < 1")]
    InvalidTolerance(f64),

    #[error("invalid grid factor {0}: must lie in 1..=62")]
    InvalidGridFactor(u32),

    #[error("invalid core chain: {0}")]
    InvalidCores(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("evaluation returned non-finite value {value} at index {index:?}")]
    NonFiniteEval { value: f64, index: Vec<usize> },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("malformed container: {0}")]
    MalformedContainer(String),
}
