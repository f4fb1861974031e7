use thiserror::Error;
use tt_core::TtError;

#[derive(Debug, Error)]
pub enum SchemeError {
    #[error(transparent)]
    Core(#[from] TtError),

    #[error("grid factor {d} exceeds the dense-path cap of {cap}")]
    DenseGridTooLarge { d: u32, cap: u32 },

    #[error("cross interpolation did not converge while building {stage} (validation error {error:.3e})")]
    CrossNotConverged { stage: &'static str, error: f64 },

    #[error("dense system is numerically singular (relative residual {residual:.3e})")]
    SingularDense { residual: f64 },

    #[error("operation requires the {0} preset")]
    WrongPreset(&'static str),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}
