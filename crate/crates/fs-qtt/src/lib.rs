//! Derivative-free finite-sum discretization of two-dimensional stationary
//! diffusion problems in the quantized tensor-train format.
//!
//! The scheme module carries the low-rank pipeline (staggered sampling,
//! projector assembly, multiplier solve); the fd module provides the
//! second-order finite-difference reference solvers used as oracles, the
//! dense inverse-identity check and grid restriction.

mod error;

pub mod fd;
pub mod problem;
pub mod scheme;

pub use error::SchemeError;
pub use problem::{PointSource, ProblemSpec, RightHandSide, ScalarFn};
pub use scheme::{
    Axis, DiscretizedProblem, OperatorSet, SchemeConfig, SolutionBundle, SolveStats,
};
