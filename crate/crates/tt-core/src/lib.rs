//! Tensor-train (TT) and quantized tensor-train (QTT) linear algebra.
//!
//! The crate provides the representation and arithmetic of train-format
//! vectors and operators (compression, rounding, products, Kronecker
//! structure), closed-form QTT constructors for structured grid objects,
//! cross interpolation for black-box tensors, and an alternating low-rank
//! solver for linear systems. Everything is `f64`.
//!
//! Quantization convention: a vector of length `2^d` is reshaped into `d`
//! binary modes with the little-endian multi-index
//! `i = i_1 + 2 i_2 + 4 i_3 + ...`, so the first core carries the least
//! significant bit. Kronecker products `a (x) b` keep `b` as the fast factor
//! and concatenate `b`'s cores before `a`'s.

mod dense;
mod error;

pub mod constructors;
pub mod cross;
pub mod linsolve;
pub mod matrix;
pub mod storage;
pub mod tensor;

pub use constructors::{GeneratorKind, GridSpec, QttObject};
pub use cross::{CrossConfig, CrossReport};
pub use error::TtError;
pub use linsolve::{amen_solve, residual, LinSolveConfig, LinSolveReport, LocalSolver};
pub use matrix::{Core4, TtMatrix};
pub use tensor::{Core3, Tolerance, TtVector, DENSE_CAP};
