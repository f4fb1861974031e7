//! Closed-form quantized tensor-train representations of the structured
//! vectors and matrices used by grid-based solvers.
//!
//! Everything here is built core-by-core from explicit formulas, never via
//! dense compression, so the constructors stay exact up to grid factor 62.
//! Rank-2 objects (index ramp, triangular and bidiagonal matrices, boundary
//! masks) are realized as little two-state automata over the bits of the
//! little-endian index.

use crate::error::TtError;
use crate::matrix::{Core4, TtMatrix};
use crate::tensor::{Core3, TtVector};

/// Dyadic grid description: `n = 2^d` cells per axis, step `h = 2^-d`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GridSpec {
    d: u32,
}

impl GridSpec {
    pub fn new(d: u32) -> Result<Self, TtError> {
        if !(1..=62).contains(&d) {
            return Err(TtError::InvalidGridFactor(d));
        }
        Ok(GridSpec { d })
    }

    pub fn d(&self) -> u32 {
        self.d
    }

    pub fn n(&self) -> u64 {
        1u64 << self.d
    }

    /// Grid step, exact in binary floating point.
    pub fn h(&self) -> f64 {
        1.0 / self.n() as f64
    }

    /// Cell upper-right corner coordinate `(i + 1) h`.
    pub fn corner(&self, i: u64) -> f64 {
        (i + 1) as f64 * self.h()
    }

    /// Edge midpoint coordinate `(i + 1/2) h`.
    pub fn midpoint(&self, i: u64) -> f64 {
        (i as f64 + 0.5) * self.h()
    }
}

fn check_d(d: u32) -> Result<(), TtError> {
    GridSpec::new(d).map(|_| ())
}

/// Rank-1 vector of ones, length `2^d`.
pub fn ones(d: u32) -> Result<TtVector, TtError> {
    check_d(d)?;
    let cores = (0..d).map(|_| Core3::from_fn(1, 2, 1, |_, _, _| 1.0)).collect();
    Ok(TtVector::from_cores(cores).expect("valid chain"))
}

/// Index ramp `[0, 1, ..., 2^d - 1]`, bond ranks at most 2.
pub fn xfun(d: u32) -> Result<TtVector, TtError> {
    check_d(d)?;
    let weight = |k: u32| (1u64 << k) as f64;
    if d == 1 {
        let core = Core3::from_fn(1, 2, 1, |_, i, _| i as f64);
        return Ok(TtVector::from_cores(vec![core]).expect("valid chain"));
    }
    let mut cores = Vec::with_capacity(d as usize);
    cores.push(Core3::from_fn(1, 2, 2, |_, i, b| match b {
        0 => i as f64 * weight(0),
        _ => 1.0,
    }));
    for k in 1..d - 1 {
        cores.push(Core3::from_fn(2, 2, 2, |a, i, b| match (a, b) {
            (0, 0) => 1.0,
            (1, 0) => i as f64 * weight(k),
            (1, 1) => 1.0,
            _ => 0.0,
        }));
    }
    cores.push(Core3::from_fn(2, 2, 1, |a, i, _| match a {
        0 => 1.0,
        _ => i as f64 * weight(d - 1),
    }));
    Ok(TtVector::from_cores(cores).expect("valid chain"))
}

/// Rank-1 identity matrix of size `2^d`.
pub fn eye(d: u32) -> Result<TtMatrix, TtError> {
    check_d(d)?;
    let cores = (0..d)
        .map(|_| Core4::from_fn(1, 2, 2, 1, |_, i, j, _| if i == j { 1.0 } else { 0.0 }))
        .collect();
    Ok(TtMatrix::from_cores(cores).expect("valid chain"))
}

/// Rank-1 all-ones matrix of size `2^d`.
pub fn ones_matrix(d: u32) -> Result<TtMatrix, TtError> {
    check_d(d)?;
    let cores = (0..d).map(|_| Core4::from_fn(1, 2, 2, 1, |_, _, _, _| 1.0)).collect();
    Ok(TtMatrix::from_cores(cores).expect("valid chain"))
}

// Transfer matrices of the bitwise comparator "i >= j": state 0 keeps the
// comparison won so far, state 1 lost. A strictly larger high bit overrides
// everything below it.
fn ge_transfer(i: usize, j: usize) -> [[f64; 2]; 2] {
    match (i, j) {
        (1, 0) => [[1.0, 0.0], [1.0, 0.0]],
        (0, 1) => [[0.0, 1.0], [0.0, 1.0]],
        _ => [[1.0, 0.0], [0.0, 1.0]],
    }
}

/// Lower-triangular matrix with value `h = 2^-d` on and below the diagonal
/// (rectangular-rule antiderivative); bond ranks at most 2.
pub fn volterra(d: u32) -> Result<TtMatrix, TtError> {
    check_d(d)?;
    let h = GridSpec::new(d)?.h();
    if d == 1 {
        let core = Core4::from_fn(1, 2, 2, 1, |_, i, j, _| if i >= j { h } else { 0.0 });
        return Ok(TtMatrix::from_cores(vec![core]).expect("valid chain"));
    }
    let mut cores = Vec::with_capacity(d as usize);
    cores.push(Core4::from_fn(1, 2, 2, 2, |_, i, j, b| h * ge_transfer(i, j)[0][b]));
    for _ in 1..d - 1 {
        cores.push(Core4::from_fn(2, 2, 2, 2, |a, i, j, b| ge_transfer(i, j)[a][b]));
    }
    cores.push(Core4::from_fn(2, 2, 2, 1, |a, i, j, _| ge_transfer(i, j)[a][0]));
    Ok(TtMatrix::from_cores(cores).expect("valid chain"))
}

/// Unit vector `e_index` of length `2^d`; all ranks 1.
pub fn delta(d: u32, index: u64) -> Result<TtVector, TtError> {
    check_d(d)?;
    let n = 1u64 << d;
    if index >= n {
        return Err(TtError::IndexOutOfBounds {
            index: vec![index as usize],
            sizes: vec![n as usize],
        });
    }
    let cores = (0..d)
        .map(|k| {
            let bit = ((index >> k) & 1) as usize;
            Core3::from_fn(1, 2, 1, |_, i, _| if i == bit { 1.0 } else { 0.0 })
        })
        .collect();
    Ok(TtVector::from_cores(cores).expect("valid chain"))
}

/// Finite-difference building blocks.
pub struct FdBlocks {
    /// First-difference matrix `(1/h) (I - subdiagonal shift)`, the inverse
    /// of [`volterra`]; bond ranks at most 2.
    pub b_inv: TtMatrix,
    /// Identity with the last diagonal entry zeroed; bond ranks at most 2.
    pub j_mask: TtMatrix,
    /// Single 1 at `(n-1, n-1)`; rank 1.
    pub z_last: TtMatrix,
}

// Transfer matrices of the bitwise successor relation "i == j + carry":
// state is the carry into the current bit.
fn shift_transfer(i: usize, j: usize) -> [[f64; 2]; 2] {
    let mut m = [[0.0; 2]; 2];
    for (carry, row) in m.iter_mut().enumerate() {
        let s = j + carry;
        if i == s % 2 {
            row[s / 2] = 1.0;
        }
    }
    m
}

// Transfer matrices tracking "some bit position had i = j = 0" while
// requiring i == j: state 1 once a zero bit has been seen.
fn mask_transfer(i: usize, j: usize) -> [[f64; 2]; 2] {
    match (i, j) {
        (0, 0) => [[0.0, 1.0], [0.0, 1.0]],
        (1, 1) => [[1.0, 0.0], [0.0, 1.0]],
        _ => [[0.0; 2]; 2],
    }
}

fn automaton_matrix(
    d: u32,
    transfer: fn(usize, usize) -> [[f64; 2]; 2],
    start: [f64; 2],
    accept: [f64; 2],
    scale: f64,
) -> TtMatrix {
    if d == 1 {
        let core = Core4::from_fn(1, 2, 2, 1, |_, i, j, _| {
            let m = transfer(i, j);
            let mut acc = 0.0;
            for s in 0..2 {
                for t in 0..2 {
                    acc += start[s] * m[s][t] * accept[t];
                }
            }
            scale * acc
        });
        return TtMatrix::from_cores(vec![core]).expect("valid chain");
    }
    let mut cores = Vec::with_capacity(d as usize);
    cores.push(Core4::from_fn(1, 2, 2, 2, |_, i, j, b| {
        let m = transfer(i, j);
        scale * (start[0] * m[0][b] + start[1] * m[1][b])
    }));
    for _ in 1..d - 1 {
        cores.push(Core4::from_fn(2, 2, 2, 2, |a, i, j, b| transfer(i, j)[a][b]));
    }
    cores.push(Core4::from_fn(2, 2, 2, 1, |a, i, j, _| {
        let m = transfer(i, j);
        m[a][0] * accept[0] + m[a][1] * accept[1]
    }));
    TtMatrix::from_cores(cores).expect("valid chain")
}

pub fn fd_blocks(d: u32) -> Result<FdBlocks, TtError> {
    check_d(d)?;
    let h = GridSpec::new(d)?.h();
    // I - S folds into one automaton: the identity runs with carry 0, the
    // shift starts with carry 1; both must end carry-free.
    let b_inv = automaton_matrix(d, shift_transfer, [1.0, -1.0], [1.0, 0.0], 1.0 / h);
    let j_mask = automaton_matrix(d, mask_transfer, [1.0, 0.0], [0.0, 1.0], 1.0);
    let z_last = {
        let cores = (0..d)
            .map(|_| Core4::from_fn(1, 2, 2, 1, |_, i, j, _| if i == 1 && j == 1 { 1.0 } else { 0.0 }))
            .collect();
        TtMatrix::from_cores(cores).expect("valid chain")
    };
    Ok(FdBlocks { b_inv, j_mask, z_last })
}

/// The structured generators addressable by name.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GeneratorKind {
    Ones,
    Xfun,
    Eye,
    OnesMatrix,
}

/// A generated object, vector or matrix.
#[derive(Clone, Debug)]
pub enum QttObject {
    Vector(TtVector),
    Matrix(TtMatrix),
}

pub fn generate(kind: GeneratorKind, d: u32) -> Result<QttObject, TtError> {
    Ok(match kind {
        GeneratorKind::Ones => QttObject::Vector(ones(d)?),
        GeneratorKind::Xfun => QttObject::Vector(xfun(d)?),
        GeneratorKind::Eye => QttObject::Matrix(eye(d)?),
        GeneratorKind::OnesMatrix => QttObject::Matrix(ones_matrix(d)?),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_spec_exact() {
        for d in [1u32, 5, 20, 62] {
            let g = GridSpec::new(d).unwrap();
            assert_eq!(g.n() as f64 * g.h(), 1.0);
        }
        assert!(GridSpec::new(0).is_err());
        assert!(GridSpec::new(63).is_err());
    }

    #[test]
    fn xfun_small() {
        let x = xfun(2).unwrap();
        assert_eq!(x.to_dense().unwrap(), vec![0.0, 1.0, 2.0, 3.0]);
        let x = xfun(1).unwrap();
        assert_eq!(x.to_dense().unwrap(), vec![0.0, 1.0]);
    }

    #[test]
    fn volterra_d1_matches_formula() {
        let b = volterra(1).unwrap().to_dense().unwrap();
        assert_eq!(b[(0, 0)], 0.5);
        assert_eq!(b[(0, 1)], 0.0);
        assert_eq!(b[(1, 0)], 0.5);
        assert_eq!(b[(1, 1)], 0.5);
    }

    #[test]
    fn binv_d1_matches_formula() {
        let blocks = fd_blocks(1).unwrap();
        let m = blocks.b_inv.to_dense().unwrap();
        assert_eq!(m[(0, 0)], 2.0);
        assert_eq!(m[(0, 1)], 0.0);
        assert_eq!(m[(1, 0)], -2.0);
        assert_eq!(m[(1, 1)], 2.0);
    }

    #[test]
    fn delta_picks_single_entry() {
        let v = delta(2, 3).unwrap().to_dense().unwrap();
        assert_eq!(v, vec![0.0, 0.0, 0.0, 1.0]);
        assert!(delta(2, 4).is_err());
    }
}
