//! Tensor-train vectors: representation, exact arithmetic, SVD compression
//! and rounding.
//!
//! A tensor with mode sizes `I_1..I_d` is stored as a chain of order-3 cores,
//! core `k` of shape `R_{k-1} x I_k x R_k` with boundary ranks
//! `R_0 = R_d = 1`. An entry is the product of the corresponding core slices:
//!
//! ```text
//! X[i_1, ..., i_d] = G_1(i_1) G_2(i_2) ... G_d(i_d)
//! ```
//!
//! Linear indices follow the little-endian convention
//! `i = i_1 + i_2 I_1 + i_3 I_1 I_2 + ...`, so the first core carries the
//! fastest-varying index.

use crate::dense;
use crate::error::TtError;
use faer::{Mat, MatRef};

/// Default cap on dense realizations (entries).
pub const DENSE_CAP: usize = 1 << 24;

/// Relative Frobenius-norm accuracy for compression and rounding.
///
/// A tolerance of zero requests a lossless (up to machine precision)
/// representation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerance(f64);

impl Tolerance {
    pub const EXACT: Tolerance = Tolerance(0.0);

    pub fn new(value: f64) -> Result<Self, TtError> {
        if !(0.0..1.0).contains(&value) || !value.is_finite() {
            return Err(TtError::InvalidTolerance(value));
        }
        Ok(Tolerance(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// One order-3 core, stored column-major with the left rank fastest:
/// `data[a + r_left*(i + mode*b)]`.
///
/// Both standard unfoldings are zero-copy views of the same buffer:
/// the left unfolding `(r_left*mode) x r_right` and the right unfolding
/// `r_left x (mode*r_right)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Core3 {
    r_left: usize,
    mode: usize,
    r_right: usize,
    data: Vec<f64>,
}

impl Core3 {
    pub fn zeros(r_left: usize, mode: usize, r_right: usize) -> Self {
        Core3 { r_left, mode, r_right, data: vec![0.0; r_left * mode * r_right] }
    }

    pub fn from_fn(r_left: usize, mode: usize, r_right: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut core = Core3::zeros(r_left, mode, r_right);
        for b in 0..r_right {
            for i in 0..mode {
                for a in 0..r_left {
                    core.data[a + r_left * (i + mode * b)] = f(a, i, b);
                }
            }
        }
        core
    }

    pub fn from_vec(r_left: usize, mode: usize, r_right: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), r_left * mode * r_right, "core buffer size mismatch");
        Core3 { r_left, mode, r_right, data }
    }

    #[inline]
    pub fn r_left(&self) -> usize {
        self.r_left
    }

    #[inline]
    pub fn mode(&self) -> usize {
        self.mode
    }

    #[inline]
    pub fn r_right(&self) -> usize {
        self.r_right
    }

    #[inline]
    pub fn get(&self, a: usize, i: usize, b: usize) -> f64 {
        self.data[a + self.r_left * (i + self.mode * b)]
    }

    #[inline]
    pub fn set(&mut self, a: usize, i: usize, b: usize, v: f64) {
        self.data[a + self.r_left * (i + self.mode * b)] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// `(r_left*mode) x r_right` unfolding.
    pub fn left_mat(&self) -> MatRef<'_, f64> {
        MatRef::from_column_major_slice(&self.data, self.r_left * self.mode, self.r_right)
    }

    /// `r_left x (mode*r_right)` unfolding.
    pub fn right_mat(&self) -> MatRef<'_, f64> {
        MatRef::from_column_major_slice(&self.data, self.r_left, self.mode * self.r_right)
    }

    /// Rebuild a core from its left unfolding.
    pub fn from_left_mat(m: MatRef<'_, f64>, r_left: usize, mode: usize, r_right: usize) -> Self {
        debug_assert_eq!(m.nrows(), r_left * mode);
        debug_assert_eq!(m.ncols(), r_right);
        Core3::from_fn(r_left, mode, r_right, |a, i, b| m[(a + r_left * i, b)])
    }

    /// Rebuild a core from its right unfolding.
    pub fn from_right_mat(m: MatRef<'_, f64>, r_left: usize, mode: usize, r_right: usize) -> Self {
        debug_assert_eq!(m.nrows(), r_left);
        debug_assert_eq!(m.ncols(), mode * r_right);
        Core3::from_fn(r_left, mode, r_right, |a, i, b| m[(a, i + mode * b)])
    }

    /// The `r_left x r_right` slice at mode index `i`, as a dense matrix.
    pub fn slice(&self, i: usize) -> Mat<f64> {
        Mat::from_fn(self.r_left, self.r_right, |a, b| self.get(a, i, b))
    }
}

/// A tensor in train format.
#[derive(Clone, Debug, PartialEq)]
pub struct TtVector {
    cores: Vec<Core3>,
}

impl TtVector {
    /// Builds a vector from cores, validating the rank chain.
    pub fn from_cores(cores: Vec<Core3>) -> Result<Self, TtError> {
        if cores.is_empty() {
            return Err(TtError::InvalidCores("empty core chain".into()));
        }
        if cores[0].r_left != 1 {
            return Err(TtError::InvalidCores(format!("leading rank {} != 1", cores[0].r_left)));
        }
        if cores[cores.len() - 1].r_right != 1 {
            return Err(TtError::InvalidCores(format!(
                "trailing rank {} != 1",
                cores[cores.len() - 1].r_right
            )));
        }
        for k in 1..cores.len() {
            if cores[k - 1].r_right != cores[k].r_left {
                return Err(TtError::InvalidCores(format!(
                    "rank chain broken between cores {} and {}: {} vs {}",
                    k - 1,
                    k,
                    cores[k - 1].r_right,
                    cores[k].r_left
                )));
            }
        }
        Ok(TtVector { cores })
    }

    /// All-zero tensor with rank-1 cores.
    pub fn zeros(mode_sizes: &[usize]) -> Self {
        let cores = mode_sizes.iter().map(|&n| Core3::zeros(1, n, 1)).collect();
        TtVector { cores }
    }

    pub fn cores(&self) -> &[Core3] {
        &self.cores
    }

    pub fn num_modes(&self) -> usize {
        self.cores.len()
    }

    pub fn mode_sizes(&self) -> Vec<usize> {
        self.cores.iter().map(|c| c.mode).collect()
    }

    /// Rank chain `R_0..R_d` (length `d + 1`).
    pub fn ranks(&self) -> Vec<usize> {
        let mut r = Vec::with_capacity(self.cores.len() + 1);
        r.push(self.cores[0].r_left);
        r.extend(self.cores.iter().map(|c| c.r_right));
        r
    }

    pub fn max_rank(&self) -> usize {
        self.ranks().into_iter().max().unwrap_or(1)
    }

    /// Total number of represented entries.
    pub fn full_len(&self) -> u128 {
        self.cores.iter().map(|c| c.mode as u128).product()
    }

    fn check_same_shape(&self, other: &Self) -> Result<(), TtError> {
        if self.mode_sizes() != other.mode_sizes() {
            return Err(TtError::ShapeMismatch {
                left: self.mode_sizes(),
                right: other.mode_sizes(),
            });
        }
        Ok(())
    }

    /// Compresses a dense tensor (little-endian linear order) into train
    /// format by successive SVDs of the unfoldings.
    ///
    /// The truncation budget `tol * |T|_F` is distributed uniformly over the
    /// `d - 1` unfoldings, so the result satisfies
    /// `|X - T|_F <= tol * |T|_F`.
    pub fn from_dense(data: &[f64], mode_sizes: &[usize], tol: Tolerance) -> Result<Self, TtError> {
        if mode_sizes.is_empty() || mode_sizes.iter().any(|&n| n == 0) {
            return Err(TtError::InvalidCores(format!("bad mode sizes {mode_sizes:?}")));
        }
        let expected: u128 = mode_sizes.iter().map(|&n| n as u128).product();
        if expected != data.len() as u128 {
            return Err(TtError::ShapeMismatch {
                left: mode_sizes.to_vec(),
                right: vec![data.len()],
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(TtError::NonFiniteEval { value: f64::NAN, index: vec![] });
        }
        let d = mode_sizes.len();
        let norm = data.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Ok(TtVector::zeros(mode_sizes));
        }
        let delta = truncation_budget(tol, norm, d);

        let mut cores = Vec::with_capacity(d);
        let mut work = data.to_vec();
        let mut r_prev = 1usize;
        for (k, &n) in mode_sizes.iter().enumerate().take(d - 1) {
            let m = r_prev * n;
            let cols = work.len() / m;
            let a = MatRef::from_column_major_slice(&work, m, cols);
            let (u, s, v) = dense::thin_svd(a);
            let r = truncation_rank(&s, delta, None);
            cores.push(Core3::from_left_mat(u.get(.., ..r), r_prev, n, r));
            let mut next = vec![0.0; r * cols];
            for c in 0..cols {
                for j in 0..r {
                    next[j + r * c] = s[j] * v[(c, j)];
                }
            }
            work = next;
            r_prev = r;
            let _ = k;
        }
        cores.push(Core3::from_vec(r_prev, mode_sizes[d - 1], 1, work));
        Ok(TtVector { cores })
    }

    /// Expands to a dense vector in little-endian linear order.
    pub fn to_dense(&self) -> Result<Vec<f64>, TtError> {
        self.to_dense_with_cap(DENSE_CAP)
    }

    pub fn to_dense_with_cap(&self, cap: usize) -> Result<Vec<f64>, TtError> {
        let total = self.full_len();
        if total > cap as u128 {
            return Err(TtError::DenseTooLarge { size: total, cap });
        }
        // Progressive contraction: acc is (len x r) column-major; multiplying
        // by the right unfolding (r x mode*r') yields (len x mode*r') whose
        // buffer is already the (len*mode x r') unfolding.
        let mut acc: Vec<f64> = vec![1.0];
        let mut len = 1usize;
        let mut r = 1usize;
        for core in &self.cores {
            let a = MatRef::from_column_major_slice(&acc, len, r);
            let prod = a * core.right_mat();
            len *= core.mode;
            r = core.r_right;
            let mut next = vec![0.0; len * r];
            for c in 0..prod.ncols() {
                for i in 0..prod.nrows() {
                    next[i + prod.nrows() * c] = prod[(i, c)];
                }
            }
            acc = next;
        }
        Ok(acc)
    }

    /// Entry at a multi-index, via the product of core slices.
    pub fn element(&self, idx: &[usize]) -> Result<f64, TtError> {
        let sizes = self.mode_sizes();
        if idx.len() != sizes.len() || idx.iter().zip(&sizes).any(|(&i, &n)| i >= n) {
            return Err(TtError::IndexOutOfBounds { index: idx.to_vec(), sizes });
        }
        let mut v = vec![1.0f64];
        for (core, &i) in self.cores.iter().zip(idx) {
            let mut next = vec![0.0f64; core.r_right];
            for (b, slot) in next.iter_mut().enumerate() {
                let mut acc = 0.0;
                for (a, &va) in v.iter().enumerate() {
                    acc += va * core.get(a, i, b);
                }
                *slot = acc;
            }
            v = next;
        }
        Ok(v[0])
    }

    /// `alpha * x + beta * y` by block-diagonal core concatenation.
    /// Ranks add per bond; no rounding is applied.
    pub fn axpby(alpha: f64, x: &Self, beta: f64, y: &Self) -> Result<Self, TtError> {
        x.check_same_shape(y)?;
        let d = x.cores.len();
        if d == 1 {
            let n = x.cores[0].mode;
            let core = Core3::from_fn(1, n, 1, |_, i, _| {
                alpha * x.cores[0].get(0, i, 0) + beta * y.cores[0].get(0, i, 0)
            });
            return Ok(TtVector { cores: vec![core] });
        }
        let mut cores = Vec::with_capacity(d);
        for k in 0..d {
            let cx = &x.cores[k];
            let cy = &y.cores[k];
            let n = cx.mode;
            let core = if k == 0 {
                Core3::from_fn(1, n, cx.r_right + cy.r_right, |_, i, b| {
                    if b < cx.r_right {
                        alpha * cx.get(0, i, b)
                    } else {
                        beta * cy.get(0, i, b - cx.r_right)
                    }
                })
            } else if k == d - 1 {
                Core3::from_fn(cx.r_left + cy.r_left, n, 1, |a, i, _| {
                    if a < cx.r_left {
                        cx.get(a, i, 0)
                    } else {
                        cy.get(a - cx.r_left, i, 0)
                    }
                })
            } else {
                Core3::from_fn(cx.r_left + cy.r_left, n, cx.r_right + cy.r_right, |a, i, b| {
                    if a < cx.r_left && b < cx.r_right {
                        cx.get(a, i, b)
                    } else if a >= cx.r_left && b >= cx.r_right {
                        cy.get(a - cx.r_left, i, b - cx.r_right)
                    } else {
                        0.0
                    }
                })
            };
            cores.push(core);
        }
        Ok(TtVector { cores })
    }

    pub fn add(&self, other: &Self) -> Result<Self, TtError> {
        Self::axpby(1.0, self, 1.0, other)
    }

    pub fn sub(&self, other: &Self) -> Result<Self, TtError> {
        Self::axpby(1.0, self, -1.0, other)
    }

    /// Scales by a constant (folded into the first core).
    pub fn scale(&self, alpha: f64) -> Self {
        let mut cores = self.cores.clone();
        for v in &mut cores[0].data {
            *v *= alpha;
        }
        TtVector { cores }
    }

    /// Inner product of the represented tensors.
    pub fn dot(&self, other: &Self) -> Result<f64, TtError> {
        self.check_same_shape(other)?;
        let mut p = Mat::<f64>::from_fn(1, 1, |_, _| 1.0);
        for (cx, cy) in self.cores.iter().zip(&other.cores) {
            let mut q = Mat::<f64>::zeros(cx.r_right, cy.r_right);
            for i in 0..cx.mode {
                let xs = cx.slice(i);
                let ys = cy.slice(i);
                q += xs.transpose() * (&p * &ys);
            }
            p = q;
        }
        Ok(p[(0, 0)])
    }

    /// Frobenius norm.
    ///
    /// Computed through a QR sweep rather than `sqrt(dot(x, x))`: the sweep
    /// stays accurate in absolute terms even when the representation carries
    /// heavy cancellation (e.g. residuals of the form `A x - b`).
    pub fn norm(&self) -> f64 {
        // Carry the triangular factor left to right; the final factor holds
        // the whole norm.
        let mut carry = Mat::<f64>::from_fn(1, 1, |_, _| 1.0);
        for (k, core) in self.cores.iter().enumerate() {
            let m = &carry * core.right_mat(); // (r x mode*r')
            let r_left = m.nrows();
            let stacked =
                Mat::<f64>::from_fn(r_left * core.mode, core.r_right, |ai, b| m[(ai % r_left, ai / r_left + core.mode * b)]);
            if k + 1 == self.cores.len() {
                return dense::frobenius(stacked.as_ref());
            }
            carry = dense::qr_r_only(stacked.as_ref());
        }
        unreachable!("core chain is never empty")
    }

    /// SVD re-compression to relative accuracy `tol`; ranks never increase.
    pub fn round(&self, tol: Tolerance) -> Self {
        self.round_capped(tol, None).0
    }

    /// Like [`TtVector::round`], additionally capping every bond rank at
    /// `rmax`. The flag reports whether the cap was hit (accuracy is then
    /// best-effort).
    pub fn round_capped(&self, tol: Tolerance, rmax: Option<usize>) -> (Self, bool) {
        let d = self.cores.len();
        if d == 1 {
            return (self.clone(), false);
        }
        // Phase 1: right-to-left orthogonalization. Afterwards every core but
        // the first has orthonormal rows in its right unfolding, and the whole
        // norm sits in the first core.
        let mut cores = self.cores.clone();
        for k in (1..d).rev() {
            let (q, r) = dense::thin_qr(cores[k].right_mat().transpose());
            let r_new = q.ncols();
            cores[k] = Core3::from_right_mat(q.transpose(), r_new, cores[k].mode, cores[k].r_right);
            let prod = cores[k - 1].left_mat() * r.transpose();
            cores[k - 1] = Core3::from_left_mat(prod.as_ref(), cores[k - 1].r_left, cores[k - 1].mode, r_new);
        }
        let norm = dense::frobenius(cores[0].left_mat());
        if norm == 0.0 {
            return (TtVector::zeros(&self.mode_sizes()), false);
        }
        let delta = truncation_budget(tol, norm, d);

        // Phase 2: left-to-right truncated SVDs.
        let mut capped = false;
        for k in 0..d - 1 {
            let (u, s, v) = dense::thin_svd(cores[k].left_mat());
            let r = truncation_rank(&s, delta, rmax);
            if rmax.is_some_and(|m| truncation_rank(&s, delta, None) > m && r == m) {
                capped = true;
            }
            let r_left = cores[k].r_left;
            let mode = cores[k].mode;
            cores[k] = Core3::from_left_mat(u.get(.., ..r), r_left, mode, r);
            let mut carry = Mat::<f64>::zeros(r, v.nrows());
            for j in 0..r {
                for c in 0..v.nrows() {
                    carry[(j, c)] = s[j] * v[(c, j)];
                }
            }
            let prod = &carry * cores[k + 1].right_mat();
            cores[k + 1] = Core3::from_right_mat(prod.as_ref(), r, cores[k + 1].mode, cores[k + 1].r_right);
        }
        (TtVector { cores }, capped)
    }

    /// Kronecker product `a (x) b` with `b` the fast factor:
    /// `(a (x) b)[j * len(b) + i] = a[j] * b[i]`. In core order the fast
    /// factor's cores come first; rank chains concatenate.
    pub fn kron(a: &Self, b: &Self) -> Self {
        let mut cores = b.cores.clone();
        cores.extend(a.cores.iter().cloned());
        TtVector { cores }
    }

    /// Effective rank: the constant rank yielding the same parameter count
    /// as the actual rank chain (positive root of a quadratic).
    pub fn erank(&self) -> f64 {
        erank_of(&self.mode_sizes(), &self.ranks())
    }
}

/// Per-unfolding truncation threshold. A zero tolerance still discards
/// numerically negligible singular values so that exact low-rank content
/// (e.g. a duplicated rank-1 tensor) compresses to its true rank.
pub(crate) fn truncation_budget(tol: Tolerance, norm: f64, d: usize) -> f64 {
    let eff = tol.value().max(1e-15);
    eff * norm / ((d.max(2) - 1) as f64).sqrt()
}

/// Smallest kept rank such that the discarded singular values satisfy
/// `sum s_i^2 <= delta^2`, optionally capped.
pub(crate) fn truncation_rank(s: &[f64], delta: f64, rmax: Option<usize>) -> usize {
    let mut r = s.len();
    let mut tail = 0.0;
    while r > 1 {
        let t = tail + s[r - 1] * s[r - 1];
        if t <= delta * delta {
            tail = t;
            r -= 1;
        } else {
            break;
        }
    }
    if let Some(m) = rmax {
        r = r.min(m.max(1));
    }
    r.max(1)
}

/// Effective rank shared by vectors and matrices.
pub(crate) fn erank_of(mode_sizes: &[usize], ranks: &[usize]) -> f64 {
    let d = mode_sizes.len();
    let params: f64 = (0..d).map(|k| (mode_sizes[k] * ranks[k] * ranks[k + 1]) as f64).sum();
    if d == 1 {
        return params / mode_sizes[0] as f64;
    }
    // I_1 R + sum_{k=2}^{d-1} I_k R^2 + I_d R = params
    let b = (mode_sizes[0] + mode_sizes[d - 1]) as f64;
    let a: f64 = mode_sizes[1..d - 1].iter().map(|&n| n as f64).sum();
    if a == 0.0 {
        params / b
    } else {
        (-b + (b * b + 4.0 * a * params).sqrt()) / (2.0 * a)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tolerance_bounds() {
        assert!(Tolerance::new(0.0).is_ok());
        assert!(Tolerance::new(0.5).is_ok());
        assert!(Tolerance::new(1.0).is_err());
        assert!(Tolerance::new(-1e-3).is_err());
        assert!(Tolerance::new(f64::NAN).is_err());
    }

    #[test]
    fn from_dense_rank_one() {
        let x = TtVector::from_dense(&[1.0, 1.0, 1.0, 1.0], &[2, 2], Tolerance::EXACT).unwrap();
        assert_eq!(x.ranks(), vec![1, 1, 1]);
        for v in x.to_dense().unwrap() {
            assert!((v - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn from_dense_rank_two() {
        let x = TtVector::from_dense(&[0.0, 1.0, 2.0, 3.0], &[2, 2], Tolerance::EXACT).unwrap();
        assert_eq!(x.ranks(), vec![1, 2, 1]);
        let back = x.to_dense().unwrap();
        for (i, v) in back.iter().enumerate() {
            assert!((v - i as f64).abs() < 1e-13, "entry {i} = {v}");
        }
    }

    #[test]
    fn zero_tensor_roundtrip() {
        let x = TtVector::from_dense(&[0.0; 8], &[2, 2, 2], Tolerance::EXACT).unwrap();
        assert_eq!(x.ranks(), vec![1, 1, 1, 1]);
        assert_eq!(x.norm(), 0.0);
        assert_eq!(x.to_dense().unwrap(), vec![0.0; 8]);
    }

    #[test]
    fn dense_cap_is_enforced() {
        let x = TtVector::zeros(&[2; 30]);
        match x.to_dense() {
            Err(TtError::DenseTooLarge { .. }) => {}
            other => panic!("expected DenseTooLarge, got {other:?}"),
        }
    }

    #[test]
    fn element_out_of_bounds() {
        let x = TtVector::zeros(&[2, 2]);
        assert!(x.element(&[0, 2]).is_err());
        assert!(x.element(&[0]).is_err());
    }

    #[test]
    fn erank_examples() {
        // rank-1: erank 1 regardless of d
        assert!((erank_of(&[2; 5], &[1; 6]) - 1.0).abs() < 1e-12);
        // modes (2,2,2), ranks (1,2,2,1): 16 parameters -> erank 2
        assert!((erank_of(&[2, 2, 2], &[1, 2, 2, 1]) - 2.0).abs() < 1e-12);
        // d = 2 degenerates to a linear equation
        assert!((erank_of(&[2, 2], &[1, 2, 1]) - 2.0).abs() < 1e-12);
    }
}
