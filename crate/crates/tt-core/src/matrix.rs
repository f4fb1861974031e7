//! Tensor-train matrices (operators) with order-4 cores.
//!
//! A matrix with row sizes `I_1..I_d` and column sizes `J_1..J_d` is stored as
//! cores of shape `R_{k-1} x I_k x J_k x R_k`. Row and column multi-indices
//! follow the same little-endian convention as vectors, so the dense
//! equivalent satisfies
//!
//! ```text
//! A[i_1..i_d; j_1..j_d] = G_1(i_1, j_1) G_2(i_2, j_2) ... G_d(i_d, j_d)
//! ```

use crate::error::TtError;
use crate::tensor::{erank_of, Core3, Tolerance, TtVector, DENSE_CAP};
use faer::Mat;

/// One order-4 core, stored with the left rank fastest:
/// `data[a + r_left*(i + rows*(j + cols*b))]`.
///
/// Fusing `(i, j)` into a single mode of size `rows*cols` reinterprets the
/// same buffer as an order-3 core, which is how rounding and norms are
/// implemented.
#[derive(Clone, Debug, PartialEq)]
pub struct Core4 {
    r_left: usize,
    rows: usize,
    cols: usize,
    r_right: usize,
    data: Vec<f64>,
}

impl Core4 {
    pub fn zeros(r_left: usize, rows: usize, cols: usize, r_right: usize) -> Self {
        Core4 { r_left, rows, cols, r_right, data: vec![0.0; r_left * rows * cols * r_right] }
    }

    pub fn from_fn(
        r_left: usize,
        rows: usize,
        cols: usize,
        r_right: usize,
        mut f: impl FnMut(usize, usize, usize, usize) -> f64,
    ) -> Self {
        let mut core = Core4::zeros(r_left, rows, cols, r_right);
        for b in 0..r_right {
            for j in 0..cols {
                for i in 0..rows {
                    for a in 0..r_left {
                        core.data[a + r_left * (i + rows * (j + cols * b))] = f(a, i, j, b);
                    }
                }
            }
        }
        core
    }

    #[inline]
    pub fn r_left(&self) -> usize {
        self.r_left
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn r_right(&self) -> usize {
        self.r_right
    }

    #[inline]
    pub fn get(&self, a: usize, i: usize, j: usize, b: usize) -> f64 {
        self.data[a + self.r_left * (i + self.rows * (j + self.cols * b))]
    }

    #[inline]
    pub fn set(&mut self, a: usize, i: usize, j: usize, b: usize, v: f64) {
        self.data[a + self.r_left * (i + self.rows * (j + self.cols * b))] = v;
    }

    fn fuse(self) -> Core3 {
        Core3::from_vec(self.r_left, self.rows * self.cols, self.r_right, self.data)
    }

    fn unfuse(core: &Core3, rows: usize, cols: usize) -> Self {
        Core4 {
            r_left: core.r_left(),
            rows,
            cols,
            r_right: core.r_right(),
            data: core.data().to_vec(),
        }
    }
}

/// An operator in train format.
#[derive(Clone, Debug, PartialEq)]
pub struct TtMatrix {
    cores: Vec<Core4>,
}

impl TtMatrix {
    pub fn from_cores(cores: Vec<Core4>) -> Result<Self, TtError> {
        if cores.is_empty() {
            return Err(TtError::InvalidCores("empty core chain".into()));
        }
        if cores[0].r_left != 1 || cores[cores.len() - 1].r_right != 1 {
            return Err(TtError::InvalidCores("boundary ranks must be 1".into()));
        }
        for k in 1..cores.len() {
            if cores[k - 1].r_right != cores[k].r_left {
                return Err(TtError::InvalidCores(format!("rank chain broken at bond {k}")));
            }
        }
        Ok(TtMatrix { cores })
    }

    pub fn cores(&self) -> &[Core4] {
        &self.cores
    }

    pub fn num_modes(&self) -> usize {
        self.cores.len()
    }

    pub fn row_sizes(&self) -> Vec<usize> {
        self.cores.iter().map(|c| c.rows).collect()
    }

    pub fn col_sizes(&self) -> Vec<usize> {
        self.cores.iter().map(|c| c.cols).collect()
    }

    pub fn ranks(&self) -> Vec<usize> {
        let mut r = Vec::with_capacity(self.cores.len() + 1);
        r.push(self.cores[0].r_left);
        r.extend(self.cores.iter().map(|c| c.r_right));
        r
    }

    pub fn max_rank(&self) -> usize {
        self.ranks().into_iter().max().unwrap_or(1)
    }

    pub fn nrows(&self) -> u128 {
        self.cores.iter().map(|c| c.rows as u128).product()
    }

    pub fn ncols(&self) -> u128 {
        self.cores.iter().map(|c| c.cols as u128).product()
    }

    /// Matrix-vector product in train format. Bond ranks multiply; the caller
    /// is responsible for subsequent rounding.
    pub fn matvec(&self, x: &TtVector) -> Result<TtVector, TtError> {
        if self.col_sizes() != x.mode_sizes() {
            return Err(TtError::ShapeMismatch { left: self.col_sizes(), right: x.mode_sizes() });
        }
        let mut cores = Vec::with_capacity(self.cores.len());
        for (ca, cx) in self.cores.iter().zip(x.cores()) {
            let (ra_l, ra_r) = (ca.r_left, ca.r_right);
            let (rx_l, rx_r) = (cx.r_left(), cx.r_right());
            let mut out = Core3::zeros(ra_l * rx_l, ca.rows, ra_r * rx_r);
            for q in 0..rx_r {
                for b in 0..ra_r {
                    for i in 0..ca.rows {
                        for p in 0..rx_l {
                            for a in 0..ra_l {
                                let mut acc = 0.0;
                                for j in 0..ca.cols {
                                    acc += ca.get(a, i, j, b) * cx.get(p, j, q);
                                }
                                out.set(a + ra_l * p, i, b + ra_r * q, acc);
                            }
                        }
                    }
                }
            }
            cores.push(out);
        }
        TtVector::from_cores(cores)
    }

    /// Matrix-matrix product; bond ranks multiply.
    pub fn matmul(&self, other: &TtMatrix) -> Result<TtMatrix, TtError> {
        if self.col_sizes() != other.row_sizes() {
            return Err(TtError::ShapeMismatch { left: self.col_sizes(), right: other.row_sizes() });
        }
        let mut cores = Vec::with_capacity(self.cores.len());
        for (ca, cb) in self.cores.iter().zip(&other.cores) {
            let (ra_l, ra_r) = (ca.r_left, ca.r_right);
            let (rb_l, rb_r) = (cb.r_left, cb.r_right);
            let mut out = Core4::zeros(ra_l * rb_l, ca.rows, cb.cols, ra_r * rb_r);
            for q in 0..rb_r {
                for b in 0..ra_r {
                    for j in 0..cb.cols {
                        for i in 0..ca.rows {
                            for p in 0..rb_l {
                                for a in 0..ra_l {
                                    let mut acc = 0.0;
                                    for m in 0..ca.cols {
                                        acc += ca.get(a, i, m, b) * cb.get(p, m, j, q);
                                    }
                                    out.set(a + ra_l * p, i, j, b + ra_r * q, acc);
                                }
                            }
                        }
                    }
                }
            }
            cores.push(out);
        }
        TtMatrix::from_cores(cores)
    }

    /// Transpose: swaps row and column roles per core; ranks are preserved.
    pub fn transpose(&self) -> TtMatrix {
        let cores = self
            .cores
            .iter()
            .map(|c| Core4::from_fn(c.r_left, c.cols, c.rows, c.r_right, |a, j, i, b| c.get(a, i, j, b)))
            .collect();
        TtMatrix { cores }
    }

    /// `alpha * a + beta * b` by block-diagonal concatenation; ranks add.
    pub fn axpby(alpha: f64, a: &TtMatrix, beta: f64, b: &TtMatrix) -> Result<TtMatrix, TtError> {
        if a.row_sizes() != b.row_sizes() || a.col_sizes() != b.col_sizes() {
            return Err(TtError::ShapeMismatch { left: a.row_sizes(), right: b.row_sizes() });
        }
        let d = a.cores.len();
        if d == 1 {
            let ca = &a.cores[0];
            let cb = &b.cores[0];
            let core = Core4::from_fn(1, ca.rows, ca.cols, 1, |_, i, j, _| {
                alpha * ca.get(0, i, j, 0) + beta * cb.get(0, i, j, 0)
            });
            return Ok(TtMatrix { cores: vec![core] });
        }
        let mut cores = Vec::with_capacity(d);
        for k in 0..d {
            let ca = &a.cores[k];
            let cb = &b.cores[k];
            let core = if k == 0 {
                Core4::from_fn(1, ca.rows, ca.cols, ca.r_right + cb.r_right, |_, i, j, rb| {
                    if rb < ca.r_right {
                        alpha * ca.get(0, i, j, rb)
                    } else {
                        beta * cb.get(0, i, j, rb - ca.r_right)
                    }
                })
            } else if k == d - 1 {
                Core4::from_fn(ca.r_left + cb.r_left, ca.rows, ca.cols, 1, |ra, i, j, _| {
                    if ra < ca.r_left {
                        ca.get(ra, i, j, 0)
                    } else {
                        cb.get(ra - ca.r_left, i, j, 0)
                    }
                })
            } else {
                Core4::from_fn(
                    ca.r_left + cb.r_left,
                    ca.rows,
                    ca.cols,
                    ca.r_right + cb.r_right,
                    |ra, i, j, rb| {
                        if ra < ca.r_left && rb < ca.r_right {
                            ca.get(ra, i, j, rb)
                        } else if ra >= ca.r_left && rb >= ca.r_right {
                            cb.get(ra - ca.r_left, i, j, rb - ca.r_right)
                        } else {
                            0.0
                        }
                    },
                )
            };
            cores.push(core);
        }
        Ok(TtMatrix { cores })
    }

    pub fn add(&self, other: &TtMatrix) -> Result<TtMatrix, TtError> {
        Self::axpby(1.0, self, 1.0, other)
    }

    pub fn sub(&self, other: &TtMatrix) -> Result<TtMatrix, TtError> {
        Self::axpby(1.0, self, -1.0, other)
    }

    pub fn scale(&self, alpha: f64) -> TtMatrix {
        let mut cores = self.cores.clone();
        for v in &mut cores[0].data {
            *v *= alpha;
        }
        TtMatrix { cores }
    }

    /// Diagonal matrix with diagonal `v`; ranks equal the vector's ranks.
    pub fn diag(v: &TtVector) -> TtMatrix {
        let cores = v
            .cores()
            .iter()
            .map(|c| {
                Core4::from_fn(c.r_left(), c.mode(), c.mode(), c.r_right(), |a, i, j, b| {
                    if i == j {
                        c.get(a, i, b)
                    } else {
                        0.0
                    }
                })
            })
            .collect();
        TtMatrix { cores }
    }

    /// Kronecker product `a (x) b` with `b` the fast factor (`b`'s cores
    /// first), matching the vector convention.
    pub fn kron(a: &TtMatrix, b: &TtMatrix) -> TtMatrix {
        let mut cores = b.cores.clone();
        cores.extend(a.cores.iter().cloned());
        TtMatrix { cores }
    }

    /// Entry at (row multi-index, column multi-index).
    pub fn element(&self, row_idx: &[usize], col_idx: &[usize]) -> Result<f64, TtError> {
        let rows = self.row_sizes();
        let cols = self.col_sizes();
        let bad_row = row_idx.len() != rows.len() || row_idx.iter().zip(&rows).any(|(&i, &n)| i >= n);
        let bad_col = col_idx.len() != cols.len() || col_idx.iter().zip(&cols).any(|(&j, &n)| j >= n);
        if bad_row || bad_col {
            return Err(TtError::IndexOutOfBounds {
                index: row_idx.iter().chain(col_idx).copied().collect(),
                sizes: rows.iter().chain(&cols).copied().collect(),
            });
        }
        let mut v = vec![1.0f64];
        for (core, (&i, &j)) in self.cores.iter().zip(row_idx.iter().zip(col_idx)) {
            let mut next = vec![0.0f64; core.r_right];
            for (b, slot) in next.iter_mut().enumerate() {
                let mut acc = 0.0;
                for (a, &va) in v.iter().enumerate() {
                    acc += va * core.get(a, i, j, b);
                }
                *slot = acc;
            }
            v = next;
        }
        Ok(v[0])
    }

    /// Frobenius norm (via the fused-mode vector view).
    pub fn norm(&self) -> f64 {
        self.fused_vector().norm()
    }

    /// Rounding through the fused-mode vector view.
    pub fn round(&self, tol: Tolerance) -> TtMatrix {
        self.round_capped(tol, None).0
    }

    pub fn round_capped(&self, tol: Tolerance, rmax: Option<usize>) -> (TtMatrix, bool) {
        let rows = self.row_sizes();
        let cols = self.col_sizes();
        let (rounded, capped) = self.fused_vector().round_capped(tol, rmax);
        let cores = rounded
            .cores()
            .iter()
            .zip(rows.iter().zip(&cols))
            .map(|(c, (&ri, &ci))| Core4::unfuse(c, ri, ci))
            .collect();
        (TtMatrix { cores }, capped)
    }

    /// Reinterprets the operator as a vector over fused `(i, j)` modes.
    pub fn fused_vector(&self) -> TtVector {
        let cores = self.cores.iter().cloned().map(Core4::fuse).collect();
        TtVector::from_cores(cores).expect("fused chain is valid by construction")
    }

    pub fn erank(&self) -> f64 {
        let fused: Vec<usize> = self.cores.iter().map(|c| c.rows * c.cols).collect();
        erank_of(&fused, &self.ranks())
    }

    /// Dense realization (row index i, column index j, little-endian bits).
    pub fn to_dense(&self) -> Result<Mat<f64>, TtError> {
        self.to_dense_with_cap(DENSE_CAP)
    }

    pub fn to_dense_with_cap(&self, cap: usize) -> Result<Mat<f64>, TtError> {
        let total = self.nrows().saturating_mul(self.ncols());
        if total > cap as u128 {
            return Err(TtError::DenseTooLarge { size: total, cap });
        }
        let fused = self.fused_vector().to_dense_with_cap(cap)?;
        let nrows = self.nrows() as usize;
        let ncols = self.ncols() as usize;
        let rows = self.row_sizes();
        let cols = self.col_sizes();
        let mut out = Mat::<f64>::zeros(nrows, ncols);
        for (lin, &v) in fused.iter().enumerate() {
            let mut rest = lin;
            let mut i = 0usize;
            let mut j = 0usize;
            let mut istride = 1usize;
            let mut jstride = 1usize;
            for k in 0..self.cores.len() {
                let m = rest % (rows[k] * cols[k]);
                rest /= rows[k] * cols[k];
                i += (m % rows[k]) * istride;
                j += (m / rows[k]) * jstride;
                istride *= rows[k];
                jstride *= cols[k];
            }
            out[(i, j)] = v;
        }
        Ok(out)
    }

    /// Applies the operator to a dense vector (little-endian order), used by
    /// dense oracles in tests.
    pub fn apply_dense(&self, x: &[f64]) -> Result<Vec<f64>, TtError> {
        let a = self.to_dense()?;
        if a.ncols() != x.len() {
            return Err(TtError::ShapeMismatch { left: vec![a.ncols()], right: vec![x.len()] });
        }
        let xm = faer::MatRef::from_column_major_slice(x, x.len(), 1);
        let y = &a * xm;
        Ok((0..y.nrows()).map(|i| y[(i, 0)]).collect())
    }
}
