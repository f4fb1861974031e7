//! Thin wrappers around the dense linear-algebra backend.

use faer::linalg::solvers::{PartialPivLu, Qr, Solve, Svd};
use faer::{Mat, MatRef};

/// Thin SVD `a = u * diag(s) * v^T`.
pub(crate) fn thin_svd(a: MatRef<'_, f64>) -> (Mat<f64>, Vec<f64>, Mat<f64>) {
    let svd = Svd::new_thin(a).expect("svd did not converge");
    let s = svd.S().column_vector().iter().copied().collect();
    (svd.U().to_owned(), s, svd.V().to_owned())
}

/// Thin QR `a = q * r` with orthonormal columns in `q`.
pub(crate) fn thin_qr(a: MatRef<'_, f64>) -> (Mat<f64>, Mat<f64>) {
    let qr = Qr::new(a);
    (qr.compute_thin_Q(), qr.thin_R().to_owned())
}

/// Only the triangular factor of a QR factorization (norm computations).
pub(crate) fn qr_r_only(a: MatRef<'_, f64>) -> Mat<f64> {
    Qr::new(a).thin_R().to_owned()
}

/// `b * a^{-1}` via LU with partial pivoting.
pub(crate) fn rsolve_lu(a: MatRef<'_, f64>, b: MatRef<'_, f64>) -> Mat<f64> {
    PartialPivLu::new(a).rsolve(b)
}

/// `a^{-1} * b` via LU with partial pivoting.
pub(crate) fn solve_lu(a: MatRef<'_, f64>, b: MatRef<'_, f64>) -> Mat<f64> {
    PartialPivLu::new(a).solve(b)
}

/// Least-squares / pseudo-inverse solve with a relative singular value cutoff.
pub(crate) fn solve_pinv(a: MatRef<'_, f64>, b: MatRef<'_, f64>, rel_cutoff: f64) -> Mat<f64> {
    let (u, s, v) = thin_svd(a);
    let smax = s.first().copied().unwrap_or(0.0);
    let cut = rel_cutoff * smax;
    // x = v * diag(1/s) * u^T * b, dropping directions below the cutoff
    let ut_b = u.transpose() * b;
    let k = s.len();
    let mut scaled = Mat::<f64>::zeros(k, b.ncols());
    for j in 0..b.ncols() {
        for i in 0..k {
            if s[i] > cut && s[i] > 0.0 {
                scaled[(i, j)] = ut_b[(i, j)] / s[i];
            }
        }
    }
    &v * &scaled
}

pub(crate) fn frobenius(a: MatRef<'_, f64>) -> f64 {
    a.norm_l2()
}
