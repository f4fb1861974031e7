//! Second-order finite-difference reference solvers, the scheme/FD inverse
//! identity check and the grid restriction operator.
//!
//! The dense path builds `A_x + A_y` with
//!
//! ```text
//! A_x = (I (x) J B^-T) Kx (I (x) B^-1 J) + I (x) Z
//! A_y = (J B^-T (x) I) Ky (B^-1 J (x) I) + Z (x) I
//! ```
//!
//! (`Z` pins the masked top/right node lines) and the right-hand side is the
//! corner-sampled source with those lines zeroed. Since the coefficient
//! matrices are diagonal, both operators are assembled blockwise from
//! `n x n` pieces.

use crate::error::SchemeError;
use crate::problem::{ProblemSpec, RightHandSide};
use crate::scheme::{self, SchemeConfig, SolutionBundle, SolveStats};
use faer::linalg::solvers::{Qr, SolveLstsq};
use faer::{Mat, MatRef};
use std::time::Instant;
use tt_core::{amen_solve, constructors, cross, Core3, GridSpec, TtMatrix, TtVector};

/// Hard cap for dense assembly: a `2^(2d) x 2^(2d)` matrix.
pub const DENSE_D_CAP: u32 = 7;

/// Dense finite-difference system.
pub struct DenseSystem {
    pub matrix: Mat<f64>,
    pub rhs: Vec<f64>,
    pub grid: GridSpec,
}

fn dense_kron(a: MatRef<'_, f64>, b: MatRef<'_, f64>) -> Mat<f64> {
    let (am, an) = (a.nrows(), a.ncols());
    let (bm, bn) = (b.nrows(), b.ncols());
    Mat::from_fn(am * bm, an * bn, |i, j| a[(i / bm, j / bn)] * b[(i % bm, j % bn)])
}

fn dense_volterra(n: usize, h: f64) -> Mat<f64> {
    Mat::from_fn(n, n, |i, j| if i >= j { h } else { 0.0 })
}

fn dense_b_inv(n: usize, h: f64) -> Mat<f64> {
    Mat::from_fn(n, n, |i, j| {
        if i == j {
            1.0 / h
        } else if i == j + 1 {
            -1.0 / h
        } else {
            0.0
        }
    })
}

fn dense_j(n: usize) -> Mat<f64> {
    Mat::from_fn(n, n, |i, j| if i == j && i < n - 1 { 1.0 } else { 0.0 })
}

fn dense_z(n: usize) -> Mat<f64> {
    Mat::from_fn(n, n, |i, j| if i == n - 1 && j == n - 1 { 1.0 } else { 0.0 })
}

/// Dense source vector sampled at corner nodes (point sources become
/// `weight / h^2` at the nearest node).
fn dense_rhs(p: &ProblemSpec, grid: &GridSpec) -> Vec<f64> {
    let n = grid.n() as usize;
    let h = grid.h();
    let mut f = vec![0.0; n * n];
    match &p.rhs {
        RightHandSide::Function(func) => {
            for j in 0..n {
                for i in 0..n {
                    f[i + n * j] = func(grid.corner(i as u64), grid.corner(j as u64));
                }
            }
        }
        RightHandSide::PointSources(sources) => {
            for s in sources {
                let i = scheme::nearest_corner_index(s.x, grid) as usize;
                let j = scheme::nearest_corner_index(s.y, grid) as usize;
                f[i + n * j] += s.weight / (h * h);
            }
        }
    }
    f
}

/// Assembles the dense finite-difference system; `d` is capped at
/// [`DENSE_D_CAP`].
pub fn assemble_dense(p: &ProblemSpec, d: u32) -> Result<DenseSystem, SchemeError> {
    if d > DENSE_D_CAP {
        return Err(SchemeError::DenseGridTooLarge { d, cap: DENSE_D_CAP });
    }
    let grid = GridSpec::new(d)?;
    let n = grid.n() as usize;
    let h = grid.h();
    let b_inv = dense_b_inv(n, h);
    let jm = dense_j(n);
    let z = dense_z(n);
    let left = &jm * b_inv.transpose(); // J B^-T
    let right = &b_inv * &jm; // B^-1 J

    let total = n * n;
    let mut a = Mat::<f64>::zeros(total, total);
    // x part: block alpha (fixed y index) is J B^-T Kx_alpha B^-1 J + Z
    for alpha in 0..n {
        let kx_alpha = Mat::from_fn(n, n, |i, j| {
            if i == j {
                (p.kx)(grid.midpoint(i as u64), grid.corner(alpha as u64))
            } else {
                0.0
            }
        });
        let block = &left * (&kx_alpha * &right) + &z;
        for jj in 0..n {
            for ii in 0..n {
                a[(ii + n * alpha, jj + n * alpha)] += block[(ii, jj)];
            }
        }
    }
    // y part: for each x index alpha the block couples y indices
    for alpha in 0..n {
        let ky_alpha = Mat::from_fn(n, n, |i, j| {
            if i == j {
                (p.ky)(grid.corner(alpha as u64), grid.midpoint(i as u64))
            } else {
                0.0
            }
        });
        let block = &left * (&ky_alpha * &right) + &z;
        for jj in 0..n {
            for ii in 0..n {
                a[(alpha + n * ii, alpha + n * jj)] += block[(ii, jj)];
            }
        }
    }

    let mut rhs = dense_rhs(p, &grid);
    for j in 0..n {
        for i in 0..n {
            if i == n - 1 || j == n - 1 {
                rhs[i + n * j] = 0.0;
            }
        }
    }
    Ok(DenseSystem { matrix: a, rhs, grid })
}

/// Least-squares solve of the dense system. The masked matrix is nonsingular
/// on the retained subspace; a large residual therefore signals numerical
/// singularity and is an error.
pub fn solve_dense(sys: &DenseSystem) -> Result<Vec<f64>, SchemeError> {
    let total = sys.rhs.len();
    let rhs = MatRef::from_column_major_slice(&sys.rhs, total, 1);
    let qr = Qr::new(sys.matrix.as_ref());
    let sol = qr.solve_lstsq(rhs);
    let mut residual = 0.0f64;
    let mut rhs_norm = 0.0f64;
    for i in 0..total {
        let mut acc = 0.0;
        for j in 0..total {
            acc += sys.matrix[(i, j)] * sol[(j, 0)];
        }
        let r = acc - sys.rhs[i];
        residual += r * r;
        rhs_norm += sys.rhs[i] * sys.rhs[i];
    }
    let rel = (residual.sqrt()) / rhs_norm.sqrt().max(1e-300);
    if !rel.is_finite() || rel > 1e-8 {
        return Err(SchemeError::SingularDense { residual: rel });
    }
    Ok((0..total).map(|i| sol[(i, 0)]).collect())
}

/// QTT version of the finite-difference solver: assembles `A_x + A_y` from
/// the structured blocks and the diagonal coefficient vectors, masks the
/// right-hand side and calls the alternating solver. Returns the solution
/// with derivatives recovered through first differences.
pub fn solve_qtt(p: &ProblemSpec, d: u32, cfg: &SchemeConfig) -> Result<SolutionBundle, SchemeError> {
    cfg.validate()?;
    let t_start = Instant::now();
    let grid = GridSpec::new(d)?;
    let h = grid.h();
    let e = constructors::ones(d)?;
    let ramp = constructors::xfun(d)?;
    let centers = TtVector::axpby(1.0, &ramp, 0.5, &e)?.scale(h).round(cfg.tau_round);
    let corners = TtVector::axpby(1.0, &ramp, 1.0, &e)?.scale(h).round(cfg.tau_round);
    let x_c = TtVector::kron(&e, &centers);
    let x_r = TtVector::kron(&e, &corners);
    let y_c = TtVector::kron(&centers, &e);
    let y_r = TtVector::kron(&corners, &e);
    let cross_cfg = cfg.cross_config();

    let kx_fn = p.kx.clone();
    let (kx, rep) = cross::elementwise(move |v| kx_fn(v[0], v[1]), &[&x_c, &y_r], &cross_cfg)?;
    if !rep.converged {
        return Err(SchemeError::CrossNotConverged { stage: "kx", error: rep.validation_error });
    }
    let ky_fn = p.ky.clone();
    let (ky, rep) = cross::elementwise(move |v| ky_fn(v[0], v[1]), &[&x_r, &y_c], &cross_cfg)?;
    if !rep.converged {
        return Err(SchemeError::CrossNotConverged { stage: "ky", error: rep.validation_error });
    }

    // f at corners, masked on the top/right node lines
    let f = match &p.rhs {
        RightHandSide::Function(func) => {
            let func = func.clone();
            let (f, rep) = cross::elementwise(move |v| func(v[0], v[1]), &[&x_r, &y_r], &cross_cfg)?;
            if !rep.converged {
                return Err(SchemeError::CrossNotConverged { stage: "f", error: rep.validation_error });
            }
            f
        }
        RightHandSide::PointSources(_) => scheme::discretize(p, d, cfg)?.f,
    };

    let t_asm = Instant::now();
    let blocks = constructors::fd_blocks(d)?;
    let i_d = constructors::eye(d)?;
    let mut capped = false;
    let mut round_m = |m: &TtMatrix| -> TtMatrix {
        let (r, c) = m.round_capped(cfg.tau_round, Some(cfg.rmax));
        capped |= c;
        r
    };

    // x operator: (I (x) J B^-T) Kx (I (x) B^-1 J) + I (x) Z
    let jbt = round_m(&blocks.j_mask.matmul(&blocks.b_inv.transpose())?);
    let bj = round_m(&blocks.b_inv.matmul(&blocks.j_mask)?);
    let kx_m = TtMatrix::diag(&kx);
    let ky_m = TtMatrix::diag(&ky);
    let left_x = TtMatrix::kron(&i_d, &jbt);
    let right_x = TtMatrix::kron(&i_d, &bj);
    let ax = {
        let t = round_m(&kx_m.matmul(&right_x)?);
        let t = round_m(&left_x.matmul(&t)?);
        round_m(&t.add(&TtMatrix::kron(&i_d, &blocks.z_last))?)
    };
    let left_y = TtMatrix::kron(&jbt, &i_d);
    let right_y = TtMatrix::kron(&bj, &i_d);
    let ay = {
        let t = round_m(&ky_m.matmul(&right_y)?);
        let t = round_m(&left_y.matmul(&t)?);
        round_m(&t.add(&TtMatrix::kron(&blocks.z_last, &i_d))?)
    };
    let a = round_m(&ax.add(&ay)?);

    let mask_x = TtMatrix::kron(&i_d, &blocks.j_mask);
    let mask_y = TtMatrix::kron(&blocks.j_mask, &i_d);
    let rhs = {
        let t = mask_x.matvec(&f)?.round(cfg.tau_round);
        mask_y.matvec(&t)?.round(cfg.tau_round)
    };
    let time_assemble_s = t_asm.elapsed().as_secs_f64();

    let t_solve = Instant::now();
    let mut amen_cfg = cfg.amen.clone();
    amen_cfg.rmax = amen_cfg.rmax.min(cfg.rmax);
    let (u, report) = amen_solve(&a, &rhs, &amen_cfg, None)?;
    // derivatives through masked first differences
    let ux = TtMatrix::kron(&i_d, &blocks.b_inv)
        .matvec(&mask_x.matvec(&u)?.round(cfg.tau_round))?
        .round(cfg.tau_round);
    let uy = TtMatrix::kron(&blocks.b_inv, &i_d)
        .matvec(&mask_y.matvec(&u)?.round(cfg.tau_round))?
        .round(cfg.tau_round);
    let time_solve_s = t_solve.elapsed().as_secs_f64();

    let stats = SolveStats {
        erank_kx_inv: kx.erank(),
        erank_ky_inv: ky.erank(),
        erank_a: a.erank(),
        erank_u: u.erank(),
        time_assemble_s,
        time_solve_s,
        time_total_s: t_start.elapsed().as_secs_f64(),
        ..SolveStats::default()
    };
    let _ = capped;
    Ok(SolutionBundle { u, ux, uy, mu: None, report, stats })
}

/// Dense verification of the inverse identity between the finite-difference
/// operator and the scheme operator: returns the maximum entrywise deviation
/// of `A_x H_x` from `I (x) J` and of `A_y H_y` from `J (x) I`.
pub fn scheme_identity_error(p: &ProblemSpec, d: u32) -> Result<(f64, f64), SchemeError> {
    if d > 5 {
        return Err(SchemeError::DenseGridTooLarge { d, cap: 5 });
    }
    let grid = GridSpec::new(d)?;
    let n = grid.n() as usize;
    let h = grid.h();
    let total = n * n;

    let b = dense_volterra(n, h);
    let b_inv = dense_b_inv(n, h);
    let jm = dense_j(n);
    let z = dense_z(n);
    let eye = Mat::<f64>::identity(n, n);
    let ones = Mat::<f64>::from_fn(n, n, |_, _| 1.0);

    // sampled coefficients
    let kx = |i: usize, j: usize| (p.kx)(grid.midpoint(i as u64), grid.corner(j as u64));
    let ky = |i: usize, j: usize| (p.ky)(grid.corner(i as u64), grid.midpoint(j as u64));

    let kx_diag = Mat::from_fn(total, total, |r, c| if r == c { kx(r % n, r / n) } else { 0.0 });
    let ky_diag = Mat::from_fn(total, total, |r, c| if r == c { ky(r % n, r / n) } else { 0.0 });
    let kx_inv = Mat::from_fn(total, total, |r, c| if r == c { 1.0 / kx(r % n, r / n) } else { 0.0 });
    let ky_inv = Mat::from_fn(total, total, |r, c| if r == c { 1.0 / ky(r % n, r / n) } else { 0.0 });

    // A_x and A_y
    let jbt = &jm * b_inv.transpose();
    let bj = &b_inv * &jm;
    let ax = dense_kron(eye.as_ref(), jbt.as_ref()) * &kx_diag * dense_kron(eye.as_ref(), bj.as_ref())
        + dense_kron(eye.as_ref(), z.as_ref());
    let ay = dense_kron(jbt.as_ref(), eye.as_ref()) * &ky_diag * dense_kron(bj.as_ref(), eye.as_ref())
        + dense_kron(z.as_ref(), eye.as_ref());

    // H_x and H_y from the explicit projector formulas
    let qx = {
        let mut q = vec![0.0; n];
        for (jy, slot) in q.iter_mut().enumerate() {
            let s: f64 = (0..n).map(|i| 1.0 / kx(i, jy)).sum();
            *slot = 1.0 / s;
        }
        q
    };
    let qy = {
        let mut q = vec![0.0; n];
        for (ix, slot) in q.iter_mut().enumerate() {
            let s: f64 = (0..n).map(|j| 1.0 / ky(ix, j)).sum();
            *slot = 1.0 / s;
        }
        q
    };
    let qx_diag = Mat::from_fn(n, n, |i, j| if i == j { qx[i] } else { 0.0 });
    let qy_diag = Mat::from_fn(n, n, |i, j| if i == j { qy[i] } else { 0.0 });
    let wx = dense_kron(qx_diag.as_ref(), ones.as_ref());
    let wy = dense_kron(ones.as_ref(), qy_diag.as_ref());
    let bx = dense_kron(eye.as_ref(), b.as_ref());
    let by = dense_kron(b.as_ref(), eye.as_ref());
    let i2 = Mat::<f64>::identity(total, total);

    let hx = &bx * &kx_inv * (&i2 - &wx * &kx_inv) * bx.transpose();
    let hy = &by * &ky_inv * (&i2 - &wy * &ky_inv) * by.transpose();

    let prod_x = &ax * &hx;
    let prod_y = &ay * &hy;
    let want_x = dense_kron(eye.as_ref(), jm.as_ref());
    let want_y = dense_kron(jm.as_ref(), eye.as_ref());
    let mut err_x = 0.0f64;
    let mut err_y = 0.0f64;
    for i in 0..total {
        for j in 0..total {
            err_x = err_x.max((prod_x[(i, j)] - want_x[(i, j)]).abs());
            err_y = err_y.max((prod_y[(i, j)] - want_y[(i, j)]).abs());
        }
    }
    Ok((err_x, err_y))
}

/// Restricts a field on the `2^(2 d_f)` grid to the coarser `2^(2 d_c)` grid
/// by sampling coincident nodes: coarse index `i` maps to fine index
/// `(i + 1) 2^(d_f - d_c) - 1` per axis, i.e. the lowest `d_f - d_c` bit
/// cores of each axis are sliced at 1.
pub fn restrict(u: &TtVector, d_c: u32) -> Result<TtVector, SchemeError> {
    let cores = u.cores();
    if cores.len() % 2 != 0 || cores.iter().any(|c| c.mode() != 2) {
        return Err(SchemeError::InvalidConfig(
            "restriction expects a quantized 2-D field with an even number of binary modes".into(),
        ));
    }
    let d_f = (cores.len() / 2) as u32;
    if d_c > d_f {
        return Err(SchemeError::InvalidConfig(format!(
            "cannot restrict factor {d_f} to finer factor {d_c}"
        )));
    }
    if d_c == d_f {
        return Ok(u.clone());
    }
    let delta = (d_f - d_c) as usize;
    let d_f = d_f as usize;

    let slice_at_one = |core: &Core3| Mat::from_fn(core.r_left(), core.r_right(), |a, b| core.get(a, 1, b));

    let fold_front = |start: usize| -> Mat<f64> {
        let mut m = slice_at_one(&cores[start]);
        for core in &cores[start + 1..start + delta] {
            let s = slice_at_one(core);
            m = &m * &s;
        }
        m
    };

    let mut out: Vec<Core3> = Vec::with_capacity(2 * (d_f - delta));
    // x side: contract cores 0..delta at bit 1 into core delta
    let mx = fold_front(0);
    let folded_x = &mx * cores[delta].right_mat();
    out.push(Core3::from_right_mat(folded_x.as_ref(), mx.nrows(), 2, cores[delta].r_right()));
    out.extend(cores[delta + 1..d_f].iter().cloned());
    // y side: contract cores d_f..d_f+delta at bit 1 into core d_f+delta
    let my = fold_front(d_f);
    let folded_y = &my * cores[d_f + delta].right_mat();
    out.push(Core3::from_right_mat(folded_y.as_ref(), my.nrows(), 2, cores[d_f + delta].r_right()));
    out.extend(cores[d_f + delta + 1..].iter().cloned());

    Ok(TtVector::from_cores(out)?)
}
