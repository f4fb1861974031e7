//! Oracle tests for the finite-sum scheme: hand-computed small cases, dense
//! reconstructions of the operator formulas, and equivalence with the
//! finite-difference reference path.

use fs_qtt::{fd, problem::RightHandSide, scheme, ProblemSpec, SchemeConfig};
use std::sync::Arc;
use tt_core::{constructors, GridSpec, TtMatrix, TtVector};

fn unit_problem() -> ProblemSpec {
    ProblemSpec::with_scalar_coefficient(
        "unit",
        Arc::new(|_, _| 1.0),
        RightHandSide::Function(Arc::new(|_, _| 1.0)),
    )
}

fn dense_err(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    if den > 0.0 {
        num / den
    } else {
        num
    }
}

fn bits(value: u64, d: u32) -> Vec<usize> {
    (0..d).map(|k| ((value >> k) & 1) as usize).collect()
}

#[test]
fn discretize_constant_rhs_is_rank_one() {
    let cfg = SchemeConfig::profile_a();
    let dp = scheme::discretize(&ProblemSpec::constant_rhs(), 4, &cfg).unwrap();
    assert!(dp.f.max_rank() <= 1);
    assert!((dp.f.element(&[0; 8]).unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn discretize_samples_staggered_points() {
    // kx is sampled at top-edge midpoints ((i+1/2)h, (j+1)h); at d=1 the
    // first entry is 1/k(0.25, 0.5).
    let cfg = SchemeConfig::profile_a();
    let p = ProblemSpec::analytic();
    let dp = scheme::discretize(&p, 1, &cfg).unwrap();
    let want = 1.0 / (1.0 + 0.25 * 0.25);
    let got = dp.kx_inv.element(&[0, 0]).unwrap();
    assert!((got - want).abs() < 1e-10, "{got} vs {want}");
}

#[test]
fn discretize_point_sources() {
    let cfg = SchemeConfig::profile_b();
    let d = 3u32;
    let grid = GridSpec::new(d).unwrap();
    let dp = scheme::discretize(&ProblemSpec::point_sources(), d, &cfg).unwrap();
    assert!(dp.f.max_rank() <= 4);
    let dense = dp.f.to_dense().unwrap();
    let h = grid.h();
    let nonzero: Vec<(usize, f64)> =
        dense.iter().enumerate().filter(|(_, v)| v.abs() > 0.0).map(|(i, &v)| (i, v)).collect();
    assert_eq!(nonzero.len(), 4);
    for (_, v) in &nonzero {
        assert!((v - 1.0 / (h * h)).abs() < 1e-10);
    }
    // sources at 0.2 / 0.8 land on nodes 0.25 (i=1) and 0.75 (i=5)
    let n = grid.n() as usize;
    let expected: Vec<usize> = [(1, 1), (5, 1), (1, 5), (5, 5)].iter().map(|&(i, j)| i + n * j).collect();
    let got: Vec<usize> = nonzero.iter().map(|(i, _)| *i).collect();
    assert_eq!(got, expected);
}

#[test]
fn build_w_unit_coefficient() {
    let cfg = SchemeConfig::profile_a();
    for d in 1..=5u32 {
        let grid = GridSpec::new(d).unwrap();
        let dp = scheme::discretize(&unit_problem(), d, &cfg).unwrap();
        let (qx, _) = scheme::build_w(scheme::Axis::X, &dp.kx_inv, d, &cfg).unwrap();
        let dense = qx.to_dense().unwrap();
        for v in dense {
            assert!((v - grid.h()).abs() < 1e-12, "d={d}: q entry {v} vs {}", grid.h());
        }
    }
}

#[test]
fn build_w_dense_form_d1() {
    let cfg = SchemeConfig::profile_a();
    let dp = scheme::discretize(&unit_problem(), 1, &cfg).unwrap();
    let (_, wx) = scheme::build_w(scheme::Axis::X, &dp.kx_inv, 1, &cfg).unwrap();
    let dense = wx.to_dense().unwrap();
    let want = [
        [0.5, 0.5, 0.0, 0.0],
        [0.5, 0.5, 0.0, 0.0],
        [0.0, 0.0, 0.5, 0.5],
        [0.0, 0.0, 0.5, 0.5],
    ];
    for i in 0..4 {
        for j in 0..4 {
            assert!((dense[(i, j)] - want[i][j]).abs() < 1e-12);
        }
    }
}

#[test]
fn build_w_matches_dense_summation() {
    // q_x^-1[j] = sum_i kx^-1[j n + i] summed over the fast axis
    let cfg = SchemeConfig::profile_a();
    let d = 3u32;
    let p = ProblemSpec::analytic();
    let dp = scheme::discretize(&p, d, &cfg).unwrap();
    let (qx, _) = scheme::build_w(scheme::Axis::X, &dp.kx_inv, d, &cfg).unwrap();
    let (qy, _) = scheme::build_w(scheme::Axis::Y, &dp.ky_inv, d, &cfg).unwrap();
    let n = 1usize << d;
    let kxd = dp.kx_inv.to_dense().unwrap();
    let kyd = dp.ky_inv.to_dense().unwrap();
    let qxd = qx.to_dense().unwrap();
    let qyd = qy.to_dense().unwrap();
    for idx in 0..n {
        let sx: f64 = (0..n).map(|i| kxd[idx * n + i]).sum();
        assert!((qxd[idx] - 1.0 / sx).abs() < 1e-10, "qx[{idx}]");
        let sy: f64 = (0..n).map(|a| kyd[idx + n * a]).sum();
        assert!((qyd[idx] - 1.0 / sy).abs() < 1e-10, "qy[{idx}]");
    }
}

#[test]
fn assembled_h_operators_d1() {
    let cfg = SchemeConfig::profile_a();
    let dp = scheme::discretize(&unit_problem(), 1, &cfg).unwrap();
    let ops = scheme::assemble_operators(&dp, &cfg).unwrap();
    let hx = ops.hx.to_dense().unwrap();
    let hy = ops.hy.to_dense().unwrap();
    // Hx = I (x) N, Hy = N (x) I with N = [[1/8, 0], [0, 0]]
    for i in 0..4usize {
        for j in 0..4usize {
            let (xi, xj, yi, yj) = (i % 2, j % 2, i / 2, j / 2);
            let n_of = |a: usize, b: usize| if a == 0 && b == 0 { 0.125 } else { 0.0 };
            let want_x = if yi == yj { n_of(xi, xj) } else { 0.0 };
            let want_y = if xi == xj { n_of(yi, yj) } else { 0.0 };
            assert!((hx[(i, j)] - want_x).abs() < 1e-12, "Hx[{i},{j}]");
            assert!((hy[(i, j)] - want_y).abs() < 1e-12, "Hy[{i},{j}]");
        }
    }
}

/// Dense reconstruction of Hx straight from the projector formula.
fn dense_hx(p: &ProblemSpec, d: u32) -> faer::Mat<f64> {
    let grid = GridSpec::new(d).unwrap();
    let n = grid.n() as usize;
    let h = grid.h();
    let total = n * n;
    let kx = |i: usize, j: usize| (p.kx)(grid.midpoint(i as u64), grid.corner(j as u64));
    let b = faer::Mat::<f64>::from_fn(n, n, |i, j| if i >= j { h } else { 0.0 });
    let bx = faer::Mat::<f64>::from_fn(total, total, |r, c| {
        if r / n == c / n {
            b[(r % n, c % n)]
        } else {
            0.0
        }
    });
    let kx_inv = faer::Mat::<f64>::from_fn(total, total, |r, c| {
        if r == c {
            1.0 / kx(r % n, r / n)
        } else {
            0.0
        }
    });
    let mut qx = vec![0.0; n];
    for (jy, slot) in qx.iter_mut().enumerate() {
        let s: f64 = (0..n).map(|i| 1.0 / kx(i, jy)).sum();
        *slot = 1.0 / s;
    }
    let wx = faer::Mat::<f64>::from_fn(total, total, |r, c| if r / n == c / n { qx[r / n] } else { 0.0 });
    let i2 = faer::Mat::<f64>::identity(total, total);
    &bx * &kx_inv * (&i2 - &wx * &kx_inv) * bx.transpose()
}

#[test]
fn assembled_hx_matches_dense_formula() {
    let cfg = SchemeConfig::profile_a();
    let d = 3u32;
    let p = ProblemSpec::analytic();
    let dp = scheme::discretize(&p, d, &cfg).unwrap();
    let ops = scheme::assemble_operators(&dp, &cfg).unwrap();
    let got = ops.hx.to_dense().unwrap();
    let want = dense_hx(&p, d);
    let total = 1usize << (2 * d);
    let mut num = 0.0f64;
    let mut den = 0.0f64;
    for i in 0..total {
        for j in 0..total {
            num += (got[(i, j)] - want[(i, j)]).powi(2);
            den += want[(i, j)].powi(2);
        }
    }
    let rel = (num / den).sqrt();
    assert!(rel <= 1e-9, "relative Frobenius error {rel}");
}

#[test]
fn assembled_hx_is_symmetric() {
    let cfg = SchemeConfig::profile_a();
    let d = 3u32;
    let dp = scheme::discretize(&ProblemSpec::analytic(), d, &cfg).unwrap();
    let ops = scheme::assemble_operators(&dp, &cfg).unwrap();
    let skew = TtMatrix::axpby(1.0, &ops.hx, -1.0, &ops.hx.transpose()).unwrap();
    assert!(skew.norm() <= 10.0 * cfg.tau_round.value() * ops.hx.norm());
}

#[test]
fn solve_d1_hand_computed() {
    let cfg = SchemeConfig::profile_a();
    let bundle = scheme::solve(&unit_problem(), 1, &cfg).unwrap();
    assert!(bundle.report.converged);
    let u = bundle.u.to_dense().unwrap();
    assert!((u[0] - 0.0625).abs() < 1e-9, "u = {u:?}");
    for v in &u[1..] {
        assert!(v.abs() < 1e-9);
    }
    // the multiplier reproduces u through Hx
    let dp = scheme::discretize(&unit_problem(), 1, &cfg).unwrap();
    let ops = scheme::assemble_operators(&dp, &cfg).unwrap();
    let hx_mu = ops.hx.matvec(bundle.mu.as_ref().unwrap()).unwrap().to_dense().unwrap();
    assert!((hx_mu[0] - 0.0625).abs() < 1e-9);
    for v in &hx_mu[1..] {
        assert!(v.abs() < 1e-9);
    }
}

#[test]
fn solve_recovers_u_from_mu() {
    let cfg = SchemeConfig::profile_a();
    let d = 3u32;
    let p = ProblemSpec::analytic();
    let dp = scheme::discretize(&p, d, &cfg).unwrap();
    let ops = scheme::assemble_operators(&dp, &cfg).unwrap();
    let bundle = scheme::solve(&p, d, &cfg).unwrap();
    let mu = bundle.mu.as_ref().unwrap();
    let redo = ops.bx.matvec(&ops.rx.matvec(mu).unwrap()).unwrap();
    let diff = TtVector::axpby(1.0, &bundle.u, -1.0, &redo).unwrap();
    assert!(diff.norm() <= 10.0 * cfg.tau_round.value() * bundle.u.norm().max(1e-30) + 1e-13);
}

#[test]
fn solve_compatibility_of_derivatives() {
    let cfg = SchemeConfig::profile_a();
    let d = 4u32;
    let p = ProblemSpec::analytic();
    let bundle = scheme::solve(&p, d, &cfg).unwrap();
    assert!(bundle.report.converged);
    let dp = scheme::discretize(&p, d, &cfg).unwrap();
    let ops = scheme::assemble_operators(&dp, &cfg).unwrap();
    let bx_ux = ops.bx.matvec(&bundle.ux).unwrap();
    let by_uy = ops.by.matvec(&bundle.uy).unwrap();
    let diff = TtVector::axpby(1.0, &bx_ux, -1.0, &by_uy).unwrap();
    // discrete compatibility Bx ux = By uy, dominated by the solver residual
    let tol = 10.0 * cfg.amen.tol.value();
    assert!(diff.norm() <= tol * bundle.u.norm(), "{} vs {}", diff.norm(), tol * bundle.u.norm());
}

#[test]
fn corner_nullspace_does_not_affect_u() {
    let cfg = SchemeConfig::profile_a();
    let d = 3u32;
    let p = ProblemSpec::analytic();
    let dp = scheme::discretize(&p, d, &cfg).unwrap();
    let ops = scheme::assemble_operators(&dp, &cfg).unwrap();
    let bundle = scheme::solve(&p, d, &cfg).unwrap();
    let mu = bundle.mu.as_ref().unwrap();
    let n = 1u64 << d;
    let corner = TtVector::kron(
        &constructors::delta(d, n - 1).unwrap(),
        &constructors::delta(d, n - 1).unwrap(),
    );
    let shifted = TtVector::axpby(1.0, mu, 3.7, &corner).unwrap();
    let u0 = ops.hx.matvec(mu).unwrap().to_dense().unwrap();
    let u1 = ops.hx.matvec(&shifted).unwrap().to_dense().unwrap();
    assert!(dense_err(&u1, &u0) <= 1e-12);
}

#[test]
fn scheme_matches_dense_fd_at_small_factors() {
    let cfg = SchemeConfig::profile_a();
    for preset in [ProblemSpec::analytic(), ProblemSpec::constant_rhs(), ProblemSpec::point_sources()] {
        for d in 2..=3u32 {
            let bundle = scheme::solve(&preset, d, &cfg).unwrap();
            assert!(bundle.report.converged, "{} d={d}: {:?}", preset.name, bundle.report);
            let sys = fd::assemble_dense(&preset, d).unwrap();
            let u_fd = fd::solve_dense(&sys).unwrap();
            let err = dense_err(&bundle.u.to_dense().unwrap(), &u_fd);
            assert!(err <= 1e-8, "{} d={d}: err {err}", preset.name);
        }
    }
}

#[test]
fn inverse_identity_small() {
    let p = unit_problem();
    let (ex, ey) = fd::scheme_identity_error(&p, 2).unwrap();
    assert!(ex.max(ey) <= 1e-12, "unit d=2: {ex}, {ey}");
    let p = ProblemSpec::analytic();
    let (ex, ey) = fd::scheme_identity_error(&p, 3).unwrap();
    assert!(ex.max(ey) <= 1e-10, "analytic d=3: {ex}, {ey}");
}

#[test]
fn fd_qtt_matches_fd_dense() {
    let cfg = SchemeConfig::profile_a();
    for d in 1..=4u32 {
        let p = ProblemSpec::constant_rhs();
        let bundle = fd::solve_qtt(&p, d, &cfg).unwrap();
        assert!(bundle.report.converged, "d={d}: {:?}", bundle.report);
        let u_fd = fd::solve_dense(&fd::assemble_dense(&p, d).unwrap()).unwrap();
        let err = dense_err(&bundle.u.to_dense().unwrap(), &u_fd);
        assert!(err <= 10.0 * cfg.amen.tol.value(), "d={d}: err {err}");
    }
}

#[test]
fn fd_dense_second_order_convergence() {
    let p = ProblemSpec::analytic();
    let mut errs = Vec::new();
    for d in 4..=5u32 {
        let grid = GridSpec::new(d).unwrap();
        let n = grid.n() as usize;
        let u = fd::solve_dense(&fd::assemble_dense(&p, d).unwrap()).unwrap();
        let mut num = 0.0;
        let mut den = 0.0;
        for j in 0..n {
            for i in 0..n {
                let want =
                    fs_qtt::problem::analytic::solution(grid.corner(i as u64), grid.corner(j as u64));
                num += (u[i + n * j] - want).powi(2);
                den += want * want;
            }
        }
        errs.push((num / den).sqrt());
    }
    let ratio = errs[0] / errs[1];
    assert!((2.5..6.0).contains(&ratio), "convergence ratio {ratio}, errors {errs:?}");
}

#[test]
fn solution_value_near_half_quarter() {
    // u(0.5, 0.25) = sin(pi/4) * sin(pi/2) ~ 0.7071; at d=5 the grid hits
    // both coordinates exactly.
    let cfg = SchemeConfig::profile_a();
    let d = 5u32;
    let bundle = scheme::solve(&ProblemSpec::analytic(), d, &cfg).unwrap();
    let mut idx = bits(15, d);
    idx.extend(bits(7, d));
    let got = bundle.u.element(&idx).unwrap();
    let want = (std::f64::consts::PI / 4.0).sin();
    assert!((got - want).abs() < 1e-2, "{got} vs {want}");
}

#[test]
fn rank_bound_from_measured_factors() {
    let cfg = SchemeConfig::profile_a();
    let d = 4u32;
    let p = ProblemSpec::analytic();
    let dp = scheme::discretize(&p, d, &cfg).unwrap();
    let ops = scheme::assemble_operators(&dp, &cfg).unwrap();
    let bundle = scheme::solve(&p, d, &cfg).unwrap();
    let rkx = *dp.kx_inv.ranks().iter().max().unwrap();
    let rky = *dp.ky_inv.ranks().iter().max().unwrap();
    let rqx = *ops.qx.ranks().iter().max().unwrap();
    let rqy = *ops.qy.ranks().iter().max().unwrap();
    let bound_a = 4 * (1 + rkx * rqx) * rkx + 4 * (1 + rky * rqy) * rky;
    assert!(
        bundle.stats.max_rank_a_pre_round <= bound_a,
        "measured {} vs bound {bound_a}",
        bundle.stats.max_rank_a_pre_round
    );
    let rf = *dp.f.ranks().iter().max().unwrap();
    let bound_rhs = 4 * (1 + rky * rqy) * rky * rf;
    assert!(bundle.stats.max_rank_rhs_pre_round <= bound_rhs);
}

#[test]
fn energy_of_constant_problem() {
    let cfg = SchemeConfig::profile_b();
    let d = 5u32;
    let p = ProblemSpec::constant_rhs();
    let bundle = scheme::solve(&p, d, &cfg).unwrap();
    let dp = scheme::discretize(&p, d, &cfg).unwrap();
    let grid = GridSpec::new(d).unwrap();
    let j = scheme::energy(&bundle.u, &dp.f, &grid).unwrap();
    // (u, 1) for -div((1+xy^2) grad u) = 1 is a bit below the Laplace value 0.0351
    assert!(j > 0.015 && j < 0.04, "energy {j}");
}
