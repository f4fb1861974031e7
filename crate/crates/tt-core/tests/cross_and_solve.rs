//! Validation-contract tests for cross interpolation and oracle-equivalence
//! tests for the alternating linear solver.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tt_core::{
    amen_solve, constructors, cross, residual, Core3, CrossConfig, GridSpec, LinSolveConfig,
    Tolerance, TtMatrix, TtVector,
};

fn tol(v: f64) -> Tolerance {
    Tolerance::new(v).unwrap()
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

fn random_tt(shape: &[usize], max_rank: usize, rng: &mut ChaCha8Rng) -> TtVector {
    let d = shape.len();
    let mut ranks = vec![1usize];
    for _ in 1..d {
        ranks.push(rng.random_range(1..=max_rank));
    }
    ranks.push(1);
    let cores = (0..d)
        .map(|k| Core3::from_fn(ranks[k], shape[k], ranks[k + 1], |_, _, _| rng.random_range(-1.0..1.0)))
        .collect();
    TtVector::from_cores(cores).unwrap()
}

#[test]
fn cross_linear_ramp_matches_dense() {
    let d = 6u32;
    let h = GridSpec::new(d).unwrap().h();
    let cfg = CrossConfig::with_tol(tol(1e-12));
    let (x, rep) = cross::interpolate(
        |idx| {
            let mut lin = 0u64;
            for (k, &b) in idx.iter().enumerate() {
                lin |= (b as u64) << k;
            }
            lin as f64 * h
        },
        &[2; 6],
        &cfg,
    )
    .unwrap();
    assert!(rep.converged, "report {rep:?}");
    let want = constructors::xfun(d).unwrap().scale(h).to_dense().unwrap();
    assert!(dense_err(&x.to_dense().unwrap(), &want) < 1e-10);
}

#[test]
fn cross_reciprocal_examples() {
    // reciprocal of all-ones stays all-ones
    let ones = constructors::ones(6).unwrap();
    let cfg = CrossConfig::with_tol(tol(1e-12));
    let (r, rep) = cross::elementwise(|v| 1.0 / v[0], &[&ones], &cfg).unwrap();
    assert!(rep.converged);
    assert!(dense_err(&r.to_dense().unwrap(), &ones.to_dense().unwrap()) < 1e-12);

    // reciprocal of 1 + h*xfun against the dense oracle
    let d = 5u32;
    let h = GridSpec::new(d).unwrap().h();
    let base = TtVector::axpby(h, &constructors::xfun(d).unwrap(), 1.0, &constructors::ones(d).unwrap()).unwrap();
    let cfg = CrossConfig::with_tol(tol(1e-10));
    let (r, rep) = cross::elementwise(|v| 1.0 / v[0], &[&base], &cfg).unwrap();
    assert!(rep.converged);
    let want: Vec<f64> = base.to_dense().unwrap().iter().map(|v| 1.0 / v).collect();
    assert!(dense_err(&r.to_dense().unwrap(), &want) <= 1e-8);
}

#[test]
fn cross_identity_function_reproduces_argument() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let x = random_tt(&[2; 6], 3, &mut rng);
    let cfg = CrossConfig::with_tol(tol(1e-10));
    let (y, rep) = cross::elementwise(|v| v[0], &[&x], &cfg).unwrap();
    assert!(rep.converged);
    assert!(dense_err(&y.to_dense().unwrap(), &x.to_dense().unwrap()) < 1e-9);
}

#[test]
fn cross_exact_rank_recovery() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let x = random_tt(&[2; 6], 4, &mut rng);
    let cfg = CrossConfig { tol: tol(1e-12), initial_rank: 4, ..Default::default() };
    let (y, _) = cross::interpolate(|idx| x.element(idx).unwrap(), &[2; 6], &cfg).unwrap();
    assert!(dense_err(&y.to_dense().unwrap(), &x.to_dense().unwrap()) < 1e-10);
}

#[test]
fn cross_is_deterministic_for_fixed_seed() {
    let run = || {
        let cfg = CrossConfig { seed: 4242, tol: tol(1e-8), ..Default::default() };
        let (x, _) = cross::interpolate(
            |idx| {
                let mut acc = 1.0;
                for (k, &b) in idx.iter().enumerate() {
                    acc += (b as f64) * ((k + 1) as f64).sqrt();
                }
                acc.sin() + 1.5
            },
            &[2; 8],
            &cfg,
        )
        .unwrap();
        x
    };
    let a = run();
    let b = run();
    assert_eq!(a.ranks(), b.ranks());
    for (ca, cb) in a.cores().iter().zip(b.cores()) {
        assert_eq!(ca.data(), cb.data());
    }
}

#[test]
fn cross_domain_error_names_index() {
    let d = 4u32;
    // vector with one zero entry: reciprocal blows up there
    let ones = constructors::ones(d).unwrap();
    let hole = constructors::delta(d, 5).unwrap();
    let v = TtVector::axpby(1.0, &ones, -1.0, &hole).unwrap();
    let cfg = CrossConfig::with_tol(tol(1e-10));
    match cross::elementwise(|x| 1.0 / x[0], &[&v], &cfg) {
        Err(tt_core::TtError::NonFiniteEval { index, .. }) => {
            let mut lin = 0usize;
            for (k, &b) in index.iter().enumerate() {
                lin |= b << k;
            }
            assert_eq!(lin, 5);
        }
        other => panic!("expected NonFiniteEval, got {:?}", other.map(|(_, r)| r)),
    }
}

#[test]
fn amen_diagonal_system_matches_reciprocal() {
    let d = 6u32;
    let h = GridSpec::new(d).unwrap().h();
    let diag_vec =
        TtVector::axpby(h, &constructors::xfun(d).unwrap(), 1.0, &constructors::ones(d).unwrap()).unwrap();
    let a = TtMatrix::diag(&diag_vec);
    let b = constructors::ones(d).unwrap();
    let cfg = LinSolveConfig::with_tol(tol(1e-10));
    let (x, rep) = amen_solve(&a, &b, &cfg, None).unwrap();
    assert!(rep.converged, "{rep:?}");
    let want: Vec<f64> = diag_vec.to_dense().unwrap().iter().map(|v| 1.0 / v).collect();
    assert!(dense_err(&x.to_dense().unwrap(), &want) <= 1e-9);
}

#[test]
fn amen_matches_dense_solver_on_random_systems() {
    for d in 2..=5u32 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + d as u64);
        // well-conditioned: identity plus a small random perturbation
        let shape = vec![2usize; d as usize];
        let pert_cores: Vec<_> = (0..d as usize)
            .map(|k| {
                let (rl, rr) = if k == 0 {
                    (1, 2)
                } else if k + 1 == d as usize {
                    (2, 1)
                } else {
                    (2, 2)
                };
                tt_core::Core4::from_fn(rl, 2, 2, rr, |_, _, _, _| rng.random_range(-1.0..1.0))
            })
            .collect();
        let pert = TtMatrix::from_cores(pert_cores).unwrap();
        let scale = 0.3 / pert.norm();
        let a = TtMatrix::axpby(1.0, &constructors::eye(d).unwrap(), scale, &pert).unwrap();
        let b = random_tt(&shape, 2, &mut rng);

        let cfg = LinSolveConfig::with_tol(tol(1e-10));
        let (x, rep) = amen_solve(&a, &b, &cfg, None).unwrap();
        assert!(rep.converged, "d={d}: {rep:?}");

        // dense oracle
        let ad = a.to_dense().unwrap();
        let bd = b.to_dense().unwrap();
        let n = bd.len();
        let bm = faer::MatRef::from_column_major_slice(&bd, n, 1);
        let lu = faer::linalg::solvers::PartialPivLu::new(ad.as_ref());
        let sol = faer::linalg::solvers::Solve::solve(&lu, bm);
        let want: Vec<f64> = (0..n).map(|i| sol[(i, 0)]).collect();
        let err = dense_err(&x.to_dense().unwrap(), &want);
        assert!(err <= 10.0 * 1e-10, "d={d}, err={err}");
    }
}

#[test]
fn amen_report_residual_certificate() {
    let d = 5u32;
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let diag_vec = TtVector::axpby(
        0.1,
        &random_tt(&vec![2; d as usize], 2, &mut rng),
        1.0,
        &constructors::ones(d).unwrap(),
    )
    .unwrap();
    let a = TtMatrix::diag(&diag_vec);
    let b = random_tt(&vec![2; d as usize], 3, &mut rng);
    let cfg = LinSolveConfig::with_tol(tol(1e-8));
    let (x, rep) = amen_solve(&a, &b, &cfg, None).unwrap();
    let recomputed = residual(&a, &x, &b).unwrap();
    assert!((rep.final_residual - recomputed).abs() <= 1e-12);
}

#[test]
fn amen_rank_cap_is_flagged() {
    let d = 6u32;
    let mut rng = ChaCha8Rng::seed_from_u64(91);
    let diag_vec = TtVector::axpby(
        0.5,
        &random_tt(&vec![2; d as usize], 4, &mut rng),
        2.0,
        &constructors::ones(d).unwrap(),
    )
    .unwrap();
    let a = TtMatrix::diag(&diag_vec);
    let b = random_tt(&vec![2; d as usize], 4, &mut rng);
    let cfg = LinSolveConfig { rmax: 3, ..LinSolveConfig::with_tol(tol(1e-10)) };
    let (_, rep) = amen_solve(&a, &b, &cfg, None).unwrap();
    assert!(rep.rank_capped);
    assert!(rep.max_rank_seen <= 3);
}
