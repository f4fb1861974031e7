//! Entrywise oracles for the closed-form QTT constructors, plus scaling
//! checks at large grid factors where dense realization is impossible.

use tt_core::{constructors, GridSpec, TtMatrix, TtVector};

fn bits(value: u64, d: u32) -> Vec<usize> {
    (0..d).map(|k| ((value >> k) & 1) as usize).collect()
}

#[test]
fn dense_forms_match_definitions_up_to_d5() {
    for d in 1..=5u32 {
        let n = 1usize << d;
        let h = GridSpec::new(d).unwrap().h();

        let ones = constructors::ones(d).unwrap().to_dense().unwrap();
        assert!(ones.iter().all(|&v| v == 1.0));

        let xf = constructors::xfun(d).unwrap().to_dense().unwrap();
        for (i, v) in xf.iter().enumerate() {
            assert!((v - i as f64).abs() < 1e-14);
        }

        let eye = constructors::eye(d).unwrap().to_dense().unwrap();
        let ones_mat = constructors::ones_matrix(d).unwrap().to_dense().unwrap();
        let vol = constructors::volterra(d).unwrap().to_dense().unwrap();
        let blocks = constructors::fd_blocks(d).unwrap();
        let binv = blocks.b_inv.to_dense().unwrap();
        let jm = blocks.j_mask.to_dense().unwrap();
        let zl = blocks.z_last.to_dense().unwrap();
        for i in 0..n {
            for j in 0..n {
                assert_eq!(eye[(i, j)], if i == j { 1.0 } else { 0.0 });
                assert_eq!(ones_mat[(i, j)], 1.0);
                let vol_want = if i >= j { h } else { 0.0 };
                assert!((vol[(i, j)] - vol_want).abs() < 1e-14 * h.max(1.0));
                let binv_want = if i == j {
                    1.0 / h
                } else if i == j + 1 {
                    -1.0 / h
                } else {
                    0.0
                };
                assert!((binv[(i, j)] - binv_want).abs() < 1e-14 / h);
                let j_want = if i == j && i < n - 1 { 1.0 } else { 0.0 };
                assert_eq!(jm[(i, j)], j_want);
                let z_want = if i == n - 1 && j == n - 1 { 1.0 } else { 0.0 };
                assert_eq!(zl[(i, j)], z_want);
            }
        }
    }
}

#[test]
fn rank_chains_are_as_documented() {
    let d = 12;
    assert!(constructors::ones(d).unwrap().ranks().iter().all(|&r| r == 1));
    assert!(constructors::xfun(d).unwrap().ranks().iter().all(|&r| r <= 2));
    assert!(constructors::eye(d).unwrap().ranks().iter().all(|&r| r == 1));
    assert!(constructors::ones_matrix(d).unwrap().ranks().iter().all(|&r| r == 1));
    assert!(constructors::volterra(d).unwrap().ranks().iter().all(|&r| r <= 2));
    let blocks = constructors::fd_blocks(d).unwrap();
    assert!(blocks.b_inv.ranks().iter().all(|&r| r <= 2));
    assert!(blocks.j_mask.ranks().iter().all(|&r| r <= 2));
    assert!(blocks.z_last.ranks().iter().all(|&r| r == 1));
    assert!(constructors::delta(d, 1234).unwrap().ranks().iter().all(|&r| r == 1));
}

#[test]
fn constructors_scale_to_d60() {
    let d = 60u32;
    let h = GridSpec::new(d).unwrap().h();
    let xf = constructors::xfun(d).unwrap();
    // spot probes at exactly representable values
    for &idx in &[0u64, 1, 1 << 52, (1 << 53) - 1, 3 << 40] {
        let v = xf.element(&bits(idx, d)).unwrap();
        let want = idx as f64;
        assert!((v - want).abs() <= 4.0 * f64::EPSILON * want.abs().max(1.0), "idx {idx}: {v} vs {want}");
    }
    let vol = constructors::volterra(d).unwrap();
    for &(i, j) in &[(5u64, 5u64), (1 << 40, 7), (7, 1 << 40), ((1 << 60) - 1, 0)] {
        let v = vol.element(&bits(i, d), &bits(j, d)).unwrap();
        let want = if i >= j { h } else { 0.0 };
        assert_eq!(v, want, "entry ({i}, {j})");
    }
    let blocks = constructors::fd_blocks(d).unwrap();
    for &(i, j) in &[(0u64, 0u64), (1, 0), (1, 1), (2, 1), (5, 3)] {
        let v = blocks.b_inv.element(&bits(i, d), &bits(j, d)).unwrap();
        let want = if i == j {
            1.0 / h
        } else if i == j + 1 {
            -1.0 / h
        } else {
            0.0
        };
        assert_eq!(v, want);
    }
}

#[test]
fn volterra_inverse_identity() {
    // dense check at small d
    for d in 1..=4u32 {
        let n = 1usize << d;
        let blocks = constructors::fd_blocks(d).unwrap();
        let vol = constructors::volterra(d).unwrap();
        let left = blocks.b_inv.matmul(&vol).unwrap().to_dense().unwrap();
        let right = vol.matmul(&blocks.b_inv).unwrap().to_dense().unwrap();
        for i in 0..n {
            for j in 0..n {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((left[(i, j)] - want).abs() < 1e-12);
                assert!((right[(i, j)] - want).abs() < 1e-12);
            }
        }
    }
    // elementwise probes at a grid factor far beyond dense reach
    let d = 40u32;
    let blocks = constructors::fd_blocks(d).unwrap();
    let vol = constructors::volterra(d).unwrap();
    let prod = blocks.b_inv.matmul(&vol).unwrap();
    for &(i, j) in &[(0u64, 0u64), (123, 123), (1 << 30, (1 << 30) + 1), (99, 7)] {
        let v = prod.element(&bits(i, d), &bits(j, d)).unwrap();
        let want = if i == j { 1.0 } else { 0.0 };
        assert!((v - want).abs() < 1e-12, "({i},{j}) -> {v}");
    }
}

#[test]
fn j_plus_z_is_identity() {
    for d in 1..=5u32 {
        let blocks = constructors::fd_blocks(d).unwrap();
        let sum = blocks.j_mask.add(&blocks.z_last).unwrap();
        let eye = constructors::eye(d).unwrap();
        let diff = TtMatrix::axpby(1.0, &sum, -1.0, &eye).unwrap();
        assert!(diff.norm() < 1e-14);
    }
}

#[test]
fn volterra_transpose_is_upper_triangular() {
    let d = 3;
    let h = GridSpec::new(d).unwrap().h();
    let bt = constructors::volterra(d).unwrap().transpose().to_dense().unwrap();
    let n = 1 << d;
    for i in 0..n {
        for j in 0..n {
            let want = if j >= i { h } else { 0.0 };
            assert!((bt[(i, j)] - want).abs() < 1e-15);
        }
    }
}

#[test]
fn delta_properties() {
    let d = 6u32;
    let a = constructors::delta(d, 17).unwrap();
    let b = constructors::delta(d, 40).unwrap();
    let sum = a.add(&b).unwrap();
    assert!((sum.norm() - 2f64.sqrt()).abs() < 1e-14);

    let xf = constructors::xfun(d).unwrap();
    let via_dot = a.dot(&xf).unwrap();
    let via_element = xf.element(&bits(17, d)).unwrap();
    assert!((via_dot - via_element).abs() < 1e-12);
}

#[test]
fn generate_dispatch() {
    match constructors::generate(constructors::GeneratorKind::Xfun, 3).unwrap() {
        tt_core::QttObject::Vector(v) => assert_eq!(v.to_dense().unwrap()[5], 5.0),
        _ => panic!("xfun is a vector"),
    }
    match constructors::generate(constructors::GeneratorKind::OnesMatrix, 2).unwrap() {
        tt_core::QttObject::Matrix(m) => assert_eq!(m.ranks(), vec![1, 1, 1]),
        _ => panic!("ones_matrix is a matrix"),
    }
    assert!(constructors::generate(constructors::GeneratorKind::Eye, 0).is_err());
    assert!(constructors::generate(constructors::GeneratorKind::Eye, 63).is_err());
}
