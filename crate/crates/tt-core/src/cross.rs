//! Cross interpolation: builds train approximations of tensors that are only
//! accessible through an entry-evaluation callback, and of elementwise
//! functions of existing train tensors.
//!
//! The sweep alternates between rebuilding nested left index sets (prefixes)
//! and right index sets (suffixes). At every bond the fiber matrix spanned by
//! the current sets is orthogonalized and a maximum-volume subset of its rows
//! is selected as the next pivot set. Convergence is judged on a fixed,
//! seeded validation sample; ranks grow additively while the sample error
//! stays above the target.

use crate::dense;
use crate::error::TtError;
use crate::tensor::{Core3, Tolerance, TtVector};
use faer::{Mat, MatRef};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeSet;

/// Configuration of the cross interpolation loop.
#[derive(Clone, Debug)]
pub struct CrossConfig {
    /// Target relative RMS error on the validation sample.
    pub tol: Tolerance,
    pub max_sweeps: usize,
    /// Bond rank the index sets start from.
    pub initial_rank: usize,
    /// Number of validation entries (at least 32).
    pub validation_size: usize,
    pub seed: u64,
    /// Hard cap on bond ranks.
    pub rmax: usize,
}

impl Default for CrossConfig {
    fn default() -> Self {
        CrossConfig {
            tol: Tolerance::new(1e-10).expect("valid"),
            max_sweeps: 40,
            initial_rank: 4,
            validation_size: 256,
            seed: 2017,
            rmax: 2048,
        }
    }
}

impl CrossConfig {
    pub fn with_tol(tol: Tolerance) -> Self {
        CrossConfig { tol, ..Default::default() }
    }

    fn validate(&self) -> Result<(), TtError> {
        if self.max_sweeps < 1 {
            return Err(TtError::InvalidConfig("max_sweeps must be >= 1".into()));
        }
        if self.validation_size < 32 {
            return Err(TtError::InvalidConfig("validation_size must be >= 32".into()));
        }
        if self.initial_rank < 1 || self.rmax < 1 {
            return Err(TtError::InvalidConfig("ranks must be >= 1".into()));
        }
        Ok(())
    }
}

/// Outcome metadata of a cross run.
#[derive(Clone, Copy, Debug)]
pub struct CrossReport {
    pub converged: bool,
    pub validation_error: f64,
    pub sweeps: usize,
    pub evaluations: usize,
}

/// Additive rank increase applied after a sweep that misses the tolerance.
const RANK_STEP: usize = 2;
/// Maxvol stops once no entry exceeds `1 + MAXVOL_TOL`.
const MAXVOL_TOL: f64 = 1e-2;

/// Deterministic rectangular maxvol: returns `ncols` row indices of `a`
/// (with `nrows >= ncols`) whose submatrix has locally maximal volume.
/// Ties are broken toward the lowest linear index.
pub(crate) fn maxvol(a: MatRef<'_, f64>) -> Vec<usize> {
    let (m, r) = (a.nrows(), a.ncols());
    debug_assert!(m >= r);
    if m == r {
        return (0..m).collect();
    }
    // Initial pivots from row-pivoted Gaussian elimination.
    let mut w = a.to_owned();
    let mut piv = Vec::with_capacity(r);
    let mut used = vec![false; m];
    for j in 0..r {
        let mut best = usize::MAX;
        let mut best_val = -1.0;
        for i in 0..m {
            if !used[i] && w[(i, j)].abs() > best_val {
                best_val = w[(i, j)].abs();
                best = i;
            }
        }
        piv.push(best);
        used[best] = true;
        let pivot = w[(best, j)];
        if pivot == 0.0 {
            continue;
        }
        for i in 0..m {
            if i == best {
                continue;
            }
            let factor = w[(i, j)] / pivot;
            if factor != 0.0 {
                for c in j..r {
                    let upd = factor * w[(best, c)];
                    w[(i, c)] -= upd;
                }
            }
        }
    }
    // Refinement: b = a * inv(a[piv, :]), swap while some |b| > 1 + tol.
    let sub = Mat::from_fn(r, r, |i, j| a[(piv[i], j)]);
    let mut b = dense::rsolve_lu(sub.as_ref(), a);
    for _ in 0..200 {
        let mut bi = 0usize;
        let mut bj = 0usize;
        let mut best = 0.0f64;
        for i in 0..m {
            for j in 0..r {
                let v = b[(i, j)].abs();
                if v > best {
                    best = v;
                    bi = i;
                    bj = j;
                }
            }
        }
        if best <= 1.0 + MAXVOL_TOL {
            break;
        }
        let denom = b[(bi, bj)];
        // Rank-1 update replacing pivot bj with row bi.
        let col: Vec<f64> = (0..m).map(|i| b[(i, bj)]).collect();
        let row: Vec<f64> = (0..r).map(|j| b[(bi, j)] - if j == bj { 1.0 } else { 0.0 }).collect();
        for i in 0..m {
            for j in 0..r {
                b[(i, j)] -= col[i] * row[j] / denom;
            }
        }
        piv[bj] = bi;
    }
    piv
}

struct Sampler<'a> {
    shape: &'a [usize],
    rng: ChaCha8Rng,
}

impl Sampler<'_> {
    fn random_index(&mut self, positions: std::ops::Range<usize>) -> Vec<usize> {
        positions.map(|p| self.rng.random_range(0..self.shape[p])).collect()
    }
}

/// Number of distinct suffixes available after position `k` (saturating).
fn suffix_space(shape: &[usize], k: usize) -> usize {
    let mut space = 1usize;
    for &n in &shape[k..] {
        space = space.saturating_mul(n);
        if space > 1 << 30 {
            return 1 << 30;
        }
    }
    space
}

/// Builds a train approximation of a tensor given entrywise by `eval`.
///
/// On success the result satisfies the validation contract: relative RMS
/// error at most `cfg.tol` on an independent random sample. If the sweep
/// budget runs out first, the best iterate is returned with
/// `converged = false`. A non-finite callback value is a hard error naming
/// the offending index.
pub fn interpolate(
    mut eval: impl FnMut(&[usize]) -> f64,
    shape: &[usize],
    cfg: &CrossConfig,
) -> Result<(TtVector, CrossReport), TtError> {
    cfg.validate()?;
    if shape.is_empty() || shape.iter().any(|&n| n == 0) {
        return Err(TtError::InvalidCores(format!("bad mode sizes {shape:?}")));
    }
    let d = shape.len();
    let mut evaluations = 0usize;
    let mut call = |idx: &[usize]| -> Result<f64, TtError> {
        let v = eval(idx);
        evaluations += 1;
        if !v.is_finite() {
            return Err(TtError::NonFiniteEval { value: v, index: idx.to_vec() });
        }
        Ok(v)
    };

    let mut sampler = Sampler { shape, rng: ChaCha8Rng::seed_from_u64(cfg.seed) };

    // Fixed validation sample.
    let mut val_idx = Vec::with_capacity(cfg.validation_size);
    let mut val_ref = Vec::with_capacity(cfg.validation_size);
    for _ in 0..cfg.validation_size {
        let idx = sampler.random_index(0..d);
        val_ref.push(call(&idx)?);
        val_idx.push(idx);
    }
    let val_norm = val_ref.iter().map(|v| v * v).sum::<f64>().sqrt();

    // Right index sets: right[k] holds suffixes over positions k..d.
    let mut right: Vec<Vec<Vec<usize>>> = vec![Vec::new(); d + 1];
    right[d].push(Vec::new());
    for k in 1..d {
        let target = cfg.initial_rank.min(suffix_space(shape, k)).min(cfg.rmax);
        let mut set = BTreeSet::new();
        let mut tries = 0;
        while set.len() < target && tries < 100 * target {
            set.insert(sampler.random_index(k..d));
            tries += 1;
        }
        right[k] = set.into_iter().collect();
    }
    let mut left: Vec<Vec<Vec<usize>>> = vec![Vec::new(); d + 1];
    left[0].push(Vec::new());

    let mut cores: Vec<Core3> = shape.iter().map(|&n| Core3::zeros(1, n, 1)).collect();
    let mut best: Option<(TtVector, f64)> = None;
    let mut sweeps = 0usize;
    let mut converged = false;
    let mut scratch = Vec::with_capacity(d);

    'outer: for sweep in 1..=cfg.max_sweeps {
        sweeps = sweep;
        // Forward half-sweep: rebuild prefixes and all cores left to right.
        for c in 0..d {
            let pre = &left[c];
            let suf = &right[c + 1];
            let n = shape[c];
            let nrows = pre.len() * n;
            let ncols = suf.len();
            let mut fib = Mat::<f64>::zeros(nrows, ncols);
            for (b, s) in suf.iter().enumerate() {
                for i in 0..n {
                    for (a, p) in pre.iter().enumerate() {
                        scratch.clear();
                        scratch.extend_from_slice(p);
                        scratch.push(i);
                        scratch.extend_from_slice(s);
                        fib[(a + pre.len() * i, b)] = call(&scratch)?;
                    }
                }
            }
            let pre_len = pre.len();
            if c == d - 1 {
                cores[c] = Core3::from_left_mat(fib.as_ref(), pre_len, n, 1);
            } else {
                let (q, _) = dense::thin_qr(fib.as_ref());
                let rk = q.ncols();
                let piv = maxvol(q.as_ref());
                let new_left: Vec<Vec<usize>> = piv
                    .iter()
                    .map(|&row| {
                        let mut p = pre[row % pre_len].clone();
                        p.push(row / pre_len);
                        p
                    })
                    .collect();
                let sub = Mat::from_fn(rk, rk, |i, j| q[(piv[i], j)]);
                let g = dense::rsolve_lu(sub.as_ref(), q.as_ref());
                cores[c] = Core3::from_left_mat(g.as_ref(), pre_len, n, rk);
                left[c + 1] = new_left;
            }
        }
        let x = TtVector::from_cores(cores.clone()).expect("cross chain is consistent");
        let err = validation_error(&x, &val_idx, &val_ref, val_norm);
        if best.as_ref().is_none_or(|(_, e)| err < *e) {
            best = Some((x, err));
        }
        if err <= cfg.tol.value() {
            converged = true;
            break 'outer;
        }

        // Backward half-sweep: rebuild suffixes and cores right to left.
        for c in (1..d).rev() {
            let pre = &left[c];
            let suf = &right[c + 1];
            let n = shape[c];
            let nrows = n * suf.len();
            let ncols = pre.len();
            let mut fib = Mat::<f64>::zeros(nrows, ncols);
            for (a, p) in pre.iter().enumerate() {
                for (b, s) in suf.iter().enumerate() {
                    for i in 0..n {
                        scratch.clear();
                        scratch.extend_from_slice(p);
                        scratch.push(i);
                        scratch.extend_from_slice(s);
                        fib[(i + n * b, a)] = call(&scratch)?;
                    }
                }
            }
            let suf_len = suf.len();
            let (q, _) = dense::thin_qr(fib.as_ref());
            let rk = q.ncols();
            let piv = maxvol(q.as_ref());
            let new_right: Vec<Vec<usize>> = piv
                .iter()
                .map(|&row| {
                    let mut s = vec![row % n];
                    s.extend_from_slice(&suf[row / n]);
                    s
                })
                .collect();
            let sub = Mat::from_fn(rk, rk, |i, j| q[(piv[i], j)]);
            let g = dense::rsolve_lu(sub.as_ref(), q.as_ref());
            cores[c] = Core3::from_fn(rk, n, suf_len, |p, i, b| g[(i + n * b, p)]);
            right[c] = new_right;
        }
        {
            let suf = &right[1];
            let n = shape[0];
            let mut first = Core3::zeros(1, n, suf.len());
            for (b, s) in suf.iter().enumerate() {
                for i in 0..n {
                    scratch.clear();
                    scratch.push(i);
                    scratch.extend_from_slice(s);
                    first.set(0, i, b, call(&scratch)?);
                }
            }
            cores[0] = first;
        }
        let x = TtVector::from_cores(cores.clone()).expect("cross chain is consistent");
        let err = validation_error(&x, &val_idx, &val_ref, val_norm);
        if best.as_ref().is_none_or(|(_, e)| err < *e) {
            best = Some((x, err));
        }
        if err <= cfg.tol.value() {
            converged = true;
            break 'outer;
        }

        // Enrich the suffix sets before the next pass.
        for k in 1..d {
            let cap = suffix_space(shape, k).min(cfg.rmax);
            let target = (right[k].len() + RANK_STEP).min(cap);
            let mut set: BTreeSet<Vec<usize>> = right[k].iter().cloned().collect();
            let mut tries = 0;
            while set.len() < target && tries < 100 * target {
                set.insert(sampler.random_index(k..d));
                tries += 1;
            }
            right[k] = set.into_iter().collect();
        }
    }

    let (x, _) = best.expect("at least one sweep ran");
    // Oversampled directions carry no weight; a rounding pass well below the
    // target removes them. The contract is re-checked on the rounded result.
    let round_tol = Tolerance::new((cfg.tol.value() * 0.1).clamp(1e-15, 0.999)).expect("in range");
    let x = x.round(round_tol);
    let validation_error = validation_error(&x, &val_idx, &val_ref, val_norm);
    let converged = converged && validation_error <= cfg.tol.value();
    Ok((x, CrossReport { converged, validation_error, sweeps, evaluations }))
}

/// Train approximation of `f` applied entrywise to one or more train tensors
/// of equal shape. Argument entries at sampled indices are read with
/// [`TtVector::element`].
pub fn elementwise(
    f: impl Fn(&[f64]) -> f64,
    args: &[&TtVector],
    cfg: &CrossConfig,
) -> Result<(TtVector, CrossReport), TtError> {
    if args.is_empty() {
        return Err(TtError::InvalidConfig("elementwise cross needs at least one argument".into()));
    }
    let shape = args[0].mode_sizes();
    for a in &args[1..] {
        if a.mode_sizes() != shape {
            return Err(TtError::ShapeMismatch { left: shape, right: a.mode_sizes() });
        }
    }
    let mut vals = vec![0.0; args.len()];
    interpolate(
        |idx| {
            for (slot, a) in vals.iter_mut().zip(args) {
                *slot = a.element(idx).expect("index valid by construction");
            }
            f(&vals)
        },
        &shape,
        cfg,
    )
}

fn validation_error(x: &TtVector, idx: &[Vec<usize>], reference: &[f64], ref_norm: f64) -> f64 {
    let mut num = 0.0;
    for (i, r) in idx.iter().zip(reference) {
        let v = x.element(i).expect("validation index valid");
        num += (v - r) * (v - r);
    }
    if ref_norm > 0.0 {
        num.sqrt() / ref_norm
    } else {
        (num / reference.len() as f64).sqrt()
    }
}
