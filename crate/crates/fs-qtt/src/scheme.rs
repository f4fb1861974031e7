//! The derivative-free finite-sum discretization in QTT form.
//!
//! The solution and right-hand side live on cell upper-right corners, the
//! x-derivative data on top-edge midpoints and the y-derivative data on
//! right-edge midpoints. With `B` the rectangular-rule antiderivative matrix
//! and `E` the all-ones matrix, the scheme assembles
//!
//! ```text
//! Bx = I (x) B          By = B (x) I
//! Wx = Qx (x) E         Wy = E (x) Qy
//! Rx = Kx^-1 (I - Wx Kx^-1) Bx^T        (and the y analogue)
//! Hx = Bx Rx                            (and the y analogue)
//! ```
//!
//! then solves `(Hx + Hy) mu = Hy f` and recovers `u = Bx ux`, `ux = Rx mu`,
//! `uy = Ry (f - mu)`. Fields of length `2^(2d)` are quantized little-endian
//! with the x-index fast: cores `1..d` carry x-bits, cores `d+1..2d` y-bits.

use crate::error::SchemeError;
use crate::problem::{ProblemSpec, RightHandSide};
use std::time::Instant;
use tt_core::{
    amen_solve, constructors, cross, CrossConfig, GridSpec, LinSolveConfig, LinSolveReport,
    Tolerance, TtMatrix, TtVector,
};

/// Tolerance profile of a full solve. The rounding tolerance must not be
/// looser than the solver tolerance.
#[derive(Clone, Debug)]
pub struct SchemeConfig {
    pub tau_round: Tolerance,
    pub tau_cross: Tolerance,
    pub amen: LinSolveConfig,
    pub rmax: usize,
    /// Seed for cross interpolation sampling.
    pub seed: u64,
}

impl SchemeConfig {
    /// High-accuracy profile: solver at 1e-10, rounding and cross at 1e-12.
    pub fn profile_a() -> Self {
        SchemeConfig {
            tau_round: Tolerance::new(1e-12).expect("valid"),
            tau_cross: Tolerance::new(1e-12).expect("valid"),
            amen: LinSolveConfig::with_tol(Tolerance::new(1e-10).expect("valid")),
            rmax: 2048,
            seed: 20_17,
        }
    }

    /// Moderate profile: solver at 1e-6, rounding and cross at 1e-8.
    pub fn profile_b() -> Self {
        SchemeConfig {
            tau_round: Tolerance::new(1e-8).expect("valid"),
            tau_cross: Tolerance::new(1e-8).expect("valid"),
            amen: LinSolveConfig::with_tol(Tolerance::new(1e-6).expect("valid")),
            rmax: 2048,
            seed: 20_17,
        }
    }

    pub fn validate(&self) -> Result<(), SchemeError> {
        if self.tau_round.value() > self.amen.tol.value() {
            return Err(SchemeError::InvalidConfig(format!(
                "rounding tolerance {} must not exceed solver tolerance {}",
                self.tau_round.value(),
                self.amen.tol.value()
            )));
        }
        Ok(())
    }

    pub(crate) fn cross_config(&self) -> CrossConfig {
        CrossConfig {
            tol: self.tau_cross,
            seed: self.seed,
            rmax: self.rmax,
            ..CrossConfig::default()
        }
    }

    fn round(&self, m: &TtMatrix, capped: &mut bool) -> TtMatrix {
        let (r, c) = m.round_capped(self.tau_round, Some(self.rmax));
        *capped |= c;
        r
    }

    fn round_vec(&self, v: &TtVector, capped: &mut bool) -> TtVector {
        let (r, c) = v.round_capped(self.tau_round, Some(self.rmax));
        *capped |= c;
        r
    }
}

/// Coefficient and source data sampled on the staggered grid, in QTT form.
pub struct DiscretizedProblem {
    pub f: TtVector,
    pub kx_inv: TtVector,
    pub ky_inv: TtVector,
    pub grid: GridSpec,
}

/// Which axis a one-dimensional reduction refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
}

/// The assembled scheme operators.
pub struct OperatorSet {
    pub bx: TtMatrix,
    pub by: TtMatrix,
    pub wx: TtMatrix,
    pub wy: TtMatrix,
    pub rx: TtMatrix,
    pub ry: TtMatrix,
    pub hx: TtMatrix,
    pub hy: TtMatrix,
    pub qx: TtVector,
    pub qy: TtVector,
    /// Set when any intermediate rounding hit the rank cap.
    pub rank_capped: bool,
}

/// Effective ranks and timings recorded by [`solve`].
#[derive(Clone, Copy, Debug, Default)]
pub struct SolveStats {
    pub erank_kx_inv: f64,
    pub erank_ky_inv: f64,
    pub erank_qx: f64,
    pub erank_qy: f64,
    pub erank_hx: f64,
    pub erank_hy: f64,
    pub erank_a: f64,
    pub erank_u: f64,
    /// Max bond rank of `Hx + Hy` before the final rounding.
    pub max_rank_a_pre_round: usize,
    /// Max bond rank of `Hy f` before rounding.
    pub max_rank_rhs_pre_round: usize,
    pub time_discretize_s: f64,
    pub time_assemble_s: f64,
    pub time_solve_s: f64,
    pub time_total_s: f64,
}

/// Solution fields and diagnostics.
pub struct SolutionBundle {
    pub u: TtVector,
    pub ux: TtVector,
    pub uy: TtVector,
    /// Lagrange multiplier of the compatibility constraint (absent for the
    /// finite-difference reference path).
    pub mu: Option<TtVector>,
    pub report: LinSolveReport,
    pub stats: SolveStats,
}

/// Index of the corner node `(i+1) h` nearest to coordinate `a`, ties broken
/// toward the lower index.
pub fn nearest_corner_index(a: f64, grid: &GridSpec) -> u64 {
    let t = a / grid.h() - 1.0;
    let rounded = (t - 0.5).ceil();
    let clamped = rounded.max(0.0).min((grid.n() - 1) as f64);
    clamped as u64
}

/// Samples `f`, `1/kx`, `1/ky` on their staggered grids (Algorithm: corner
/// points for `f`, top-edge midpoints for `kx`, right-edge midpoints for
/// `ky`), each as a QTT vector of length `2^(2d)` with x fast.
pub fn discretize(p: &ProblemSpec, d: u32, cfg: &SchemeConfig) -> Result<DiscretizedProblem, SchemeError> {
    cfg.validate()?;
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
    let kx = p.kx.clone();
    let (kx_inv, rep) = cross::elementwise(move |v| 1.0 / kx(v[0], v[1]), &[&x_c, &y_r], &cross_cfg)?;
    if !rep.converged {
        return Err(SchemeError::CrossNotConverged { stage: "1/kx", error: rep.validation_error });
    }
    let ky = p.ky.clone();
    let (ky_inv, rep) = cross::elementwise(move |v| 1.0 / ky(v[0], v[1]), &[&x_r, &y_c], &cross_cfg)?;
    if !rep.converged {
        return Err(SchemeError::CrossNotConverged { stage: "1/ky", error: rep.validation_error });
    }

    let f = match &p.rhs {
        RightHandSide::Function(func) => {
            let func = func.clone();
            let (f, rep) = cross::elementwise(move |v| func(v[0], v[1]), &[&x_r, &y_r], &cross_cfg)?;
            if !rep.converged {
                return Err(SchemeError::CrossNotConverged { stage: "f", error: rep.validation_error });
            }
            f
        }
        RightHandSide::PointSources(sources) => {
            // Each source becomes weight / h^2 at the nearest corner node.
            let mut acc = TtVector::zeros(&vec![2; 2 * d as usize]);
            for s in sources {
                let i = nearest_corner_index(s.x, &grid);
                let j = nearest_corner_index(s.y, &grid);
                let spike = TtVector::kron(&constructors::delta(d, j)?, &constructors::delta(d, i)?)
                    .scale(s.weight / (h * h));
                acc = acc.add(&spike)?;
            }
            acc.round(cfg.tau_round)
        }
    };

    Ok(DiscretizedProblem { f, kx_inv, ky_inv, grid })
}

/// Sum of a core over its mode values, as a dense `r_left x r_right` matrix.
fn mode_sum(core: &tt_core::Core3) -> faer::Mat<f64> {
    faer::Mat::from_fn(core.r_left(), core.r_right(), |a, b| {
        (0..core.mode()).map(|i| core.get(a, i, b)).sum::<f64>()
    })
}

/// Contracts the reciprocal coefficient over one axis and builds the
/// corresponding projector factor.
///
/// For the x axis the first `d` cores (x bits) are summed away, leaving the
/// length-`2^d` vector `q^-1` over y; the elementwise reciprocal `q` is built
/// by cross interpolation and `W = diag(q) (x) E` places it on the slow
/// factor. The y axis mirrors this: the trailing `d` cores are contracted
/// and `W = E (x) diag(q)` acts on the fast factor.
pub fn build_w(
    axis: Axis,
    k_inv: &TtVector,
    d: u32,
    cfg: &SchemeConfig,
) -> Result<(TtVector, TtMatrix), SchemeError> {
    let cores = k_inv.cores();
    if cores.len() != 2 * d as usize {
        return Err(SchemeError::InvalidConfig(format!(
            "coefficient vector has {} cores, expected {}",
            cores.len(),
            2 * d
        )));
    }
    let d = d as usize;
    let q_inv_cores: Vec<tt_core::Core3> = match axis {
        Axis::X => {
            let mut m = mode_sum(&cores[0]);
            for core in &cores[1..d] {
                let s = mode_sum(core);
                m = &m * &s;
            }
            // fold the 1 x R_d contraction into the first y core
            let folded = &m * cores[d].right_mat();
            let mut out = vec![tt_core::Core3::from_right_mat(folded.as_ref(), 1, cores[d].mode(), cores[d].r_right())];
            out.extend(cores[d + 1..].iter().cloned());
            out
        }
        Axis::Y => {
            let mut m = mode_sum(&cores[2 * d - 1]);
            for core in cores[d..2 * d - 1].iter().rev() {
                let s = mode_sum(core);
                m = &s * &m;
            }
            // fold the R_d x 1 contraction into the last x core
            let folded = cores[d - 1].left_mat() * &m;
            let mut out: Vec<tt_core::Core3> = cores[..d - 1].to_vec();
            out.push(tt_core::Core3::from_left_mat(folded.as_ref(), cores[d - 1].r_left(), cores[d - 1].mode(), 1));
            out
        }
    };
    let q_inv = TtVector::from_cores(q_inv_cores)?;
    let cross_cfg = cfg.cross_config();
    let (q, rep) = cross::elementwise(|v| 1.0 / v[0], &[&q_inv], &cross_cfg)?;
    if !rep.converged {
        let stage = match axis {
            Axis::X => "qx",
            Axis::Y => "qy",
        };
        return Err(SchemeError::CrossNotConverged { stage, error: rep.validation_error });
    }
    let e_mat = constructors::ones_matrix(d as u32)?;
    let q_diag = TtMatrix::diag(&q);
    let w = match axis {
        Axis::X => TtMatrix::kron(&q_diag, &e_mat).round(cfg.tau_round),
        Axis::Y => TtMatrix::kron(&e_mat, &q_diag).round(cfg.tau_round),
    };
    Ok((q, w))
}

/// Assembles all scheme operators with rounding after every product or sum.
pub fn assemble_operators(dp: &DiscretizedProblem, cfg: &SchemeConfig) -> Result<OperatorSet, SchemeError> {
    cfg.validate()?;
    let d = dp.grid.d();
    let mut capped = false;

    let b = constructors::volterra(d)?;
    let i_d = constructors::eye(d)?;
    let i_2d = constructors::eye(2 * d)?;
    let bx = TtMatrix::kron(&i_d, &b);
    let by = TtMatrix::kron(&b, &i_d);

    let (qx, wx) = build_w(Axis::X, &dp.kx_inv, d, cfg)?;
    let (qy, wy) = build_w(Axis::Y, &dp.ky_inv, d, cfg)?;

    let kx_inv_m = TtMatrix::diag(&dp.kx_inv);
    let ky_inv_m = TtMatrix::diag(&dp.ky_inv);

    let assemble_axis = |b_axis: &TtMatrix, w: &TtMatrix, k_inv_m: &TtMatrix, capped: &mut bool| -> Result<(TtMatrix, TtMatrix), SchemeError> {
        let t1 = cfg.round(&w.matmul(k_inv_m)?, capped);
        let t2 = cfg.round(&TtMatrix::axpby(1.0, &i_2d, -1.0, &t1)?, capped);
        let t3 = cfg.round(&k_inv_m.matmul(&t2)?, capped);
        let r = cfg.round(&t3.matmul(&b_axis.transpose())?, capped);
        let h = cfg.round(&b_axis.matmul(&r)?, capped);
        Ok((r, h))
    };
    let (rx, hx) = assemble_axis(&bx, &wx, &kx_inv_m, &mut capped)?;
    let (ry, hy) = assemble_axis(&by, &wy, &ky_inv_m, &mut capped)?;

    Ok(OperatorSet { bx, by, wx, wy, rx, ry, hx, hy, qx, qy, rank_capped: capped })
}

/// Full pipeline: discretize, assemble, solve for the multiplier, recover
/// the solution and both derivatives. Solver non-convergence is reported in
/// the bundle, not raised.
pub fn solve(p: &ProblemSpec, d: u32, cfg: &SchemeConfig) -> Result<SolutionBundle, SchemeError> {
    cfg.validate()?;
    let t_start = Instant::now();
    let dp = discretize(p, d, cfg)?;
    let time_discretize_s = t_start.elapsed().as_secs_f64();

    let t_asm = Instant::now();
    let ops = assemble_operators(&dp, cfg)?;
    let mut capped = ops.rank_capped;
    let max_rank_a_pre_round = ops
        .hx
        .ranks()
        .iter()
        .zip(ops.hy.ranks())
        .map(|(a, b)| a + b)
        .max()
        .unwrap_or(1);
    let a = cfg.round(&ops.hx.add(&ops.hy)?, &mut capped);
    let max_rank_rhs_pre_round = ops
        .hy
        .ranks()
        .iter()
        .zip(dp.f.ranks())
        .map(|(a, b)| a * b)
        .max()
        .unwrap_or(1);
    let rhs = cfg.round_vec(&ops.hy.matvec(&dp.f)?, &mut capped);
    let time_assemble_s = t_asm.elapsed().as_secs_f64();

    let t_solve = Instant::now();
    let mut amen_cfg = cfg.amen.clone();
    amen_cfg.rmax = amen_cfg.rmax.min(cfg.rmax);
    let (mu, report) = amen_solve(&a, &rhs, &amen_cfg, None)?;
    let mu_compact = cfg.round_vec(&mu, &mut capped);
    let ux = cfg.round_vec(&ops.rx.matvec(&mu_compact)?, &mut capped);
    let f_minus_mu = cfg.round_vec(&TtVector::axpby(1.0, &dp.f, -1.0, &mu_compact)?, &mut capped);
    let uy = cfg.round_vec(&ops.ry.matvec(&f_minus_mu)?, &mut capped);
    let u = cfg.round_vec(&ops.bx.matvec(&ux)?, &mut capped);
    let time_solve_s = t_solve.elapsed().as_secs_f64();

    let stats = SolveStats {
        erank_kx_inv: dp.kx_inv.erank(),
        erank_ky_inv: dp.ky_inv.erank(),
        erank_qx: ops.qx.erank(),
        erank_qy: ops.qy.erank(),
        erank_hx: ops.hx.erank(),
        erank_hy: ops.hy.erank(),
        erank_a: a.erank(),
        erank_u: u.erank(),
        max_rank_a_pre_round,
        max_rank_rhs_pre_round,
        time_discretize_s,
        time_assemble_s,
        time_solve_s,
        time_total_s: t_start.elapsed().as_secs_f64(),
    };
    Ok(SolutionBundle { u, ux, uy, mu: Some(mu), report, stats })
}

/// Discrete energy functional `h^2 (u, f)` (rectangular quadrature on cell
/// corners).
pub fn energy(u: &TtVector, f: &TtVector, grid: &GridSpec) -> Result<f64, SchemeError> {
    let h = grid.h();
    Ok(u.dot(f)? * h * h)
}

/// Eliminates the leading `h^2` error term from two consecutive levels
/// (`j_half` computed with half the step of `j_h`).
pub fn richardson(j_h: f64, j_half: f64) -> f64 {
    (4.0 * j_half - j_h) / 3.0
}
