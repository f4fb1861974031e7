//! Problem descriptions: diffusion coefficients, right-hand sides, and the
//! three built-in presets used by the experiment runner.

use std::f64::consts::PI;
use std::sync::Arc;

/// Scalar field on the unit square.
pub type ScalarFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PointSource {
    pub x: f64,
    pub y: f64,
    pub weight: f64,
}

#[derive(Clone)]
pub enum RightHandSide {
    Function(ScalarFn),
    PointSources(Vec<PointSource>),
}

/// A diffusion problem `-div(K grad u) = f` on `[0,1]^2` with homogeneous
/// Dirichlet boundary and diagonal coefficient `K = diag(kx, ky)`.
///
/// Both coefficients must stay bounded away from zero on the closed square:
/// their reciprocals are formed during discretization.
#[derive(Clone)]
pub struct ProblemSpec {
    pub name: String,
    pub kx: ScalarFn,
    pub ky: ScalarFn,
    pub rhs: RightHandSide,
}

impl ProblemSpec {
    /// Scalar-coefficient shorthand: the same `k` for both axes.
    pub fn with_scalar_coefficient(name: impl Into<String>, k: ScalarFn, rhs: RightHandSide) -> Self {
        ProblemSpec { name: name.into(), kx: k.clone(), ky: k, rhs }
    }

    /// Manufactured problem with the exact solution
    /// `u = sin(w1 x^2) sin(w2 y)`, `w1 = pi`, `w2 = 2 pi`,
    /// and coefficient `k = 1 + x y^2`.
    pub fn analytic() -> Self {
        Self::with_scalar_coefficient(
            "analytic",
            Arc::new(analytic::coefficient),
            RightHandSide::Function(Arc::new(analytic::rhs)),
        )
    }

    /// Same coefficient, uniform unit source.
    pub fn constant_rhs() -> Self {
        Self::with_scalar_coefficient(
            "constant-rhs",
            Arc::new(analytic::coefficient),
            RightHandSide::Function(Arc::new(|_, _| 1.0)),
        )
    }

    /// Same coefficient, four unit point sources.
    pub fn point_sources() -> Self {
        let sources = [(0.2, 0.2), (0.8, 0.2), (0.2, 0.8), (0.8, 0.8)]
            .iter()
            .map(|&(x, y)| PointSource { x, y, weight: 1.0 })
            .collect();
        Self::with_scalar_coefficient(
            "point-sources",
            Arc::new(analytic::coefficient),
            RightHandSide::PointSources(sources),
        )
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "analytic" => Some(Self::analytic()),
            "constant-rhs" => Some(Self::constant_rhs()),
            "point-sources" => Some(Self::point_sources()),
            _ => None,
        }
    }

    pub fn is_analytic(&self) -> bool {
        self.name == "analytic"
    }
}

/// Closed forms of the manufactured problem.
pub mod analytic {
    use super::PI;

    pub const W1: f64 = PI;
    pub const W2: f64 = 2.0 * PI;

    pub fn coefficient(x: f64, y: f64) -> f64 {
        1.0 + x * y * y
    }

    /// Exact solution.
    pub fn solution(x: f64, y: f64) -> f64 {
        (W1 * x * x).sin() * (W2 * y).sin()
    }

    /// Exact x-derivative of the solution.
    pub fn solution_dx(x: f64, y: f64) -> f64 {
        2.0 * W1 * x * (W1 * x * x).cos() * (W2 * y).sin()
    }

    /// Exact y-derivative of the solution.
    pub fn solution_dy(x: f64, y: f64) -> f64 {
        W2 * (W1 * x * x).sin() * (W2 * y).cos()
    }

    /// Source term consistent with `-div(k grad u) = f`.
    pub fn rhs(x: f64, y: f64) -> f64 {
        let s1 = (W1 * x * x).sin();
        let c1 = (W1 * x * x).cos();
        let s2 = (W2 * y).sin();
        let c2 = (W2 * y).cos();
        (4.0 * W1 * W1 * x * x + W2 * W2) * (1.0 + x * y * y) * s1 * s2
            - 2.0 * W1 * (1.0 + 2.0 * x * y * y) * c1 * s2
            - 2.0 * W2 * x * y * s1 * c2
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rhs_is_consistent_with_solution() {
        // central-difference check of -div(k grad u) = f at interior points
        let e = 1e-5;
        for &(x, y) in &[(0.3, 0.4), (0.7, 0.2), (0.55, 0.85)] {
            let flux_x = |x: f64, y: f64| analytic::coefficient(x, y) * analytic::solution_dx(x, y);
            let flux_y = |x: f64, y: f64| analytic::coefficient(x, y) * analytic::solution_dy(x, y);
            let div = (flux_x(x + e, y) - flux_x(x - e, y)) / (2.0 * e)
                + (flux_y(x, y + e) - flux_y(x, y - e)) / (2.0 * e);
            let f = analytic::rhs(x, y);
            assert!((-div - f).abs() < 1e-5 * f.abs().max(1.0), "mismatch at ({x}, {y}): {} vs {f}", -div);
        }
    }

    #[test]
    fn solution_vanishes_on_boundary() {
        for t in [0.0, 0.3, 0.77, 1.0] {
            assert!(analytic::solution(0.0, t).abs() < 1e-15);
            assert!(analytic::solution(1.0, t).abs() < 1e-12);
            assert!(analytic::solution(t, 0.0).abs() < 1e-15);
            assert!(analytic::solution(t, 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn presets_resolve_by_name() {
        assert!(ProblemSpec::preset("analytic").is_some());
        assert!(ProblemSpec::preset("constant-rhs").is_some());
        assert!(ProblemSpec::preset("point-sources").is_some());
        assert!(ProblemSpec::preset("unknown").is_none());
    }
}
