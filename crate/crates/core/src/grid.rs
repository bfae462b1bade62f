//! Uniform grid on \[0,1\] and the discrete calculus every solver shares:
//! first and second s-derivatives, trapezoidal integration, and tridiagonal
//! linear solves (Thomas elimination, plus a Sherman-Morrison cyclic variant
//! for the periodic family).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tension::BoundaryFamily;

pub type Vec3 = nalgebra::Vector3<f64>;

/// Uniform discretization of s in \[0,1\]: nodes s_i = i/(n-1).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid1D {
    n_nodes: usize,
}

impl Grid1D {
    pub fn new(n_nodes: usize) -> Result<Self> {
        if n_nodes < 3 {
            return Err(Error::TooFewNodes(n_nodes));
        }
        Ok(Grid1D { n_nodes })
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    /// Node spacing h = 1/(n-1).
    pub fn spacing(&self) -> f64 {
        1.0 / (self.n_nodes - 1) as f64
    }

    /// Coordinate of node i; s_0 = 0 and s_{n-1} = 1 exactly.
    pub fn node(&self, i: usize) -> f64 {
        i as f64 / (self.n_nodes - 1) as f64
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_nodes).map(move |i| self.node(i))
    }
}

/// Nodal field of scalars on a [`Grid1D`].
#[derive(Clone, Debug, PartialEq)]
pub struct FieldScalar {
    grid: Grid1D,
    values: Vec<f64>,
}

/// Nodal field of vectors in R^3 on a [`Grid1D`].
#[derive(Clone, Debug, PartialEq)]
pub struct Field3 {
    grid: Grid1D,
    values: Vec<Vec3>,
}

impl FieldScalar {
    pub fn zeros(grid: Grid1D) -> Self {
        FieldScalar {
            grid,
            values: vec![0.0; grid.n_nodes()],
        }
    }

    pub fn from_fn(grid: Grid1D, f: impl Fn(f64) -> f64) -> Self {
        FieldScalar {
            grid,
            values: grid.nodes().map(f).collect(),
        }
    }

    pub fn from_values(grid: Grid1D, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_nodes() {
            return Err(Error::LengthMismatch {
                expected: grid.n_nodes(),
                got: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "scalar field",
                node: i,
            });
        }
        Ok(FieldScalar { grid, values })
    }

    pub fn grid(&self) -> Grid1D {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Second-order first derivative; periodic wrap for the ring family,
    /// one-sided three-point stencils at the ends otherwise.
    pub fn derivative_s(&self, bc: BoundaryFamily) -> FieldScalar {
        let out = derivative_impl(&self.values, self.grid, bc);
        FieldScalar {
            grid: self.grid,
            values: out,
        }
    }

    /// Second-order second derivative; one-sided four-point stencils at the
    /// ends (three-point fallback on the minimal grid), periodic wrap for
    /// the ring family.
    pub fn second_derivative_s(&self, bc: BoundaryFamily) -> FieldScalar {
        let out = second_derivative_impl(&self.values, self.grid, bc);
        FieldScalar {
            grid: self.grid,
            values: out,
        }
    }
}

impl Field3 {
    pub fn zeros(grid: Grid1D) -> Self {
        Field3 {
            grid,
            values: vec![Vec3::zeros(); grid.n_nodes()],
        }
    }

    pub fn from_fn(grid: Grid1D, f: impl Fn(f64) -> Vec3) -> Self {
        Field3 {
            grid,
            values: grid.nodes().map(f).collect(),
        }
    }

    pub fn from_values(grid: Grid1D, values: Vec<Vec3>) -> Result<Self> {
        if values.len() != grid.n_nodes() {
            return Err(Error::LengthMismatch {
                expected: grid.n_nodes(),
                got: values.len(),
            });
        }
        if let Some(i) = values
            .iter()
            .position(|v| !(v.x.is_finite() && v.y.is_finite() && v.z.is_finite()))
        {
            return Err(Error::NonFinite {
                what: "vector field",
                node: i,
            });
        }
        Ok(Field3 { grid, values })
    }

    pub fn grid(&self) -> Grid1D {
        self.grid
    }

    pub fn values(&self) -> &[Vec3] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Vec3] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.norm()))
    }

    pub fn is_finite(&self) -> bool {
        self.values
            .iter()
            .all(|v| v.x.is_finite() && v.y.is_finite() && v.z.is_finite())
    }

    /// Componentwise map, preserving the grid.
    pub fn map(&self, f: impl Fn(Vec3) -> Vec3) -> Field3 {
        Field3 {
            grid: self.grid,
            values: self.values.iter().map(|v| f(*v)).collect(),
        }
    }

    /// Nodewise scalar reduction, e.g. |.|^2 or a dot with another field.
    pub fn map_scalar(&self, f: impl Fn(Vec3) -> f64) -> FieldScalar {
        FieldScalar {
            grid: self.grid,
            values: self.values.iter().map(|v| f(*v)).collect(),
        }
    }

    pub fn derivative_s(&self, bc: BoundaryFamily) -> Field3 {
        let out = derivative_impl(&self.values, self.grid, bc);
        Field3 {
            grid: self.grid,
            values: out,
        }
    }

    pub fn second_derivative_s(&self, bc: BoundaryFamily) -> Field3 {
        let out = second_derivative_impl(&self.values, self.grid, bc);
        Field3 {
            grid: self.grid,
            values: out,
        }
    }

    /// L2(0,1) norm via trapezoidal quadrature of |.|^2.
    pub fn l2_norm(&self) -> f64 {
        integrate_s(&self.map_scalar(|v| v.norm_squared()))
            .max(0.0)
            .sqrt()
    }
}

trait Linear: Copy {
    fn zero() -> Self;
    fn sub(self, other: Self) -> Self;
    fn add(self, other: Self) -> Self;
    fn scale(self, c: f64) -> Self;
}

impl Linear for f64 {
    fn zero() -> Self {
        0.0
    }
    fn sub(self, other: Self) -> Self {
        self - other
    }
    fn add(self, other: Self) -> Self {
        self + other
    }
    fn scale(self, c: f64) -> Self {
        self * c
    }
}

impl Linear for Vec3 {
    fn zero() -> Self {
        Vec3::zeros()
    }
    fn sub(self, other: Self) -> Self {
        self - other
    }
    fn add(self, other: Self) -> Self {
        self + other
    }
    fn scale(self, c: f64) -> Self {
        self * c
    }
}

fn derivative_impl<T: Linear>(values: &[T], grid: Grid1D, bc: BoundaryFamily) -> Vec<T> {
    let n = values.len();
    let h = grid.spacing();
    let mut out = vec![T::zero(); n];
    if bc == BoundaryFamily::Periodic {
        // Node n-1 duplicates node 0; the wrap acts on the n-1 distinct nodes.
        let m = n - 1;
        for i in 0..m {
            let ip = (i + 1) % m;
            let im = (i + m - 1) % m;
            out[i] = values[ip].sub(values[im]).scale(1.0 / (2.0 * h));
        }
        out[n - 1] = out[0];
        return out;
    }
    for i in 1..n - 1 {
        out[i] = values[i + 1].sub(values[i - 1]).scale(1.0 / (2.0 * h));
    }
    // One-sided second-order ends.
    out[0] = values[1]
        .scale(4.0)
        .sub(values[2])
        .sub(values[0].scale(3.0))
        .scale(1.0 / (2.0 * h));
    out[n - 1] = values[n - 1]
        .scale(3.0)
        .sub(values[n - 2].scale(4.0))
        .add(values[n - 3])
        .scale(1.0 / (2.0 * h));
    out
}

fn second_derivative_impl<T: Linear>(values: &[T], grid: Grid1D, bc: BoundaryFamily) -> Vec<T> {
    let n = values.len();
    let h = grid.spacing();
    let h2 = h * h;
    let mut out = vec![T::zero(); n];
    if bc == BoundaryFamily::Periodic {
        let m = n - 1;
        for i in 0..m {
            let ip = (i + 1) % m;
            let im = (i + m - 1) % m;
            out[i] = values[ip]
                .add(values[im])
                .sub(values[i].scale(2.0))
                .scale(1.0 / h2);
        }
        out[n - 1] = out[0];
        return out;
    }
    for i in 1..n - 1 {
        out[i] = values[i + 1]
            .add(values[i - 1])
            .sub(values[i].scale(2.0))
            .scale(1.0 / h2);
    }
    if n >= 4 {
        // 4-point one-sided stencils, second order at the boundary.
        out[0] = values[0]
            .scale(2.0)
            .sub(values[1].scale(5.0))
            .add(values[2].scale(4.0))
            .sub(values[3])
            .scale(1.0 / h2);
        out[n - 1] = values[n - 1]
            .scale(2.0)
            .sub(values[n - 2].scale(5.0))
            .add(values[n - 3].scale(4.0))
            .sub(values[n - 4])
            .scale(1.0 / h2);
    } else {
        out[0] = out[1];
        out[n - 1] = out[1];
    }
    out
}

/// Trapezoidal rule on \[0,1\]; exact for linear integrands.
pub fn integrate_s(f: &FieldScalar) -> f64 {
    let v = f.values();
    let h = f.grid().spacing();
    let interior: f64 = v[1..v.len() - 1].iter().sum();
    h * (interior + 0.5 * (v[0] + v[v.len() - 1]))
}

/// Space-time trapezoid of scalar samples at (not necessarily uniform) times.
pub fn integrate_st(times: &[f64], space_integrals: &[f64]) -> f64 {
    assert_eq!(times.len(), space_integrals.len());
    let mut acc = 0.0;
    for k in 1..times.len() {
        acc += 0.5 * (times[k] - times[k - 1]) * (space_integrals[k] + space_integrals[k - 1]);
    }
    acc
}

/// Thomas elimination for a general tridiagonal system.
///
/// `lower[i]` multiplies x\[i-1\] in row i (lower\[0\] unused), `upper[i]`
/// multiplies x\[i+1\] (upper\[n-1\] unused). A vanishing pivot reports a
/// singular system with the offending row.
pub fn solve_tridiagonal(
    lower: &[f64],
    diag: &[f64],
    upper: &[f64],
    rhs: &[f64],
) -> Result<Vec<f64>> {
    let n = diag.len();
    assert!(n > 0 && lower.len() == n && upper.len() == n && rhs.len() == n);
    let scale = diag
        .iter()
        .chain(lower.iter())
        .chain(upper.iter())
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = 1e-14 * scale.max(f64::MIN_POSITIVE);

    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut pivot = diag[0];
    if pivot.abs() <= tol || !pivot.is_finite() {
        return Err(Error::SingularSystem {
            pivot: 0,
            null_direction: None,
        });
    }
    c[0] = upper[0] / pivot;
    d[0] = rhs[0] / pivot;
    for i in 1..n {
        pivot = diag[i] - lower[i] * c[i - 1];
        if pivot.abs() <= tol || !pivot.is_finite() {
            return Err(Error::SingularSystem {
                pivot: i,
                null_direction: None,
            });
        }
        if i < n - 1 {
            c[i] = upper[i] / pivot;
        }
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / pivot;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    Ok(x)
}

/// Cyclic tridiagonal solve via Sherman-Morrison on top of Thomas.
///
/// Row i couples x\[(i-1) mod n\] (lower), x\[i\] (diag), x\[(i+1) mod n\] (upper);
/// `lower[0]` and `upper[n-1]` are the wrap-around corners.
pub fn solve_cyclic_tridiagonal(
    lower: &[f64],
    diag: &[f64],
    upper: &[f64],
    rhs: &[f64],
) -> Result<Vec<f64>> {
    let n = diag.len();
    assert!(n >= 3 && lower.len() == n && upper.len() == n && rhs.len() == n);
    let alpha = lower[0]; // A[0][n-1]
    let beta = upper[n - 1]; // A[n-1][0]
    if alpha == 0.0 && beta == 0.0 {
        return solve_tridiagonal(lower, diag, upper, rhs);
    }
    let gamma = -diag[0];
    let mut dmod = diag.to_vec();
    dmod[0] = diag[0] - gamma;
    dmod[n - 1] = diag[n - 1] - alpha * beta / gamma;
    let y = solve_tridiagonal(lower, &dmod, upper, rhs)?;
    let mut u = vec![0.0; n];
    u[0] = gamma;
    u[n - 1] = beta;
    let z = solve_tridiagonal(lower, &dmod, upper, &u)?;
    let frac = (y[0] + alpha * y[n - 1] / gamma) / (1.0 + z[0] + alpha * z[n - 1] / gamma);
    if !frac.is_finite() {
        return Err(Error::SingularSystem {
            pivot: n - 1,
            null_direction: None,
        });
    }
    Ok((0..n).map(|i| y[i] - frac * z[i]).collect())
}

/// Residual check ||Ax - b||_inf for a (possibly cyclic) tridiagonal system.
pub fn tridiagonal_residual(
    lower: &[f64],
    diag: &[f64],
    upper: &[f64],
    rhs: &[f64],
    x: &[f64],
    cyclic: bool,
) -> f64 {
    let n = diag.len();
    let mut r = 0.0f64;
    for i in 0..n {
        let xm = if i == 0 {
            if cyclic {
                x[n - 1]
            } else {
                0.0
            }
        } else {
            x[i - 1]
        };
        let xp = if i == n - 1 {
            if cyclic {
                x[0]
            } else {
                0.0
            }
        } else {
            x[i + 1]
        };
        let lo = if i == 0 && !cyclic { 0.0 } else { lower[i] };
        let up = if i == n - 1 && !cyclic { 0.0 } else { upper[i] };
        r = r.max((lo * xm + diag[i] * x[i] + up * xp - rhs[i]).abs());
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid(n: usize) -> Grid1D {
        Grid1D::new(n).unwrap()
    }

    #[test]
    fn too_few_nodes_rejected() {
        assert!(matches!(Grid1D::new(2), Err(Error::TooFewNodes(2))));
        assert!(Grid1D::new(3).is_ok());
    }

    #[test]
    fn nodes_cover_unit_interval_exactly() {
        let g = grid(101);
        assert_eq!(g.node(0), 0.0);
        assert_eq!(g.node(100), 1.0);
        assert!((g.spacing() - 0.01).abs() < 1e-15);
    }

    #[test]
    fn derivative_exact_on_linear() {
        let g = grid(17);
        let f = FieldScalar::from_fn(g, |s| s);
        let d = f.derivative_s(BoundaryFamily::Whip);
        for v in d.values() {
            assert!((v - 1.0).abs() < 1e-13, "got {v}");
        }
    }

    #[test]
    fn derivative_quadratic_second_order() {
        let g = grid(101);
        let f = FieldScalar::from_fn(g, |s| s * s);
        let d = f.derivative_s(BoundaryFamily::TwoFree);
        let h = g.spacing();
        let err = g
            .nodes()
            .zip(d.values())
            .map(|(s, v)| (v - 2.0 * s).abs())
            .fold(0.0f64, f64::max);
        assert!(err <= 10.0 * h * h, "err {err} vs {}", 10.0 * h * h);
    }

    #[test]
    fn derivative_constant_vector_is_zero() {
        let g = grid(11);
        let f = Field3::from_fn(g, |_| Vec3::new(1.0, -2.0, 3.0));
        let d = f.derivative_s(BoundaryFamily::Whip);
        assert!(d.max_norm() < 1e-12);
    }

    #[test]
    fn periodic_derivative_wraps() {
        let g = grid(65);
        let f = FieldScalar::from_fn(g, |s| (2.0 * std::f64::consts::PI * s).sin());
        let d = f.derivative_s(BoundaryFamily::Periodic);
        // endpoints identified
        assert_eq!(d.values()[0], d.values()[64]);
        let tau = 2.0 * std::f64::consts::PI;
        let err = g
            .nodes()
            .zip(d.values())
            .map(|(s, v)| (v - tau * (tau * s).cos()).abs())
            .fold(0.0f64, f64::max);
        assert!(err < 10.0 * tau * g.spacing() * g.spacing() * tau * tau);
    }

    #[test]
    fn integrate_constant_and_linear_exact() {
        let g = grid(101);
        assert!((integrate_s(&FieldScalar::from_fn(g, |_| 1.0)) - 1.0).abs() < 1e-14);
        assert!((integrate_s(&FieldScalar::from_fn(g, |s| s)) - 0.5).abs() < 1e-14);
    }

    #[test]
    fn integrate_quadratic_h2() {
        let g = grid(101);
        let h = g.spacing();
        let v = integrate_s(&FieldScalar::from_fn(g, |s| s * s));
        assert!(
            (v - 1.0 / 3.0).abs() <= h * h,
            "err {}",
            (v - 1.0 / 3.0).abs()
        );
    }

    #[test]
    fn fundamental_theorem_of_calculus() {
        let g = grid(201);
        let f = FieldScalar::from_fn(g, |s| (3.0 * s).sin() + s * s);
        let d = f.derivative_s(BoundaryFamily::TwoFree);
        let lhs = integrate_s(&d);
        let rhs = f.values()[200] - f.values()[0];
        let h = g.spacing();
        assert!(
            (lhs - rhs).abs() < 30.0 * h * h,
            "defect {}",
            (lhs - rhs).abs()
        );
    }

    #[test]
    fn tridiagonal_identity() {
        let n = 7;
        let r: Vec<f64> = (0..n).map(|i| i as f64 - 3.0).collect();
        let x = solve_tridiagonal(&vec![0.0; n], &vec![1.0; n], &vec![0.0; n], &r).unwrap();
        assert_eq!(x, r);
    }

    #[test]
    fn tridiagonal_poisson_dirichlet() {
        // -u'' = pi^2 sin(pi s), u(0)=u(1)=0  =>  u = sin(pi s)
        let g = grid(101);
        let n = g.n_nodes();
        let h = g.spacing();
        let mut lower = vec![-1.0 / (h * h); n];
        let mut diag = vec![2.0 / (h * h); n];
        let mut upper = vec![-1.0 / (h * h); n];
        let mut rhs: Vec<f64> = g
            .nodes()
            .map(|s| std::f64::consts::PI.powi(2) * (std::f64::consts::PI * s).sin())
            .collect();
        diag[0] = 1.0;
        upper[0] = 0.0;
        rhs[0] = 0.0;
        diag[n - 1] = 1.0;
        lower[n - 1] = 0.0;
        rhs[n - 1] = 0.0;
        let x = solve_tridiagonal(&lower, &diag, &upper, &rhs).unwrap();
        let err = g
            .nodes()
            .zip(&x)
            .map(|(s, v)| (v - (std::f64::consts::PI * s).sin()).abs())
            .fold(0.0f64, f64::max);
        assert!(err <= 10.0 * h * h, "err {err}");
    }

    #[test]
    fn tridiagonal_zero_pivot_is_singular() {
        // Second row becomes 0 after elimination: [[1,1],[1,1]] embedded in 3x3.
        let lower = vec![0.0, 1.0, 0.0];
        let diag = vec![1.0, 1.0, 1.0];
        let upper = vec![1.0, 0.0, 0.0];
        let rhs = vec![1.0, 2.0, 3.0];
        match solve_tridiagonal(&lower, &diag, &upper, &rhs) {
            Err(Error::SingularSystem { pivot, .. }) => assert_eq!(pivot, 1),
            other => panic!("expected singular system, got {other:?}"),
        }
    }

    #[test]
    fn cyclic_solve_matches_dense_residual() {
        let n = 12;
        let lower: Vec<f64> = (0..n).map(|i| -1.0 - 0.01 * i as f64).collect();
        let upper: Vec<f64> = (0..n).map(|i| -1.0 + 0.02 * i as f64).collect();
        let diag: Vec<f64> = (0..n).map(|i| 4.0 + 0.1 * i as f64).collect();
        let rhs: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let x = solve_cyclic_tridiagonal(&lower, &diag, &upper, &rhs).unwrap();
        let r = tridiagonal_residual(&lower, &diag, &upper, &rhs, &x, true);
        assert!(r < 1e-10, "residual {r}");
    }

    proptest! {
        #[test]
        fn derivative_is_linear(a in -3.0f64..3.0, b in -3.0f64..3.0) {
            let g = grid(41);
            let f1 = FieldScalar::from_fn(g, |s| (5.0 * s).cos());
            let f2 = FieldScalar::from_fn(g, |s| s * s * s - s);
            let combo = FieldScalar::from_values(
                g,
                f1.values().iter().zip(f2.values()).map(|(x, y)| a * x + b * y).collect(),
            ).unwrap();
            let lhs = combo.derivative_s(BoundaryFamily::TwoFree);
            let d1 = f1.derivative_s(BoundaryFamily::TwoFree);
            let d2 = f2.derivative_s(BoundaryFamily::TwoFree);
            for i in 0..g.n_nodes() {
                let want = a * d1.values()[i] + b * d2.values()[i];
                prop_assert!((lhs.values()[i] - want).abs() < 1e-9 * (1.0 + want.abs()));
            }
        }

        #[test]
        fn tridiagonal_solve_reproduces_rhs(seed in 0u64..1000) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let n = 40;
            let mut lower = vec![0.0; n];
            let mut upper = vec![0.0; n];
            let mut diag = vec![0.0; n];
            let mut rhs = vec![0.0; n];
            for i in 0..n {
                lower[i] = rng.gen_range(-1.0..1.0);
                upper[i] = rng.gen_range(-1.0..1.0);
                // keep it diagonally dominant
                diag[i] = 3.0 + rng.gen_range(0.0..1.0);
                rhs[i] = rng.gen_range(-5.0..5.0);
            }
            let x = solve_tridiagonal(&lower, &diag, &upper, &rhs).unwrap();
            let r = tridiagonal_residual(&lower, &diag, &upper, &rhs, &x, false);
            let bnorm = rhs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            prop_assert!(r <= 1e-10 * bnorm.max(1.0), "residual {r}");
        }
    }
}
