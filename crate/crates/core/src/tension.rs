//! The tension two-point boundary value problem
//!
//! ```text
//! sigma_ss - |eta_ss|^2 sigma + |eta_st|^2 = 0
//! ```
//!
//! assembled and solved under each boundary-condition family, plus the
//! initial-tension problem built from (alpha, beta) and the non-negativity
//! check behind the maximum-principle battery.
//!
//! Neumann data at fixed ends is sigma_s = -g . eta_s, which follows from the
//! tangential component of the momentum balance when the end is pinned. All
//! boundary rows are second order (ghost nodes).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{
    integrate_s, solve_cyclic_tridiagonal, solve_tridiagonal, tridiagonal_residual, Field3,
    FieldScalar, Grid1D, Vec3,
};

/// The four boundary-condition families of the string problem.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryFamily {
    /// Both ends pinned to their initial positions.
    TwoFixed,
    /// sigma = 0 at both ends.
    TwoFree,
    /// Ring: all fields 1-periodic in s.
    Periodic,
    /// Free end at s = 0 (sigma = 0), fixed end at s = 1 (eta pinned).
    Whip,
}

impl BoundaryFamily {
    pub fn tag(&self) -> &'static str {
        match self {
            BoundaryFamily::TwoFixed => "two_fixed",
            BoundaryFamily::TwoFree => "two_free",
            BoundaryFamily::Periodic => "periodic",
            BoundaryFamily::Whip => "whip",
        }
    }
}

/// Coefficients of one tension solve: the squared-curvature reaction term,
/// the squared-strain-rate source, the family, gravity, and the boundary
/// tangents supplying Neumann data at fixed ends.
#[derive(Clone, Debug)]
pub struct TensionProblem {
    pub eta_ss_sq: FieldScalar,
    pub eta_st_sq: FieldScalar,
    pub bc: BoundaryFamily,
    pub g: Vec3,
    /// Tangents eta_s at s = 0 and s = 1.
    pub eta_s_ends: (Vec3, Vec3),
}

impl TensionProblem {
    fn validate(&self, grid: Grid1D) -> Result<()> {
        for (what, f) in [
            ("eta_ss_sq", &self.eta_ss_sq),
            ("eta_st_sq", &self.eta_st_sq),
        ] {
            if f.grid() != grid {
                return Err(Error::LengthMismatch {
                    expected: grid.n_nodes(),
                    got: f.len(),
                });
            }
            if let Some(i) = f.values().iter().position(|v| *v < 0.0 || !v.is_finite()) {
                return Err(Error::Validation {
                    issues: vec![format!("{what} must be finite and non-negative (node {i})")],
                });
            }
        }
        Ok(())
    }
}

/// Solve the discrete tension BVP. The solution satisfies the boundary rows
/// of the family exactly and the interior rows to the solver's residual
/// (checked, <= 1e-9 relative).
pub fn solve_tension(problem: &TensionProblem, grid: Grid1D) -> Result<FieldScalar> {
    problem.validate(grid)?;
    let n = grid.n_nodes();
    let h = grid.spacing();
    let h2 = h * h;
    let q = problem.eta_ss_sq.values();
    let f = problem.eta_st_sq.values();

    if problem.bc == BoundaryFamily::Periodic {
        return solve_periodic(grid, q, f);
    }

    let mut lower = vec![0.0; n];
    let mut diag = vec![0.0; n];
    let mut upper = vec![0.0; n];
    let mut rhs = vec![0.0; n];
    for i in 1..n - 1 {
        lower[i] = -1.0 / h2;
        diag[i] = 2.0 / h2 + q[i];
        upper[i] = -1.0 / h2;
        rhs[i] = f[i];
    }

    // Neumann data sigma_s = -g . eta_s at fixed ends.
    let b0 = -problem.g.dot(&problem.eta_s_ends.0);
    let b1 = -problem.g.dot(&problem.eta_s_ends.1);

    match problem.bc {
        BoundaryFamily::TwoFree => {
            diag[0] = 1.0;
            rhs[0] = 0.0;
            diag[n - 1] = 1.0;
            lower[n - 1] = 0.0;
        }
        BoundaryFamily::Whip => {
            diag[0] = 1.0;
            rhs[0] = 0.0;
            // ghost node: sigma_n = sigma_{n-2} + 2 h b1
            lower[n - 1] = -2.0 / h2;
            diag[n - 1] = 2.0 / h2 + q[n - 1];
            rhs[n - 1] = f[n - 1] + 2.0 * b1 / h;
        }
        BoundaryFamily::TwoFixed => {
            // Pure Neumann; singular when the reaction term vanishes
            // identically (straight string). Report the null direction.
            let qmax = q.iter().fold(0.0f64, |m, v| m.max(*v));
            if qmax <= 1e-12 {
                let c = 1.0 / (n as f64).sqrt();
                return Err(Error::SingularSystem {
                    pivot: n - 1,
                    null_direction: Some(vec![c; n]),
                });
            }
            upper[0] = -2.0 / h2;
            diag[0] = 2.0 / h2 + q[0];
            rhs[0] = f[0] - 2.0 * b0 / h;
            lower[n - 1] = -2.0 / h2;
            diag[n - 1] = 2.0 / h2 + q[n - 1];
            rhs[n - 1] = f[n - 1] + 2.0 * b1 / h;
        }
        BoundaryFamily::Periodic => unreachable!(),
    }

    let x = solve_tridiagonal(&lower, &diag, &upper, &rhs)?;
    let resid = tridiagonal_residual(&lower, &diag, &upper, &rhs, &x, false);
    let scale = rhs.iter().fold(1.0f64, |m, v| m.max(v.abs()))
        * diag.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    if resid > 1e-9 * scale {
        return Err(Error::NoConvergence {
            what: "tension solve residual",
            target: resid,
        });
    }
    FieldScalar::from_values(grid, x)
}

fn solve_periodic(grid: Grid1D, q: &[f64], f: &[f64]) -> Result<FieldScalar> {
    let n = grid.n_nodes();
    let h = grid.spacing();
    let h2 = h * h;
    let m = n - 1; // distinct nodes; node n-1 duplicates node 0
    let qmax = q[..m].iter().fold(0.0f64, |m0, v| m0.max(*v));
    if qmax <= 1e-12 {
        let c = 1.0 / (n as f64).sqrt();
        return Err(Error::SingularSystem {
            pivot: m - 1,
            null_direction: Some(vec![c; n]),
        });
    }
    let lower = vec![-1.0 / h2; m];
    let upper = vec![-1.0 / h2; m];
    let mut diag = vec![0.0; m];
    let mut rhs = vec![0.0; m];
    for i in 0..m {
        diag[i] = 2.0 / h2 + q[i];
        rhs[i] = f[i];
    }
    let x = solve_cyclic_tridiagonal(&lower, &diag, &upper, &rhs)?;
    let resid = tridiagonal_residual(&lower, &diag, &upper, &rhs, &x, true);
    let scale = rhs.iter().fold(1.0f64, |m0, v| m0.max(v.abs()))
        * diag.iter().fold(1.0f64, |m0, v| m0.max(v.abs()));
    if resid > 1e-9 * scale {
        return Err(Error::NoConvergence {
            what: "tension solve residual",
            target: resid,
        });
    }
    let mut out = x;
    out.push(out[0]);
    FieldScalar::from_values(grid, out)
}

/// Initial tension from the data (alpha, beta): the BVP with coefficients
/// |alpha_ss|^2 and |beta_s|^2.
pub fn initial_tension(
    alpha: &Field3,
    beta: &Field3,
    bc: BoundaryFamily,
    g: Vec3,
) -> Result<FieldScalar> {
    let grid = alpha.grid();
    if beta.grid() != grid {
        return Err(Error::LengthMismatch {
            expected: grid.n_nodes(),
            got: beta.len(),
        });
    }
    let alpha_ss = alpha.second_derivative_s(bc);
    let beta_s = beta.derivative_s(bc);
    let alpha_s = alpha.derivative_s(bc);
    let problem = TensionProblem {
        eta_ss_sq: alpha_ss.map_scalar(|v| v.norm_squared()),
        eta_st_sq: beta_s.map_scalar(|v| v.norm_squared()),
        bc,
        g,
        eta_s_ends: (alpha_s.values()[0], alpha_s.values()[grid.n_nodes() - 1]),
    };
    solve_tension(&problem, grid)
}

/// Outcome of the non-negativity check: the verdict, where the minimum sits,
/// and its value.
#[derive(Clone, Copy, Debug)]
pub struct NonnegativityReport {
    pub nonnegative: bool,
    pub argmin: usize,
    pub min: f64,
}

/// True iff min sigma >= -tol; reports the argmin either way.
pub fn check_nonnegativity(sigma: &FieldScalar, tol: f64) -> NonnegativityReport {
    let mut argmin = 0;
    let mut min = f64::INFINITY;
    for (i, v) in sigma.values().iter().enumerate() {
        if *v < min {
            min = *v;
            argmin = i;
        }
    }
    NonnegativityReport {
        nonnegative: min >= -tol,
        argmin,
        min,
    }
}

/// Scale-aware default tolerance for [`check_nonnegativity`].
pub fn nonnegativity_tol(sigma: &FieldScalar) -> f64 {
    1e-8 * (1.0 + sigma.max_abs())
}

/// Mean value of a tension field, for reporting.
pub fn mean_tension(sigma: &FieldScalar) -> f64 {
    integrate_s(sigma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid1D;

    const G: f64 = 9.8;

    fn gvec() -> Vec3 {
        Vec3::new(0.0, 0.0, -G)
    }

    fn ghat() -> Vec3 {
        Vec3::new(0.0, 0.0, -1.0)
    }

    fn grid(n: usize) -> Grid1D {
        Grid1D::new(n).unwrap()
    }

    #[test]
    fn upright_column_tension_is_minus_gs() {
        // alpha(s) = (s-1) g/|g|, beta = 0: sigma(s) = -|g| s, linear exact
        let g = grid(101);
        let alpha = Field3::from_fn(g, |s| ghat() * (s - 1.0));
        let beta = Field3::zeros(g);
        let sigma = initial_tension(&alpha, &beta, BoundaryFamily::Whip, gvec()).unwrap();
        for (s, v) in g.nodes().zip(sigma.values()) {
            assert!((v - (-G * s)).abs() < 1e-10, "s={s} sigma={v}");
        }
        let rep = check_nonnegativity(&sigma, nonnegativity_tol(&sigma));
        assert!(!rep.nonnegative);
        assert_eq!(rep.argmin, 100);
    }

    #[test]
    fn hanging_chain_tension_is_plus_gs() {
        let g = grid(101);
        let alpha = Field3::from_fn(g, |s| ghat() * (1.0 - s));
        let beta = Field3::zeros(g);
        let sigma = initial_tension(&alpha, &beta, BoundaryFamily::Whip, gvec()).unwrap();
        for (s, v) in g.nodes().zip(sigma.values()) {
            assert!((v - G * s).abs() < 1e-10, "s={s} sigma={v}");
        }
        assert!(check_nonnegativity(&sigma, 1e-10).nonnegative);
    }

    #[test]
    fn all_zero_two_free_gives_zero() {
        let g = grid(31);
        let problem = TensionProblem {
            eta_ss_sq: FieldScalar::zeros(g),
            eta_st_sq: FieldScalar::zeros(g),
            bc: BoundaryFamily::TwoFree,
            g: gvec(),
            eta_s_ends: (Vec3::zeros(), Vec3::zeros()),
        };
        let sigma = solve_tension(&problem, g).unwrap();
        assert!(sigma.max_abs() < 1e-12);
        assert!(check_nonnegativity(&sigma, 0.0).nonnegative);
    }

    #[test]
    fn straight_string_orthogonal_gravity_has_zero_tension() {
        // alpha straight along x, g along -z: rhs and Neumann datum vanish
        let g = grid(51);
        let alpha = Field3::from_fn(g, |s| Vec3::new(s - 1.0, 0.0, 0.0));
        let beta = Field3::zeros(g);
        let sigma = initial_tension(&alpha, &beta, BoundaryFamily::Whip, gvec()).unwrap();
        assert!(sigma.max_abs() < 1e-10);
    }

    #[test]
    fn spinning_ring_tension_is_constant() {
        // unit-circumference circle spun at one revolution per unit time;
        // the discrete constant is f/q for the discrete stencil factors
        let g = grid(201);
        let r = 1.0 / (2.0 * std::f64::consts::PI);
        let tau = 2.0 * std::f64::consts::PI;
        let alpha = Field3::from_fn(g, |s| {
            Vec3::new(r * (tau * s).cos(), r * (tau * s).sin(), 0.0)
        });
        let beta = Field3::from_fn(g, |s| Vec3::new(-(tau * s).sin(), (tau * s).cos(), 0.0));
        let sigma =
            initial_tension(&alpha, &beta, BoundaryFamily::Periodic, Vec3::zeros()).unwrap();

        // constant across nodes
        let mean = sigma.values().iter().sum::<f64>() / sigma.len() as f64;
        for v in sigma.values() {
            assert!(
                (v - mean).abs() < 1e-8 * (1.0 + mean.abs()),
                "v={v} mean={mean}"
            );
        }
        // constant-ansatz oracle: sigma = |D_s beta|^2 / |D_ss alpha|^2 nodewise
        let q = alpha
            .second_derivative_s(BoundaryFamily::Periodic)
            .map_scalar(|v| v.norm_squared());
        let f = beta
            .derivative_s(BoundaryFamily::Periodic)
            .map_scalar(|v| v.norm_squared());
        let expect = f.values()[7] / q.values()[7];
        assert!((mean - expect).abs() < 1e-8 * (1.0 + expect));
        // and within O(h^2) of the continuum value 1
        let h = g.spacing();
        assert!((mean - 1.0).abs() <= 10.0 * h * h, "mean {mean}");

        // brute-force residual of the constant in the discrete BVP
        let h2 = h * h;
        for i in 1..g.n_nodes() - 1 {
            let res = (-(sigma.values()[i - 1] - 2.0 * sigma.values()[i] + sigma.values()[i + 1])
                / h2)
                + q.values()[i] * sigma.values()[i]
                - f.values()[i];
            assert!(
                res.abs() < 1e-6 * (1.0 + f.values()[i]),
                "node {i} residual {res}"
            );
        }
    }

    #[test]
    fn two_fixed_straight_string_is_singular_with_constant_null_direction() {
        let g = grid(41);
        let problem = TensionProblem {
            eta_ss_sq: FieldScalar::zeros(g),
            eta_st_sq: FieldScalar::from_fn(g, |_| 1.0),
            bc: BoundaryFamily::TwoFixed,
            g: Vec3::zeros(),
            eta_s_ends: (Vec3::new(1.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0)),
        };
        match solve_tension(&problem, g) {
            Err(Error::SingularSystem {
                null_direction: Some(dir),
                ..
            }) => {
                let spread = dir
                    .iter()
                    .fold((f64::MAX, f64::MIN), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
                assert!(
                    (spread.1 - spread.0).abs() < 1e-15,
                    "null direction should be constant"
                );
            }
            other => panic!("expected singular system, got {other:?}"),
        }
    }

    #[test]
    fn manufactured_solution_converges_second_order() {
        // sigma*(s) = sin(pi s / 2) solves the whip BVP with q = 1,
        // f = (1 + (pi/2)^2) sin(pi s / 2), g = 0 (so sigma_s(1) = 0 holds)
        let run = |n: usize| -> f64 {
            let g = grid(n);
            let c = std::f64::consts::FRAC_PI_2;
            let problem = TensionProblem {
                eta_ss_sq: FieldScalar::from_fn(g, |_| 1.0),
                eta_st_sq: FieldScalar::from_fn(g, |s| (1.0 + c * c) * (c * s).sin()),
                bc: BoundaryFamily::Whip,
                g: Vec3::zeros(),
                eta_s_ends: (Vec3::zeros(), Vec3::zeros()),
            };
            let sigma = solve_tension(&problem, g).unwrap();
            g.nodes()
                .zip(sigma.values())
                .map(|(s, v)| (v - (c * s).sin()).abs())
                .fold(0.0f64, f64::max)
        };
        let e101 = run(101);
        let e201 = run(201);
        assert!(
            e101 / e201 >= 3.5,
            "ratio {} (e101={e101}, e201={e201})",
            e101 / e201
        );
    }

    #[test]
    fn nonnegativity_report_points_at_minimum() {
        let g = grid(11);
        let sigma = FieldScalar::from_fn(g, |s| -9.8 * s);
        let rep = check_nonnegativity(&sigma, 1e-10);
        assert!(!rep.nonnegative);
        assert_eq!(rep.argmin, 10);
        assert!((rep.min + 9.8).abs() < 1e-14);

        let ok = FieldScalar::from_fn(g, |s| 9.8 * s);
        assert!(check_nonnegativity(&ok, 1e-10).nonnegative);
        let zero = FieldScalar::zeros(g);
        assert!(check_nonnegativity(&zero, 0.0).nonnegative);
    }
}
