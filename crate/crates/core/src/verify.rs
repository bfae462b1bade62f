//! Named, runnable checks behind `whipdyn verify` and the acceptance test
//! suite. Each check pins its tolerances in code and reports a pass/fail
//! line with the measured numbers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::diagnostics::{
    compatibility_residuals, conserved_energies, kinetic_envelope, tension_l1,
};
use crate::error::Result;
use crate::grid::{Field3, FieldScalar, Grid1D, Vec3};
use crate::maps::{
    contact_force_from_flux, flux_inverse_jacobian_fd, flux_jacobian_eigen_bounds,
    sampled_sup_differences, EpsParam, Gamma,
};
use crate::refdyn::{run_constrained, RefRunParams};
use crate::regdyn::{
    default_dt, downward_state, run_regularized, run_regularized_from, velocity_potential_check,
    RegRunParams,
};
use crate::scenario::{preset, sweep_epsilon, SweepPolicy};
use crate::tension::{
    check_nonnegativity, initial_tension, nonnegativity_tol, solve_tension, BoundaryFamily,
    TensionProblem,
};
use crate::youngmeasure::{
    build_empirical, make_test_family, pair_with, weak_residual, GammaField, RadiusPolicy,
    WeakInput, YmConfig,
};

/// Outcome of one named check.
#[derive(Clone, Debug)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub details: String,
}

impl CheckResult {
    fn new(name: &'static str, passed: bool, details: String) -> Self {
        CheckResult {
            name,
            passed,
            details,
        }
    }

    pub fn line(&self) -> String {
        format!(
            "[{}] {} - {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.details
        )
    }
}

fn run_check(name: &'static str, body: impl FnOnce() -> Result<(bool, String)>) -> CheckResult {
    match body() {
        Ok((passed, details)) => CheckResult::new(name, passed, details),
        Err(e) => CheckResult::new(name, false, format!("error: {e}")),
    }
}

const G: f64 = 9.8;

fn gvec() -> Vec3 {
    Vec3::new(0.0, 0.0, -G)
}

fn ghat() -> Vec3 {
    Vec3::new(0.0, 0.0, -1.0)
}

// ---------------------------------------------------------------------------
// Criterion 1: stationary tension exactness
// ---------------------------------------------------------------------------

pub fn c01_stationary_tension() -> CheckResult {
    run_check("c01 stationary tension exactness", || {
        let grid = Grid1D::new(101)?;
        let upright = Field3::from_fn(grid, |s| ghat() * (s - 1.0));
        let hanging = Field3::from_fn(grid, |s| ghat() * (1.0 - s));
        let beta = Field3::zeros(grid);
        let tol = 1e-10;
        let mut worst = 0.0f64;
        let su = initial_tension(&upright, &beta, BoundaryFamily::Whip, gvec())?;
        for (s, v) in grid.nodes().zip(su.values()) {
            worst = worst.max((v - (-G * s)).abs());
        }
        let sh = initial_tension(&hanging, &beta, BoundaryFamily::Whip, gvec())?;
        for (s, v) in grid.nodes().zip(sh.values()) {
            worst = worst.max((v - G * s).abs());
        }
        Ok((
            worst <= tol,
            format!("max nodal error {worst:.2e} (tolerance {tol:.0e})"),
        ))
    })
}

// ---------------------------------------------------------------------------
// Criterion 2: maximum-principle battery
// ---------------------------------------------------------------------------

/// Random smooth state satisfying the geometry of an inextensible string:
/// a unit tangent field from smooth angles (its derivative is the curvature
/// input) and a strain-rate source projected orthogonal to the tangent.
fn random_tension_problem(
    rng: &mut ChaCha8Rng,
    grid: Grid1D,
    bc: BoundaryFamily,
    g: Vec3,
) -> TensionProblem {
    let mut a = [0.0; 3];
    let mut b = [0.0; 3];
    let mut pa = [0.0; 3];
    let mut pb = [0.0; 3];
    for k in 0..3 {
        a[k] = rng.gen_range(-0.8..0.8);
        b[k] = rng.gen_range(-0.8..0.8);
        pa[k] = rng.gen_range(0.0..std::f64::consts::TAU);
        pb[k] = rng.gen_range(0.0..std::f64::consts::TAU);
    }
    let theta = move |s: f64| {
        a[0] * (std::f64::consts::PI * s + pa[0]).sin()
            + a[1] * (2.0 * std::f64::consts::PI * s + pa[1]).sin()
            + a[2] * (3.0 * std::f64::consts::PI * s + pa[2]).sin()
    };
    let phi = move |s: f64| {
        b[0] * (std::f64::consts::PI * s + pb[0]).sin()
            + b[1] * (2.0 * std::f64::consts::PI * s + pb[1]).sin()
            + b[2] * (3.0 * std::f64::consts::PI * s + pb[2]).sin()
    };
    let tangent = Field3::from_fn(grid, |s| {
        let th = theta(s);
        let ph = phi(s);
        Vec3::new(th.sin() * ph.cos(), th.sin() * ph.sin(), th.cos())
    });
    let mut w = [Vec3::zeros(); 4];
    for wk in w.iter_mut() {
        *wk = Vec3::new(
            rng.gen_range(-2.0..2.0),
            rng.gen_range(-2.0..2.0),
            rng.gen_range(-2.0..2.0),
        );
    }
    let strain = Field3::from_fn(grid, |s| {
        w[0] + w[1] * (std::f64::consts::PI * s).sin()
            + w[2] * (2.0 * std::f64::consts::PI * s).cos()
            + w[3] * s
    });
    let t_s = tangent.derivative_s(bc);
    let n = grid.n_nodes();
    let mut f = vec![0.0; n];
    for i in 0..n {
        let t = tangent.values()[i];
        let wv = strain.values()[i];
        let perp = wv - t * wv.dot(&t);
        f[i] = perp.norm_squared();
    }
    TensionProblem {
        eta_ss_sq: t_s.map_scalar(|v| v.norm_squared()),
        eta_st_sq: FieldScalar::from_values(grid, f).unwrap(),
        bc,
        g,
        eta_s_ends: (tangent.values()[0], tangent.values()[n - 1]),
    }
}

pub fn c02_maximum_principle() -> CheckResult {
    run_check("c02 maximum-principle battery", || {
        let grid = Grid1D::new(101)?;
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let mut worst_rel = -f64::INFINITY;
        for trial in 0..100 {
            let (bc, g) = match trial % 3 {
                0 => (BoundaryFamily::TwoFree, gvec()),
                1 => (BoundaryFamily::Whip, Vec3::zeros()),
                _ => (BoundaryFamily::TwoFixed, Vec3::zeros()),
            };
            let problem = random_tension_problem(&mut rng, grid, bc, g);
            let sigma = solve_tension(&problem, grid)?;
            let rep = check_nonnegativity(&sigma, nonnegativity_tol(&sigma));
            let rel = -rep.min / (1.0 + sigma.max_abs());
            worst_rel = worst_rel.max(rel);
            if !rep.nonnegative {
                return Ok((
                    false,
                    format!(
                        "trial {trial} ({}) violated: min sigma = {:.3e} at node {}",
                        bc.tag(),
                        rep.min,
                        rep.argmin
                    ),
                ));
            }
        }
        // counterexample outside the hypotheses: the upright column
        let upright = Field3::from_fn(grid, |s| ghat() * (s - 1.0));
        let su = initial_tension(&upright, &Field3::zeros(grid), BoundaryFamily::Whip, gvec())?;
        let rep = check_nonnegativity(&su, 1e-10);
        let counter = rep.min < 0.0;
        Ok((
            counter,
            format!(
                "100 hypothesized states: worst min sigma / scale = {worst_rel:.2e}; \
                 upright counterexample min sigma = {:.3} at node {}",
                rep.min, rep.argmin
            ),
        ))
    })
}

// ---------------------------------------------------------------------------
// Criterion 3: energy conservation of the constrained solver
// ---------------------------------------------------------------------------

/// Circular-arc curve with tangent angle a + b s in the xz-plane, anchored
/// so alpha(1) = 0; unit speed by construction.
fn arc_alpha(grid: Grid1D, a: f64, b: f64) -> Field3 {
    Field3::from_fn(grid, |s| {
        let at = |u: f64| Vec3::new(-(a + b * u).cos() / b, 0.0, -(a + b * u).sin() / b);
        at(s) - at(1.0)
    })
}

fn conservation_cases(grid: Grid1D) -> Vec<(&'static str, BoundaryFamily, Vec3, Field3, Field3)> {
    let mut cases = Vec::new();
    // whip: small swing about the hanging equilibrium (stays smooth; a
    // released arc develops a tip singularity the energy test must avoid)
    {
        let alpha = Field3::from_fn(grid, |s| ghat() * (1.0 - s));
        let omega = Vec3::new(0.0, 1.2, 0.0);
        let beta = alpha.map(|p| omega.cross(&p));
        cases.push(("whip", BoundaryFamily::Whip, gvec(), alpha, beta));
    }
    // two_free: slack arc with a normal-direction shear velocity
    // beta = (c/b)(T(s) - T(0)) (so beta_s = c N, orthogonal to the tangent
    // exactly) plus an out-of-plane wave; a uniformly falling free chain
    // would be trivial
    {
        let (a, b) = (0.3, 0.8);
        let alpha = arc_alpha(grid, a, b);
        let tangent = |u: f64| Vec3::new((a + b * u).sin(), 0.0, -(a + b * u).cos());
        let beta = Field3::from_fn(grid, |s| {
            (tangent(s) - tangent(0.0)) * (3.0 / b)
                + Vec3::new(0.0, 0.8 * (std::f64::consts::TAU * s).sin(), 0.0)
        });
        cases.push(("two_free", BoundaryFamily::TwoFree, gvec(), alpha, beta));
    }
    // two_fixed: slack arc between two pins released from rest
    {
        let alpha = arc_alpha(grid, 0.2, 1.8);
        let beta = Field3::zeros(grid);
        cases.push(("two_fixed", BoundaryFamily::TwoFixed, gvec(), alpha, beta));
    }
    // periodic: spinning ring carrying an out-of-plane bending wave
    {
        let r = 0.5 / std::f64::consts::PI;
        let tau = std::f64::consts::TAU;
        let alpha = Field3::from_fn(grid, |s| {
            Vec3::new(r * (tau * s).cos(), r * (tau * s).sin(), 0.0)
        });
        let beta = Field3::from_fn(grid, |s| {
            Vec3::new(-(tau * s).sin(), (tau * s).cos(), 0.0) * 0.5
                + Vec3::new(0.0, 0.0, 0.4 * (tau * s).sin())
        });
        cases.push((
            "periodic",
            BoundaryFamily::Periodic,
            Vec3::zeros(),
            alpha,
            beta,
        ));
    }
    cases
}

pub fn c03_energy_conservation() -> CheckResult {
    run_check("c03 energy conservation (constrained solver)", || {
        let grid = Grid1D::new(201)?;
        let horizon = 1.0;
        let mut details = Vec::new();
        let mut ok = true;
        for (name, bc, g, alpha, beta) in conservation_cases(grid) {
            let drift_at = |dt: f64| -> Result<f64> {
                let params = RefRunParams {
                    dt,
                    horizon,
                    sample_every: 50,
                };
                let traj = run_constrained(&alpha, &beta, bc, g, params)?;
                let e0 = traj.diagnostics.total[0];
                let worst = traj
                    .diagnostics
                    .total
                    .iter()
                    .map(|e| (e - e0).abs())
                    .fold(0.0f64, f64::max);
                Ok(worst / e0.abs())
            };
            let d1 = drift_at(1e-4)?;
            let d2 = drift_at(5e-5)?;
            let ratio = d1 / d2.max(1e-300);
            let pass = d1 <= 1e-4 && ratio >= 3.0;
            ok &= pass;
            details.push(format!("{name}: drift {d1:.2e}, dt/2 ratio {ratio:.2}"));
        }
        Ok((ok, details.join("; ")))
    })
}

// ---------------------------------------------------------------------------
// Criterion 4: regularized dissipation
// ---------------------------------------------------------------------------

pub fn c04_regularized_dissipation() -> CheckResult {
    run_check("c04 regularized dissipation", || {
        let grid = Grid1D::new(101)?;
        let mut details = Vec::new();
        let mut ok = true;
        // monotone E_eps on every trajectory of the battery
        for (name, eps) in [("upright", 0.1), ("folded", 0.05), ("hanging", 0.1)] {
            let sc = preset(name)?;
            let alpha = sc.sample_alpha(grid)?;
            let beta = sc.sample_beta(grid)?;
            let params = RegRunParams {
                eps,
                dt: default_dt(grid, eps),
                horizon: 0.5,
                sample_every: 100,
            };
            let traj = run_regularized(&alpha, &beta, sc.gravity(), params)?;
            let pass = traj.energy_slack_violations == 0;
            ok &= pass;
            details.push(format!(
                "{name} eps={eps}: {} slack violations (max jump {:.2e})",
                traj.energy_slack_violations, traj.max_energy_increase
            ));
        }
        // dissipation defect halves (within 30%) under dt halving, measured
        // past the initial boundary-layer transient
        let sc = preset("upright")?;
        let alpha = sc.sample_alpha(grid)?;
        let beta = sc.sample_beta(grid)?;
        let eps = 0.1;
        let defect_at = |dt: f64| -> Result<f64> {
            let params = RegRunParams {
                eps,
                dt,
                horizon: 0.5,
                sample_every: 100_000,
            };
            Ok(run_regularized(&alpha, &beta, sc.gravity(), params)?.max_dissipation_defect_late)
        };
        let dt0 = default_dt(grid, eps);
        let f1 = defect_at(dt0)?;
        let f2 = defect_at(0.5 * dt0)?;
        let ratio = f2 / f1.max(1e-300);
        let pass = (0.35..=0.65).contains(&ratio);
        ok &= pass;
        details.push(format!(
            "defect {f1:.3e} -> {f2:.3e} under dt/2 (ratio {ratio:.3})"
        ));
        Ok((ok, details.join("; ")))
    })
}

// ---------------------------------------------------------------------------
// Criterion 5: eps-uniform bounds
// ---------------------------------------------------------------------------

pub fn c05_uniform_bounds() -> CheckResult {
    run_check("c05 eps-uniform kinetic and tension bounds", || {
        let eps_list = [0.1, 0.03, 0.01, 0.003];
        let mut details = Vec::new();
        let mut ok = true;
        for name in ["upright", "folded"] {
            let mut sc = preset(name)?;
            sc.horizon = 2.0;
            let policy = SweepPolicy {
                n_nodes: 101,
                dt: None,
                sample_every: 20,
                test_pairs: 4,
            };
            let report = sweep_epsilon(&sc, &eps_list, &policy)?;
            for row in &report.rows {
                if let Some(e) = &row.error {
                    return Ok((false, format!("{name} eps={} failed: {e}", row.eps)));
                }
            }
            let trends = report.trends.as_ref().unwrap();
            let pass = trends.kinetic_ratio <= 3.0 && trends.tension_l1_ratio <= 3.0;
            ok &= pass;
            details.push(format!(
                "{name}: sup-kinetic ratio {:.2}, tension-L1 ratio {:.2} across eps {:?}",
                trends.kinetic_ratio, trends.tension_l1_ratio, eps_list
            ));
        }
        Ok((ok, details.join("; ")))
    })
}

// ---------------------------------------------------------------------------
// Criterion 6: map convergence and Jacobian eigenvalue interval
// ---------------------------------------------------------------------------

pub fn c06_map_convergence() -> CheckResult {
    run_check("c06 map convergence and eigenvalue interval", || {
        let (sups, sups_star) = sampled_sup_differences(5, 100_000);
        let dec = sups[0] > sups[1] && sups[1] > sups[2];
        let dec_star = sups_star[0] > sups_star[1] && sups_star[1] > sups_star[2];

        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut eig_ok = true;
        let mut worst = String::new();
        for ev in [0.5, 0.1, 0.03] {
            let eps = EpsParam::new(ev)?;
            let (lo, hi) = flux_jacobian_eigen_bounds(eps);
            for _ in 0..1000 {
                let tau = Vec3::new(
                    rng.gen_range(-5.0..5.0),
                    rng.gen_range(-5.0..5.0),
                    rng.gen_range(-5.0..5.0),
                );
                let delta = 1e-6 * (1.0 + tau.norm());
                let j = flux_inverse_jacobian_fd(tau, eps, delta)?;
                let sym = (j + j.transpose()) * 0.5;
                let eig = nalgebra::SymmetricEigen::new(sym);
                for lam in eig.eigenvalues.iter() {
                    if !(*lam >= lo * (1.0 - 1e-6) - 1e-6 && *lam <= hi * (1.0 + 1e-6) + 1e-6) {
                        eig_ok = false;
                        worst = format!("lambda = {lam} outside [{lo:.4}, {hi:.4}] at eps {ev}");
                    }
                }
            }
        }
        Ok((
            dec && dec_star && eig_ok,
            format!(
                "sup|H-H0| = {:?} (decreasing: {dec}), sup|H*-H0*| = {:?} (decreasing: {dec_star}); \
                 3000 Jacobians in interval: {eig_ok} {worst}",
                sups, sups_star
            ),
        ))
    })
}

// ---------------------------------------------------------------------------
// Criterion 7: Young-measure fundamental-theorem recoveries
// ---------------------------------------------------------------------------

pub fn c07_young_measure_recovery() -> CheckResult {
    run_check("c07 Young-measure recoveries", || {
        let mut details = Vec::new();
        let times: Vec<f64> = (0..5).map(|k| k as f64 / 4.0).collect();
        // oscillation: sign(sin(2 pi n s)) -> nu = (delta_-1 + delta_+1)/2
        let grid = Grid1D::new(4001)?;
        let mut fields = Vec::new();
        for n in [64.0f64, 128.0, 256.0] {
            fields.push(GammaField::from_fn(times.clone(), grid, |_, s| {
                let v = (std::f64::consts::TAU * n * s).sin().signum();
                Gamma::new(Vec3::zeros(), Vec3::new(v, 0.0, 0.0))
            }));
        }
        let ym = build_empirical(&fields, &YmConfig::default())?;
        let mut osc_ok = ym.lambda_total().abs() < 1e-12;
        let mut worst_w = 0.0f64;
        for it in 0..ym.cells.nt {
            for is in 0..ym.cells.ns {
                let cell = ym.cell(it, is).unwrap();
                let w = cell.nu_weights();
                if w.len() != 2 {
                    osc_ok = false;
                    continue;
                }
                for (_, weight) in w {
                    worst_w = worst_w.max((weight - 0.5).abs());
                }
            }
        }
        osc_ok &= worst_w <= 0.05;
        details.push(format!(
            "oscillation: lambda {:.1e}, worst bin deviation {worst_w:.3}",
            ym.lambda_total()
        ));

        // concentration: w_n = n on [0, 1/n^2) -> lambda = 1, nu = delta_0
        let mut cfields = Vec::new();
        let ctimes: Vec<f64> = (0..3).map(|k| k as f64 / 2.0).collect();
        for n in [32.0f64, 64.0, 128.0] {
            let m = (20.0 * n * n) as usize + 1;
            let cg = Grid1D::new(m)?;
            cfields.push(GammaField::from_fn(ctimes.clone(), cg, |_, s| {
                let v = if s < 1.0 / (n * n) { n } else { 0.0 };
                Gamma::new(Vec3::zeros(), Vec3::new(0.0, v, 0.0))
            }));
        }
        let cym = build_empirical(&cfields, &YmConfig::default())?;
        let lam = cym.lambda_total();
        let mut conc_ok = (lam - 1.0).abs() <= 0.05;
        let mut angular_cells = std::collections::BTreeSet::new();
        for cell in cym.cell_data.iter().flatten() {
            let w = cell.nu_weights();
            if !(w.len() == 1 && (w[0].1 - 1.0).abs() < 1e-12) {
                conc_ok = false;
            }
            if cell.lambda > 0.0 {
                for (k, _) in cell.nu_inf_weights() {
                    angular_cells.insert(k);
                }
            }
        }
        conc_ok &= angular_cells.len() == 1;
        details.push(format!(
            "concentration: lambda {lam:.4}, nu = point mass at 0, {} angular cell(s)",
            angular_cells.len()
        ));

        // battery consistency: direct integrals vs pairings within 5%
        let battery: [(&str, fn(&Gamma) -> f64, fn(&Gamma) -> f64); 3] = [
            ("|xi|^2", |g| g.norm_squared(), |_| 1.0),
            ("|xi|", |g| g.norm(), |_| 0.0),
            ("bounded", |g| 1.0 / (1.0 + g.norm_squared()), |_| 0.0),
        ];
        let mut battery_ok = true;
        for (fname, f, frec) in battery {
            let paired = pair_with(&f, &frec, &ym)?;
            let direct = fields.last().unwrap().integrate(f);
            if (paired - direct).abs() > 0.05 * (1.0 + direct.abs()) {
                battery_ok = false;
                details.push(format!(
                    "battery {fname}: direct {direct:.4} vs paired {paired:.4}"
                ));
            }
        }
        Ok((osc_ok && conc_ok && battery_ok, details.join("; ")))
    })
}

// ---------------------------------------------------------------------------
// Criterion 8: weak-residual trend and exact-solution residual
// ---------------------------------------------------------------------------

pub fn c08_weak_residual() -> CheckResult {
    run_check("c08 weak-residual trend", || {
        // exact hanging solution at n = 201
        let grid = Grid1D::new(201)?;
        let horizon = 1.0;
        let alpha = Field3::from_fn(grid, |s| ghat() * (1.0 - s));
        let beta = Field3::zeros(grid);
        let times: Vec<f64> = (0..41).map(|k| horizon * k as f64 / 40.0).collect();
        let field = GammaField::from_fn(times, grid, |_, s| {
            Gamma::new(Vec3::zeros(), -ghat() * (1.0 + (G * s).sqrt()))
        });
        let family = make_test_family(horizon, 12)?;
        let mut exact_worst = 0.0f64;
        for tf in &family {
            let r = weak_residual(&WeakInput::Field(&field), tf, &alpha, &beta, gvec())?;
            exact_worst = exact_worst.max(r.abs());
        }
        let exact_ok = exact_worst < 1e-3;

        // upright sweep: max residual decreasing along eps (10% slack)
        let mut sc = preset("upright")?;
        sc.horizon = horizon;
        let policy = SweepPolicy {
            n_nodes: 101,
            dt: None,
            sample_every: 10,
            test_pairs: 12,
        };
        let report = sweep_epsilon(&sc, &[0.1, 0.03, 0.01], &policy)?;
        for row in &report.rows {
            if let Some(e) = &row.error {
                return Ok((false, format!("sweep eps={} failed: {e}", row.eps)));
            }
        }
        let residuals: Vec<f64> = report.rows.iter().map(|r| r.max_weak_residual).collect();
        let monotone = report.trends.as_ref().unwrap().residual_monotone;
        Ok((
            exact_ok && monotone,
            format!(
                "hanging exact residual {exact_worst:.2e} (< 1e-3: {exact_ok}); \
                 upright residuals along eps {:?}: {residuals:?} (monotone within 10%: {monotone})",
                [0.1, 0.03, 0.01]
            ),
        ))
    })
}

// ---------------------------------------------------------------------------
// Criterion 9: downward relaxation
// ---------------------------------------------------------------------------

pub fn c09_downward_relaxation() -> CheckResult {
    run_check("c09 downward relaxation", || {
        let sc = preset("upright")?;
        let grid = Grid1D::new(101)?;
        let alpha = sc.sample_alpha(grid)?;
        let beta = sc.sample_beta(grid)?;
        let distance_at = |eps: f64, horizon: f64| -> Result<(f64, f64)> {
            let params = RegRunParams {
                eps,
                dt: default_dt(grid, eps),
                horizon,
                sample_every: 1000,
            };
            let traj = run_regularized(&alpha, &beta, sc.gravity(), params)?;
            let last = traj.final_state();
            let v_dist = last.v.l2_norm();
            let kappa = last.contact_force()?;
            let mut diff = Vec::with_capacity(grid.n_nodes());
            for i in 0..grid.n_nodes() {
                diff.push(kappa.values()[i] - (-sc.gravity() * grid.node(i)));
            }
            let k_dist = Field3::from_values(grid, diff)?.l2_norm();
            Ok((v_dist, k_dist))
        };
        let (v_dist, k_dist) = distance_at(0.1, 5.0)?;
        let total = (v_dist * v_dist + k_dist * k_dist).sqrt();
        // companion measurements for the report: smaller eps also relaxes
        // more slowly, so fixed-horizon distances mix transient and
        // steady-state contributions
        let (v_a, k_a) = distance_at(0.05, 5.0)?;
        let (v_b, k_b) = distance_at(0.02, 5.0)?;
        let (v_long, k_long) = distance_at(0.1, 10.0)?;
        Ok((
            total <= 1e-2,
            format!(
                "L2 distance to (v, kappa) = (0, -g s) at T=5, eps=0.1: |v| = {v_dist:.4}, \
                 |kappa + g s| = {k_dist:.4}, combined {total:.4} (tolerance 1e-2); \
                 eps trend at T=5: {:.4} @ 0.05, {:.4} @ 0.02; T=10 at eps 0.1: {:.4}",
                (v_a * v_a + k_a * k_a).sqrt(),
                (v_b * v_b + k_b * k_b).sqrt(),
                (v_long * v_long + k_long * k_long).sqrt(),
            ),
        ))
    })
}

// ---------------------------------------------------------------------------
// Criterion 10: cross-solver agreement
// ---------------------------------------------------------------------------

fn cross_solver_distance(n: usize, eps: f64, perturb: f64, ref_dt: f64) -> Result<(f64, f64)> {
    let grid = Grid1D::new(n)?;
    let horizon = 1.0;
    let g = gvec();
    // upright data; the constrained run is tilted by `perturb` radians to
    // break the unstable equilibrium
    let alpha_reg = Field3::from_fn(grid, |s| ghat() * (s - 1.0));
    let beta = Field3::zeros(grid);
    let rot = nalgebra::Rotation3::from_axis_angle(&nalgebra::Vector3::y_axis(), perturb);
    let alpha_ref = alpha_reg.map(|p| rot * p);

    // constrained leg first: it aborts quickly in the ill-posed compressed
    // regime, sparing the expensive small-eps regularized run
    let ref_params = RefRunParams {
        dt: ref_dt,
        horizon,
        sample_every: 100_000,
    };
    let refr = run_constrained(&alpha_ref, &beta, BoundaryFamily::Whip, g, ref_params)?;
    let reg_params = RegRunParams {
        eps,
        dt: default_dt(grid, eps),
        horizon,
        sample_every: 100_000,
    };
    let reg = run_regularized(&alpha_reg, &beta, g, reg_params)?;
    let reg_moved = {
        let mut diff = Vec::with_capacity(grid.n_nodes());
        for i in 0..grid.n_nodes() {
            diff.push(reg.eta.last().unwrap().values()[i] - alpha_reg.values()[i]);
        }
        Field3::from_values(grid, diff)?.l2_norm()
    };

    let eta_reg = reg.eta.last().unwrap();
    let eta_ref = refr.eta.last().unwrap();
    let mut diff = Vec::with_capacity(grid.n_nodes());
    for i in 0..grid.n_nodes() {
        diff.push(eta_reg.values()[i] - eta_ref.values()[i]);
    }
    Ok((Field3::from_values(grid, diff)?.l2_norm(), reg_moved))
}

pub fn c10_cross_solver() -> CheckResult {
    run_check("c10 cross-solver agreement", || {
        // the constrained leg rides the ill-posed compressed regime
        // (sigma < 0): grid-scale noise grows at rate ~ sqrt(|g|) pi n / 2,
        // so the run aborts on the drift budget well before t = 1 at any
        // usable resolution; the distance is then unavailable and the
        // criterion fails with that evidence
        let mut details = Vec::new();
        let mut best: Option<f64> = None;
        for (n, eps, ref_dt) in [(201usize, 1e-3, 2e-5), (101, 3e-3, 5e-5)] {
            match cross_solver_distance(n, eps, 1e-3, ref_dt) {
                Ok((d, reg_moved)) => {
                    details.push(format!(
                        "n={n}, eps={eps}: eta L2 distance {d:.4} at t=1 \
                         (regularized leg moved {reg_moved:.3})"
                    ));
                    best = Some(best.map_or(d, |b: f64| b.min(d)));
                }
                Err(e) => details.push(format!("n={n}, eps={eps}, ref dt={ref_dt:.0e}: {e}")),
            }
        }
        let passed = best.is_some_and(|d| d <= 0.1);
        Ok((passed, format!("{} (tolerance 0.1)", details.join("; "))))
    })
}

// ---------------------------------------------------------------------------
// Supporting invariant checks (verify suites)
// ---------------------------------------------------------------------------

pub fn check_gronwall_envelope() -> CheckResult {
    run_check("Gronwall kinetic envelope", || {
        let grid = Grid1D::new(101)?;
        let alpha = Field3::from_fn(grid, |s| ghat() * (1.0 - s));
        let omega = Vec3::new(0.0, 0.4, 0.0);
        let beta = alpha.map(|p| omega.cross(&p));
        let horizon = 1.0;
        let params = RefRunParams {
            dt: 1e-4,
            horizon,
            sample_every: 200,
        };
        let traj = run_constrained(&alpha, &beta, BoundaryFamily::Whip, gvec(), params)?;
        let (_, _, e0) = conserved_energies(&alpha, &beta, gvec());
        let bound = kinetic_envelope(e0, gvec(), horizon);
        let pass = 2.0 * traj.sup_kinetic <= bound.abs().max(1.0) || traj.sup_kinetic <= bound;
        Ok((
            pass,
            format!(
                "sup int |v|^2 = {:.3} vs envelope {bound:.3}",
                traj.sup_kinetic
            ),
        ))
    })
}

pub fn check_velocity_potential_trend() -> CheckResult {
    run_check("velocity-potential residual trend", || {
        let grid = Grid1D::new(101)?;
        let g = gvec();
        // near-steady runs from the downward construction
        let mut residuals = Vec::new();
        for eps in [0.1, 0.03, 0.01] {
            let st = downward_state(grid, g, eps)?;
            let eta0 = Field3::from_fn(grid, |s| ghat() * (1.0 - s));
            let params = RegRunParams {
                eps,
                dt: default_dt(grid, eps),
                horizon: 0.5,
                sample_every: 25,
            };
            let traj = run_regularized_from(st.v, st.tau, eta0, g, params)?;
            residuals.push(velocity_potential_check(&traj, &Field3::zeros(grid), g)?);
        }
        let monotone = residuals[0] > residuals[1] && residuals[1] > residuals[2];

        // upright: halving eps must not raise the residual by more than 10%
        let sc = preset("upright")?;
        let alpha = sc.sample_alpha(grid)?;
        let beta = sc.sample_beta(grid)?;
        let res_at = |eps: f64| -> Result<f64> {
            let params = RegRunParams {
                eps,
                dt: default_dt(grid, eps),
                horizon: 0.5,
                sample_every: 25,
            };
            let traj = run_regularized(&alpha, &beta, g, params)?;
            velocity_potential_check(&traj, &beta, g)
        };
        let r1 = res_at(0.1)?;
        let r2 = res_at(0.05)?;
        let halving_ok = r2 <= 1.1 * r1;
        Ok((
            monotone && halving_ok,
            format!(
                "near-steady residuals {residuals:?} (monotone: {monotone}); \
                 upright eps-halving {r1:.3e} -> {r2:.3e} (within 10%: {halving_ok})"
            ),
        ))
    })
}

pub fn check_admissibility_sweep() -> CheckResult {
    run_check("eps-uniform admissibility ledger", || {
        let mut sc = preset("upright")?;
        sc.horizon = 1.0;
        let eps_list = [0.1, 0.03, 0.01];
        let grid = Grid1D::new(101)?;
        let alpha = sc.sample_alpha(grid)?;
        let beta = sc.sample_beta(grid)?;
        let mut values = Vec::new();
        let mut wnorms = Vec::new();
        for eps in eps_list {
            let params = RegRunParams {
                eps,
                dt: default_dt(grid, eps),
                horizon: sc.horizon,
                sample_every: 50,
            };
            let traj = run_regularized(&alpha, &beta, sc.gravity(), params)?;
            let field = GammaField::from_regularized(&traj)?;
            let cfg = YmConfig {
                radius: RadiusPolicy::Auto,
                ..YmConfig::default()
            };
            let ym = build_empirical(std::slice::from_ref(&field), &cfg)?;
            values.push(ym.admissibility());
            wnorms.push(field.integrate(|g| g.w.norm_squared()).sqrt());
        }
        let ratio = values.iter().cloned().fold(0.0f64, f64::max)
            / values.iter().cloned().fold(f64::MAX, f64::min);
        let wratio = wnorms.iter().cloned().fold(0.0f64, f64::max)
            / wnorms.iter().cloned().fold(f64::MAX, f64::min);
        Ok((
            ratio <= 3.0 && wratio <= 3.0,
            format!(
                "second moment + lambda across eps {eps_list:?}: {values:?} (ratio {ratio:.2}); \
                 w-field L2 norms {wnorms:?} (ratio {wratio:.2})"
            ),
        ))
    })
}

pub fn check_ring_compatibility() -> CheckResult {
    run_check("spinning-ring compatibility residuals", || {
        let sc = preset("ring")?;
        let grid = Grid1D::new(201)?;
        let alpha = sc.sample_alpha(grid)?;
        let beta = sc.sample_beta(grid)?;
        let (r1, r2) = compatibility_residuals(&alpha, &beta, sc.bc);
        let h = grid.spacing();
        // r1 carries the O(h^2) central-stencil floor on curved data
        let pass = r1 <= 10.0 * h * h && r2 <= 1e-6;
        Ok((
            pass,
            format!("r1 = {r1:.3e} (bound {:.3e}), r2 = {r2:.3e}", 10.0 * h * h),
        ))
    })
}

pub fn check_flux_contraction() -> CheckResult {
    run_check("flux inverse stays inside the unit ball", || {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut worst = 0.0f64;
        for _ in 0..2000 {
            let eps = EpsParam::new(rng.gen_range(0.01..1.0))?;
            let dir = Vec3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            );
            if dir.norm() < 1e-6 {
                continue;
            }
            let tau = dir / dir.norm() * rng.gen_range(0.0..=1.0);
            let g = contact_force_from_flux(tau, eps)?;
            worst = worst.max(g.norm());
        }
        Ok((
            worst < 1.0,
            format!("max |G(tau)| over |tau| <= 1 samples: {worst:.6}"),
        ))
    })
}

pub fn check_tension_l1_prefix() -> CheckResult {
    run_check("tension L1 prefix monotonicity", || {
        let sc = preset("upright")?;
        let grid = Grid1D::new(101)?;
        let alpha = sc.sample_alpha(grid)?;
        let beta = sc.sample_beta(grid)?;
        let eps = 0.05;
        let params = RegRunParams {
            eps,
            dt: default_dt(grid, eps),
            horizon: 0.5,
            sample_every: 20,
        };
        let traj = run_regularized(&alpha, &beta, sc.gravity(), params)?;
        let series = &traj.diagnostics.tension_l1_running;
        let monotone = series.windows(2).all(|w| w[1] >= w[0]);
        // and the running accumulator agrees with the post-hoc quadrature
        let post = tension_l1(&traj.times, &traj.kappa)?;
        let agree = (post - traj.tension_l1_total).abs() <= 0.02 * (1.0 + traj.tension_l1_total);
        Ok((
            monotone && agree,
            format!(
                "running L1 monotone: {monotone}; final {:.4} vs sampled quadrature {post:.4}",
                traj.tension_l1_total
            ),
        ))
    })
}

/// Check groups behind `whipdyn verify --suite`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    Maps,
    Tension,
    Energy,
    Ym,
    All,
}

impl Suite {
    pub fn parse(s: &str) -> Option<Suite> {
        match s {
            "maps" => Some(Suite::Maps),
            "tension" => Some(Suite::Tension),
            "energy" => Some(Suite::Energy),
            "ym" => Some(Suite::Ym),
            "all" => Some(Suite::All),
            _ => None,
        }
    }
}

/// Run a suite and return the individual results.
pub fn run_suite(suite: Suite) -> Vec<CheckResult> {
    let mut out = Vec::new();
    let maps = suite == Suite::Maps || suite == Suite::All;
    let tension = suite == Suite::Tension || suite == Suite::All;
    let energy = suite == Suite::Energy || suite == Suite::All;
    let ym = suite == Suite::Ym || suite == Suite::All;
    if maps {
        out.push(c06_map_convergence());
        out.push(check_flux_contraction());
    }
    if tension {
        out.push(c01_stationary_tension());
        out.push(c02_maximum_principle());
        out.push(check_ring_compatibility());
    }
    if energy {
        out.push(c03_energy_conservation());
        out.push(c04_regularized_dissipation());
        out.push(check_gronwall_envelope());
        out.push(check_velocity_potential_trend());
        out.push(check_tension_l1_prefix());
    }
    if ym {
        out.push(c07_young_measure_recovery());
        out.push(c08_weak_residual());
        out.push(check_admissibility_sweep());
    }
    if suite == Suite::All {
        out.push(c05_uniform_bounds());
        out.push(c09_downward_relaxation());
        out.push(c10_cross_solver());
    }
    out
}
