//! Semi-implicit method-of-lines integrator for the eps-regularized system
//!
//! ```text
//! v_t   = eps v_ss + (G(tau))_s + g
//! tau_t = v_s + eps tau_ss
//! ```
//!
//! under the whip boundary rows tau(0) = 0, tau_s(1) = 0, v(1) = 0,
//! v_s(0) = 0, with initial data tau = alpha_s, v = beta.
//!
//! The stiff diffusion is advanced by backward Euler (one tridiagonal solve
//! per component and field), the nonlinear coupling explicitly; boundary
//! rows are enforced exactly every step. The energy E_eps, its per-step
//! monotonicity audit, the dissipation defect, and the running space-time
//! L1 norm of the contact force are tracked online.

use crate::diagnostics::{regularized_energy, DiagnosticsSeries};
use crate::error::{Error, Result};
use crate::grid::{integrate_s, solve_tridiagonal, Field3, FieldScalar, Grid1D, Vec3};
use crate::maps::{contact_force_from_flux, flux_inverse_lipschitz, regularized_flux, EpsParam};
use crate::tension::BoundaryFamily;

const BLOWUP_NORM: f64 = 1e12;
/// Per-step relative slack for the energy monotonicity audit.
pub const ENERGY_SLACK: f64 = 1e-8;

/// State of the regularized solver.
#[derive(Clone, Debug)]
pub struct RegState {
    pub v: Field3,
    pub tau: Field3,
    pub t: f64,
    pub eps: f64,
}

impl RegState {
    pub fn new(v: Field3, tau: Field3, t: f64, eps: f64) -> Result<Self> {
        if v.grid() != tau.grid() {
            return Err(Error::LengthMismatch {
                expected: v.len(),
                got: tau.len(),
            });
        }
        let e = EpsParam::new(eps)?;
        if e.is_limit() {
            return Err(Error::Domain {
                what: "RegState eps",
                value: eps,
            });
        }
        Ok(RegState { v, tau, t, eps })
    }

    pub fn grid(&self) -> Grid1D {
        self.v.grid()
    }

    /// Contact force kappa = G(tau), nodewise.
    pub fn contact_force(&self) -> Result<Field3> {
        let eps = EpsParam::new(self.eps)?;
        let mut out = Vec::with_capacity(self.tau.len());
        for tau in self.tau.values() {
            out.push(contact_force_from_flux(*tau, eps)?);
        }
        Field3::from_values(self.grid(), out)
    }
}

/// Decimated history of one run plus the online audit results.
#[derive(Clone, Debug)]
pub struct RegTrajectory {
    pub eps: f64,
    pub grid: Grid1D,
    pub dt: f64,
    pub sample_every: usize,
    pub g: Vec3,
    pub times: Vec<f64>,
    pub v: Vec<Field3>,
    pub tau: Vec<Field3>,
    pub kappa: Vec<Field3>,
    /// Position integrated online (trapezoid in t), sampled with the rest.
    pub eta: Vec<Field3>,
    pub diagnostics: DiagnosticsSeries,
    /// Worst per-step increase of E_eps (0 when strictly nonincreasing).
    pub max_energy_increase: f64,
    /// Steps whose energy increase exceeded ENERGY_SLACK * (1 + |E|).
    pub energy_slack_violations: usize,
    pub max_dissipation_defect: f64,
    /// Same, restricted to the second half of the run (past the initial
    /// boundary-layer transient of whip data).
    pub max_dissipation_defect_late: f64,
    /// sup over steps of int |v|^2.
    pub sup_kinetic: f64,
    /// Online space-time integral of |kappa| up to the horizon.
    pub tension_l1_total: f64,
}

impl RegTrajectory {
    pub fn final_state(&self) -> RegState {
        RegState {
            v: self.v.last().unwrap().clone(),
            tau: self.tau.last().unwrap().clone(),
            t: *self.times.last().unwrap(),
            eps: self.eps,
        }
    }
}

/// Stable default step for the IMEX splitting: the explicit-coupling CFL
/// dt <= 0.5 h / max(1, |grad G|) with |grad G| up to 1/eps, capped by the
/// diffusion/coupling balance dt <= 2 eps / |grad G|.
pub fn default_dt(grid: Grid1D, eps: f64) -> f64 {
    0.45 * eps * grid.spacing().min(2.0 * eps)
}

fn lipschitz_estimate(kappa: &Field3, eps: f64) -> f64 {
    kappa
        .values()
        .iter()
        .fold(0.0f64, |m, k| m.max(flux_inverse_lipschitz(k.norm(), eps)))
}

/// One IMEX step; `kappa` must be G(tau) of `state` (see
/// [`RegState::contact_force`]). Boundary rows are imposed exactly.
pub fn step_regularized_with_kappa(
    state: &RegState,
    kappa: &Field3,
    dt: f64,
    g: Vec3,
) -> Result<RegState> {
    let grid = state.grid();
    let n = grid.n_nodes();
    let h = grid.spacing();
    if !(state.v.is_finite() && state.tau.is_finite()) {
        return Err(Error::NonFinite {
            what: "regularized state",
            node: 0,
        });
    }
    let lip = lipschitz_estimate(kappa, state.eps);
    let dt_max = 0.5 * h / lip.max(1.0);
    if !(dt > 0.0) || dt > dt_max {
        return Err(Error::StepSize { dt, max: dt_max });
    }

    let kappa_s = kappa.derivative_s(BoundaryFamily::Whip);
    let v_s = state.v.derivative_s(BoundaryFamily::Whip);
    let r = state.eps * dt / (h * h);

    // v: Neumann ghost row at s = 0, Dirichlet v = 0 at s = 1
    let mut lower = vec![-r; n];
    let mut diag = vec![1.0 + 2.0 * r; n];
    let mut upper = vec![-r; n];
    upper[0] = -2.0 * r;
    diag[n - 1] = 1.0;
    lower[n - 1] = 0.0;
    let mut v_new = vec![Vec3::zeros(); n];
    for c in 0..3 {
        let mut rhs: Vec<f64> = (0..n)
            .map(|i| state.v.values()[i][c] + dt * (kappa_s.values()[i][c] + g[c]))
            .collect();
        rhs[n - 1] = 0.0;
        let x = solve_tridiagonal(&lower, &diag, &upper, &rhs)?;
        for (i, xi) in x.into_iter().enumerate() {
            v_new[i][c] = xi;
        }
    }

    // tau: Dirichlet tau = 0 at s = 0, Neumann ghost row at s = 1
    lower = vec![-r; n];
    diag = vec![1.0 + 2.0 * r; n];
    upper = vec![-r; n];
    diag[0] = 1.0;
    upper[0] = 0.0;
    lower[n - 1] = -2.0 * r;
    let mut tau_new = vec![Vec3::zeros(); n];
    for c in 0..3 {
        let mut rhs: Vec<f64> = (0..n)
            .map(|i| state.tau.values()[i][c] + dt * v_s.values()[i][c])
            .collect();
        rhs[0] = 0.0;
        let x = solve_tridiagonal(&lower, &diag, &upper, &rhs)?;
        for (i, xi) in x.into_iter().enumerate() {
            tau_new[i][c] = xi;
        }
    }

    let v = Field3::from_values(grid, v_new)?;
    let tau = Field3::from_values(grid, tau_new)?;
    Ok(RegState {
        v,
        tau,
        t: state.t + dt,
        eps: state.eps,
    })
}

/// One IMEX step of the regularized system.
pub fn step_regularized(state: &RegState, dt: f64, g: Vec3) -> Result<RegState> {
    let kappa = state.contact_force()?;
    step_regularized_with_kappa(state, &kappa, dt, g)
}

/// Run parameters for [`run_regularized`].
#[derive(Clone, Copy, Debug)]
pub struct RegRunParams {
    pub eps: f64,
    pub dt: f64,
    pub horizon: f64,
    pub sample_every: usize,
}

/// Integrate the regularized system from (alpha, beta) to the horizon.
///
/// Requires whip-compatible data: |alpha_s| <= 1 nodewise and alpha(1) = 0.
/// Diagnostics are sampled every `sample_every` steps (plus the final one);
/// the energy audit runs every step.
pub fn run_regularized(
    alpha: &Field3,
    beta: &Field3,
    g: Vec3,
    params: RegRunParams,
) -> Result<RegTrajectory> {
    let grid = alpha.grid();
    if beta.grid() != grid {
        return Err(Error::LengthMismatch {
            expected: grid.n_nodes(),
            got: beta.len(),
        });
    }
    let alpha_s = alpha.derivative_s(BoundaryFamily::Whip);
    let mut issues = Vec::new();
    for (i, t) in alpha_s.values().iter().enumerate() {
        if t.norm() > 1.0 + 1e-9 {
            issues.push(format!("|alpha_s| = {} > 1 at node {i}", t.norm()));
        }
    }
    if alpha.values()[grid.n_nodes() - 1].norm() > 1e-9 {
        issues.push("alpha(1) must vanish for the whip family".to_string());
    }
    if params.horizon < 0.0 {
        issues.push(format!("horizon {} must be non-negative", params.horizon));
    }
    if params.sample_every == 0 {
        issues.push("sample_every must be at least 1".to_string());
    }
    if !issues.is_empty() {
        return Err(Error::Validation { issues });
    }

    run_regularized_from(beta.clone(), alpha_s, alpha.clone(), g, params)
}

/// Integrate from an arbitrary state (v0, tau0) with position eta0; the
/// whip boundary rows still apply. Used by steady-state checks.
pub fn run_regularized_from(
    v0: Field3,
    tau0: Field3,
    eta0: Field3,
    g: Vec3,
    params: RegRunParams,
) -> Result<RegTrajectory> {
    let grid = v0.grid();
    let steps = if params.horizon == 0.0 {
        0
    } else {
        (params.horizon / params.dt).round().max(1.0) as usize
    };
    let dt = if steps == 0 {
        params.dt
    } else {
        params.horizon / steps as f64
    };

    let mut state = RegState::new(v0, tau0, 0.0, params.eps)?;
    let mut eta = eta0;
    let mut kappa = state.contact_force()?;
    let mut accum = 0.0;
    let mut energy = regularized_energy(&state.v, &kappa, &eta, params.eps, g, accum);
    let mut kappa_l1 = integrate_s(&kappa.map_scalar(|x| x.norm()));

    let mut traj = RegTrajectory {
        eps: params.eps,
        grid,
        dt,
        sample_every: params.sample_every,
        g,
        times: Vec::new(),
        v: Vec::new(),
        tau: Vec::new(),
        kappa: Vec::new(),
        eta: Vec::new(),
        diagnostics: DiagnosticsSeries::default(),
        max_energy_increase: 0.0,
        energy_slack_violations: 0,
        max_dissipation_defect: 0.0,
        max_dissipation_defect_late: 0.0,
        sup_kinetic: integrate_s(&state.v.map_scalar(|x| x.norm_squared())),
        tension_l1_total: 0.0,
    };
    record_sample(&mut traj, &state, &kappa, &eta, energy, 0.0, 0.0);

    for k in 1..=steps {
        let next = step_regularized_with_kappa(&state, &kappa, dt, g)?;
        let kappa_next = next.contact_force()?;

        // online position and history-term quadrature
        for i in 0..grid.n_nodes() {
            let avg = (state.v.values()[i] + next.v.values()[i]) * 0.5;
            eta.values_mut()[i] += avg * dt;
        }
        let grad_g_rate = {
            let gk = kappa_next.derivative_s(BoundaryFamily::Whip);
            let ts = next.tau.derivative_s(BoundaryFamily::Whip);
            let prod = FieldScalar::from_values(
                grid,
                gk.values()
                    .iter()
                    .zip(ts.values())
                    .map(|(a, b)| a.dot(b))
                    .collect(),
            )?;
            integrate_s(&prod)
        };
        accum += dt * params.eps * grad_g_rate;

        let energy_next = regularized_energy(&next.v, &kappa_next, &eta, params.eps, g, accum);
        let jump = energy_next - energy;
        if jump > 0.0 {
            traj.max_energy_increase = traj.max_energy_increase.max(jump);
            if jump > ENERGY_SLACK * (1.0 + energy.abs()) {
                traj.energy_slack_violations += 1;
            }
        }
        let vs = next.v.derivative_s(BoundaryFamily::Whip);
        let diss = integrate_s(&vs.map_scalar(|x| x.norm_squared()));
        let defect = (jump / dt + params.eps * diss).abs();
        traj.max_dissipation_defect = traj.max_dissipation_defect.max(defect);
        if 2 * k > steps {
            traj.max_dissipation_defect_late = traj.max_dissipation_defect_late.max(defect);
        }

        let kin = integrate_s(&next.v.map_scalar(|x| x.norm_squared()));
        traj.sup_kinetic = traj.sup_kinetic.max(kin);
        let kappa_l1_next = integrate_s(&kappa_next.map_scalar(|x| x.norm()));
        traj.tension_l1_total += 0.5 * dt * (kappa_l1 + kappa_l1_next);
        kappa_l1 = kappa_l1_next;

        let norm = next.v.max_norm().max(next.tau.max_norm());
        if !norm.is_finite() || norm > BLOWUP_NORM {
            return Err(Error::Diverged { t: next.t, norm });
        }

        state = next;
        kappa = kappa_next;
        energy = energy_next;
        if k % params.sample_every == 0 || k == steps {
            let l1 = traj.tension_l1_total;
            record_sample(&mut traj, &state, &kappa, &eta, energy, l1, defect);
        }
    }
    Ok(traj)
}

fn record_sample(
    traj: &mut RegTrajectory,
    state: &RegState,
    kappa: &Field3,
    eta: &Field3,
    e_eps: f64,
    l1_running: f64,
    defect: f64,
) {
    let (k, p, e) = crate::diagnostics::conserved_energies(eta, &state.v, traj.g);
    traj.times.push(state.t);
    traj.v.push(state.v.clone());
    traj.tau.push(state.tau.clone());
    traj.kappa.push(kappa.clone());
    traj.eta.push(eta.clone());
    traj.diagnostics.times.push(state.t);
    traj.diagnostics.kinetic.push(k);
    traj.diagnostics.potential.push(p);
    traj.diagnostics.total.push(e);
    traj.diagnostics.e_eps.push(e_eps);
    traj.diagnostics.tension_l1_running.push(l1_running);
    traj.diagnostics.constraint_drift.push(0.0);
    traj.diagnostics.dissipation_defect.push(defect);
}

/// Positions rebuilt from the retained velocity samples by trapezoidal
/// quadrature in time, added to alpha.
pub fn reconstruct_eta(traj: &RegTrajectory, alpha: &Field3) -> Result<Vec<Field3>> {
    if traj.times.is_empty() {
        return Err(Error::EmptyHistory(
            "reconstruct_eta needs retained velocity samples",
        ));
    }
    if alpha.grid() != traj.grid {
        return Err(Error::LengthMismatch {
            expected: traj.grid.n_nodes(),
            got: alpha.len(),
        });
    }
    let mut out = Vec::with_capacity(traj.times.len());
    let mut eta = alpha.clone();
    out.push(eta.clone());
    for j in 1..traj.times.len() {
        let dt = traj.times[j] - traj.times[j - 1];
        for i in 0..traj.grid.n_nodes() {
            let avg = (traj.v[j - 1].values()[i] + traj.v[j].values()[i]) * 0.5;
            eta.values_mut()[i] += avg * dt;
        }
        out.push(eta.clone());
    }
    Ok(out)
}

/// Residual of the velocity-potential identity v = phi_s + g t + beta with
/// phi(t,s) = int_0^t kappa dz, measured in L2(0,1) and maximized over the
/// retained samples. Exact for the unregularized system; O(eps) here.
pub fn velocity_potential_check(traj: &RegTrajectory, beta: &Field3, g: Vec3) -> Result<f64> {
    if traj.times.is_empty() {
        return Err(Error::EmptyHistory(
            "velocity_potential_check needs kappa samples",
        ));
    }
    let grid = traj.grid;
    let mut phi = Field3::zeros(grid);
    let mut worst = 0.0f64;
    for j in 0..traj.times.len() {
        if j > 0 {
            let dt = traj.times[j] - traj.times[j - 1];
            for i in 0..grid.n_nodes() {
                let avg = (traj.kappa[j - 1].values()[i] + traj.kappa[j].values()[i]) * 0.5;
                phi.values_mut()[i] += avg * dt;
            }
        }
        let phi_s = phi.derivative_s(BoundaryFamily::Whip);
        let t = traj.times[j];
        let mut diff = Vec::with_capacity(grid.n_nodes());
        for i in 0..grid.n_nodes() {
            diff.push(traj.v[j].values()[i] - phi_s.values()[i] - g * t - beta.values()[i]);
        }
        let res = Field3::from_values(grid, diff)?.l2_norm();
        worst = worst.max(res);
    }
    Ok(worst)
}

/// The downward configuration the regularized flow relaxes toward as
/// eps -> 0: v = 0 and tau built by forward-evaluating the flux along
/// kappa(s) = -g s.
pub fn downward_state(grid: Grid1D, g: Vec3, eps: f64) -> Result<RegState> {
    let ep = EpsParam::new(eps)?;
    let tau = Field3::from_fn(grid, |s| regularized_flux(-g * s, ep));
    RegState::new(Field3::zeros(grid), tau, 0.0, eps)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gvec() -> Vec3 {
        Vec3::new(0.0, 0.0, -9.8)
    }

    fn grid(n: usize) -> Grid1D {
        Grid1D::new(n).unwrap()
    }

    #[test]
    fn zero_state_stays_zero_without_gravity() {
        let g = grid(51);
        let state = RegState::new(Field3::zeros(g), Field3::zeros(g), 0.0, 0.1).unwrap();
        let dt = default_dt(g, 0.1);
        let mut s = state;
        for _ in 0..25 {
            s = step_regularized(&s, dt, Vec3::zeros()).unwrap();
        }
        assert_eq!(s.v.max_norm(), 0.0);
        assert_eq!(s.tau.max_norm(), 0.0);
    }

    #[test]
    fn downward_state_velocity_invariant_and_tau_drift_is_pure_diffusion() {
        // With kappa(s) = -g s the coupling (G(tau))_s + g cancels exactly
        // (linear field, exact stencils), so v stays zero through the step;
        // tau moves only by its implicit diffusion (the profile tau(kappa(s))
        // is curved in s, so eps tau_ss does not vanish).
        let g = grid(101);
        let eps = 0.1;
        let state = downward_state(g, gvec(), eps).unwrap();
        let dt = default_dt(g, eps);
        let next = step_regularized(&state, dt, gvec()).unwrap();
        assert!(
            next.v.max_norm() < 1e-10,
            "v moved by {}",
            next.v.max_norm()
        );

        // pure-diffusion oracle: the same implicit solve with v_s = 0
        let n = g.n_nodes();
        let h = g.spacing();
        let r = eps * dt / (h * h);
        let mut lower = vec![-r; n];
        let mut diag = vec![1.0 + 2.0 * r; n];
        let mut upper = vec![-r; n];
        diag[0] = 1.0;
        upper[0] = 0.0;
        lower[n - 1] = -2.0 * r;
        for c in 0..3 {
            let mut rhs: Vec<f64> = state.tau.values().iter().map(|v| v[c]).collect();
            rhs[0] = 0.0;
            let x = solve_tridiagonal(&lower, &diag, &upper, &rhs).unwrap();
            for i in 0..n {
                assert!(
                    (next.tau.values()[i][c] - x[i]).abs() < 1e-12,
                    "tau drift is not pure diffusion at node {i}"
                );
            }
        }
    }

    #[test]
    fn small_drive_velocity_bound() {
        // g = 0, v = 0, |tau| <= 1: one step keeps ||v||_inf <= dt ||(G(tau))_s||_inf
        let g = grid(81);
        let eps = 0.2;
        let tau = Field3::from_fn(g, |s| {
            Vec3::new(0.0, 0.0, -(std::f64::consts::PI * s).sin())
        });
        let state = RegState::new(Field3::zeros(g), tau, 0.0, eps).unwrap();
        let kappa = state.contact_force().unwrap();
        for k in kappa.values() {
            assert!(k.norm() < 1.0);
        }
        let dt = default_dt(g, eps);
        let next = step_regularized(&state, dt, Vec3::zeros()).unwrap();
        let drive = kappa.derivative_s(BoundaryFamily::Whip).max_norm();
        assert!(
            next.v.max_norm() <= dt * drive * (1.0 + 1e-12),
            "bound violated"
        );
    }

    #[test]
    fn step_size_restriction_is_enforced() {
        let g = grid(51);
        let eps = 0.05;
        let tau = Field3::from_fn(g, |s| Vec3::new(0.0, 0.0, 3.0 * s));
        let state = RegState::new(Field3::zeros(g), tau, 0.0, eps).unwrap();
        let err = step_regularized(&state, 1.0, gvec());
        assert!(matches!(err, Err(Error::StepSize { .. })));
    }

    #[test]
    fn blowup_reports_divergence_with_time_stamp() {
        // a state already past the norm ceiling diverges on the first step
        let g = grid(41);
        let eps = 0.5;
        let tau = Field3::from_fn(g, |s| Vec3::new(0.0, 0.0, 1e13 * (0.1 + s)));
        let alpha = Field3::zeros(g);
        let mut state = RegState::new(Field3::zeros(g), tau.clone(), 0.0, eps).unwrap();
        let dt = default_dt(g, eps);
        state = step_regularized(&state, dt, Vec3::zeros()).unwrap();
        assert!(state.tau.max_norm() > BLOWUP_NORM);
        // the run driver turns that into a divergence error carrying t
        let params = RegRunParams {
            eps,
            dt,
            horizon: 10.0 * dt,
            sample_every: 1,
        };
        let err = run_regularized_from(Field3::zeros(g), tau, alpha, Vec3::zeros(), params);
        match err {
            Err(Error::Diverged { t, .. }) => assert!(t > 0.0),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn zero_horizon_returns_initial_state_only() {
        let g = grid(41);
        let alpha = Field3::from_fn(g, |s| Vec3::new(0.0, 0.0, -(1.0 - s)));
        let beta = Field3::zeros(g);
        let params = RegRunParams {
            eps: 0.1,
            dt: 1e-3,
            horizon: 0.0,
            sample_every: 1,
        };
        let traj = run_regularized(&alpha, &beta, gvec(), params).unwrap();
        assert_eq!(traj.times.len(), 1);
        assert_eq!(traj.times[0], 0.0);
    }

    #[test]
    fn boundary_rows_hold_every_step() {
        let g = grid(61);
        let ghat = Vec3::new(0.0, 0.0, -1.0);
        let alpha = Field3::from_fn(g, |s| ghat * (1.0 - s));
        let beta = Field3::zeros(g);
        let eps = 0.1;
        let params = RegRunParams {
            eps,
            dt: default_dt(g, eps),
            horizon: 0.05,
            sample_every: 7,
        };
        let traj = run_regularized(&alpha, &beta, gvec(), params).unwrap();
        let h = g.spacing();
        let n = g.n_nodes();
        for j in 1..traj.times.len() {
            let v = &traj.v[j];
            let tau = &traj.tau[j];
            assert_eq!(v.values()[n - 1], Vec3::zeros());
            assert_eq!(tau.values()[0], Vec3::zeros());
            // one-sided stencil values vanish to stencil order (ghost rows)
            let vs0 = (v.values()[1] * 4.0 - v.values()[2] - v.values()[0] * 3.0) / (2.0 * h);
            let ts1 = (tau.values()[n - 1] * 3.0 - tau.values()[n - 2] * 4.0 + tau.values()[n - 3])
                / (2.0 * h);
            assert!(vs0.norm() <= 20.0 * h, "v_s(0) = {}", vs0.norm());
            assert!(ts1.norm() <= 20.0 * h, "tau_s(1) = {}", ts1.norm());
        }
    }

    fn empty_traj(g: Grid1D, times: Vec<f64>) -> RegTrajectory {
        let k = times.len();
        RegTrajectory {
            eps: 0.1,
            grid: g,
            dt: 0.1,
            sample_every: 1,
            g: Vec3::zeros(),
            times,
            v: vec![Field3::zeros(g); k],
            tau: vec![Field3::zeros(g); k],
            kappa: vec![Field3::zeros(g); k],
            eta: vec![],
            diagnostics: DiagnosticsSeries::default(),
            max_energy_increase: 0.0,
            energy_slack_violations: 0,
            max_dissipation_defect: 0.0,
            max_dissipation_defect_late: 0.0,
            sup_kinetic: 0.0,
            tension_l1_total: 0.0,
        }
    }

    #[test]
    fn reconstruct_eta_trivial_cases() {
        let g = grid(31);
        let alpha = Field3::from_fn(g, |s| Vec3::new(s, 0.0, 0.0));
        let mut traj = empty_traj(g, vec![0.0, 0.5, 1.0]);
        // v == 0 -> eta == alpha at all samples
        let etas = reconstruct_eta(&traj, &alpha).unwrap();
        for e in &etas {
            for (a, b) in e.values().iter().zip(alpha.values()) {
                assert_eq!(a, b);
            }
        }
        // v == const c -> eta = alpha + t c, exact for trapezoid
        let c = Vec3::new(0.0, 2.0, -1.0);
        traj.v = vec![Field3::from_fn(g, |_| c); 3];
        let etas = reconstruct_eta(&traj, &alpha).unwrap();
        for (j, t) in traj.times.iter().enumerate() {
            for (a, b) in etas[j].values().iter().zip(alpha.values()) {
                assert!((a - b - c * *t).norm() < 1e-14);
            }
        }
        let empty = empty_traj(g, vec![]);
        assert!(reconstruct_eta(&empty, &alpha).is_err());
    }

    #[test]
    fn velocity_potential_zero_scenario() {
        let g = grid(31);
        let traj = empty_traj(g, vec![0.0, 0.5, 1.0]);
        let res = velocity_potential_check(&traj, &Field3::zeros(g), Vec3::zeros()).unwrap();
        assert_eq!(res, 0.0);
    }

    #[test]
    fn energy_monotone_on_short_upright_run() {
        let g = grid(101);
        let ghat = Vec3::new(0.0, 0.0, -1.0);
        let alpha = Field3::from_fn(g, |s| ghat * (s - 1.0));
        let beta = Field3::zeros(g);
        let eps = 0.1;
        let params = RegRunParams {
            eps,
            dt: default_dt(g, eps),
            horizon: 0.2,
            sample_every: 50,
        };
        let traj = run_regularized(&alpha, &beta, gvec(), params).unwrap();
        assert_eq!(
            traj.energy_slack_violations, 0,
            "max jump {}",
            traj.max_energy_increase
        );
        let e = &traj.diagnostics.e_eps;
        assert!(e
            .windows(2)
            .all(|w| w[1] <= w[0] + ENERGY_SLACK * (1.0 + w[0].abs())));
    }
}
