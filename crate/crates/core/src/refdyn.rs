//! Reference solver for the constrained system: eta_tt = (sigma eta_s)_s + g
//! with |eta_s| = 1, the tension resolved from its boundary value problem at
//! every force evaluation.
//!
//! Discretization is the lumped-mass particle chain with unit link lengths;
//! end nodes carry half cells so the discrete energy pairs exactly with
//! trapezoidal quadrature. Time stepping is constrained velocity Verlet
//! (RATTLE): gravity is the only applied force, the position stage restores
//! link lengths by Newton on link multipliers along the pre-step link
//! directions, and the velocity stage projects out every link-stretch rate;
//! both projections are mass-weighted so the constraint impulses are the
//! discrete tension. The BVP tension is solved each step for the step-size
//! bound, diagnostics, and output; in flux form
//! sigma_{i+1/2} (eta_{i+1} - eta_i)/h its divergence reproduces the same
//! constraint force to discretization order, which the stationary-state
//! tests pin down.

use crate::diagnostics::{conserved_energies, DiagnosticsSeries};
use crate::error::{Error, Result};
use crate::grid::{
    integrate_s, solve_cyclic_tridiagonal, solve_tridiagonal, Field3, FieldScalar, Grid1D, Vec3,
};
use crate::tension::{solve_tension, BoundaryFamily, TensionProblem};

/// Pre-projection link stretch budget; breaching it aborts the run.
pub const DRIFT_BUDGET: f64 = 1e-4;
/// Post-projection link stretch bound.
pub const DRIFT_AFTER_PROJECTION: f64 = 1e-8;

/// State of the constrained solver.
#[derive(Clone, Debug)]
pub struct ConstrainedState {
    pub eta: Field3,
    pub v: Field3,
    pub t: f64,
}

impl ConstrainedState {
    pub fn grid(&self) -> Grid1D {
        self.eta.grid()
    }
}

/// Static step context: the family, gravity, and pinned end positions.
#[derive(Clone, Copy, Debug)]
pub struct StepContext {
    pub bc: BoundaryFamily,
    pub g: Vec3,
    pub pin_first: Option<Vec3>,
    pub pin_last: Option<Vec3>,
}

impl StepContext {
    pub fn for_family(bc: BoundaryFamily, g: Vec3, alpha: &Field3) -> Self {
        let n = alpha.len();
        let (pin_first, pin_last) = match bc {
            BoundaryFamily::Whip => (None, Some(alpha.values()[n - 1])),
            BoundaryFamily::TwoFixed => (Some(alpha.values()[0]), Some(alpha.values()[n - 1])),
            _ => (None, None),
        };
        StepContext {
            bc,
            g,
            pin_first,
            pin_last,
        }
    }
}

/// Acceleration (sigma eta_s)_s + g in lumped flux form, plus the tension
/// used; pinned nodes get zero acceleration.
pub fn acceleration(eta: &Field3, v: &Field3, ctx: &StepContext) -> Result<(Field3, FieldScalar)> {
    let grid = eta.grid();
    let n = grid.n_nodes();
    let h = grid.spacing();
    let eta_ss = eta.second_derivative_s(ctx.bc);
    let v_s = v.derivative_s(ctx.bc);
    let eta_s = eta.derivative_s(ctx.bc);
    let problem = TensionProblem {
        eta_ss_sq: eta_ss.map_scalar(|x| x.norm_squared()),
        eta_st_sq: v_s.map_scalar(|x| x.norm_squared()),
        bc: ctx.bc,
        g: ctx.g,
        eta_s_ends: (eta_s.values()[0], eta_s.values()[n - 1]),
    };
    let sigma = solve_tension(&problem, grid)?;

    let sv = sigma.values();
    let ev = eta.values();
    let face = |i: usize| -> Vec3 {
        // flux through the link between nodes i and i+1
        0.5 * (sv[i] + sv[i + 1]) * (ev[i + 1] - ev[i]) / h
    };
    let mut a = vec![Vec3::zeros(); n];
    match ctx.bc {
        BoundaryFamily::Periodic => {
            let m = n - 1;
            let wrap_face = 0.5 * (sv[m - 1] + sv[0]) * (ev[0] - ev[m - 1]) / h;
            for i in 0..m {
                let right = if i == m - 1 { wrap_face } else { face(i) };
                let left = if i == 0 { wrap_face } else { face(i - 1) };
                a[i] = (right - left) / h + ctx.g;
            }
            a[n - 1] = a[0];
        }
        _ => {
            for i in 1..n - 1 {
                a[i] = (face(i) - face(i - 1)) / h + ctx.g;
            }
            // half cells at the ends; boundary flux vanishes at free ends
            if ctx.pin_first.is_none() {
                a[0] = face(0) / (0.5 * h) + ctx.g;
            }
            if ctx.pin_last.is_none() {
                a[n - 1] = -face(n - 2) / (0.5 * h) + ctx.g;
            }
        }
    }
    Ok((Field3::from_values(grid, a)?, sigma))
}

/// Inverse lumped masses in relative units (interior 1, half cells at free
/// ends), zeroed at pinned nodes. These weight the constraint projections so
/// the impulses are consistent with the trapezoidal energy.
fn inverse_masses(bc: BoundaryFamily, n: usize) -> Vec<f64> {
    let mut im = vec![1.0; n];
    match bc {
        BoundaryFamily::Periodic => {}
        BoundaryFamily::Whip => {
            im[0] = 2.0;
            im[n - 1] = 0.0;
        }
        BoundaryFamily::TwoFree => {
            im[0] = 2.0;
            im[n - 1] = 2.0;
        }
        BoundaryFamily::TwoFixed => {
            im[0] = 0.0;
            im[n - 1] = 0.0;
        }
    }
    im
}

/// Restore every link to length h by a Newton iteration on the link
/// constraints, with corrections along the current link directions
/// (tridiagonal in the link multipliers; cyclic for the ring). Pinned nodes
/// stay exactly put; the mean is preserved for the unpinned families. This
/// is the position stage of a constrained Verlet step, so the projection
/// work stays at the step's own truncation order and the discrete energy
/// drift remains second order in dt.
pub fn project_arclength(eta: &mut Field3, bc: BoundaryFamily, h: f64) -> Result<()> {
    let n = eta.len();
    let keep_mean = matches!(bc, BoundaryFamily::TwoFree | BoundaryFamily::Periodic);
    let mean_before = if keep_mean { Some(mean(eta)) } else { None };
    polish_links(eta, bc, h)?;
    if let Some(m0) = mean_before {
        let shift = m0 - mean(eta);
        for v in eta.values_mut() {
            *v += shift;
        }
    }
    if bc == BoundaryFamily::Periodic {
        let first = eta.values()[0];
        eta.values_mut()[n - 1] = first;
    }
    Ok(())
}

fn mean(f: &Field3) -> Vec3 {
    let n = f.len();
    f.values().iter().sum::<Vec3>() / n as f64
}

/// Newton iterations on the link-length constraints with node corrections
/// restricted to the fixed direction basis `dirs` (one unit vector per
/// link); tridiagonal (cyclic for the ring) in the link multipliers. With
/// the pre-step link directions as the basis this is the position stage of
/// a constrained (SHAKE-style) Verlet step.
fn project_links_along(eta: &mut Field3, dirs: &[Vec3], bc: BoundaryFamily, h: f64) -> Result<()> {
    let n = eta.len();
    let cyclic = bc == BoundaryFamily::Periodic;
    let m = n - 1;
    let im = inverse_masses(bc, n);
    let wnode = |j: usize| im[j.min(n - 1)];
    for _ in 0..16 {
        let mut links: Vec<Vec3> = Vec::with_capacity(m);
        let mut resid = vec![0.0; m];
        let mut worst = 0.0f64;
        for i in 0..m {
            let j = if cyclic && i == m - 1 { 0 } else { i + 1 };
            let l = eta.values()[j] - eta.values()[i];
            let d = l.norm();
            links.push(l / d);
            resid[i] = h - d;
            worst = worst.max((d - h).abs());
        }
        if worst <= 1e-13 * h.max(1e-30) {
            return Ok(());
        }
        let mut lower = vec![0.0; m];
        let mut diag = vec![0.0; m];
        let mut upper = vec![0.0; m];
        for i in 0..m {
            let jn = if cyclic && i == m - 1 { 0 } else { i + 1 };
            let ip = if i + 1 < m {
                i + 1
            } else if cyclic {
                0
            } else {
                i
            };
            let im = if i > 0 {
                i - 1
            } else if cyclic {
                m - 1
            } else {
                i
            };
            diag[i] = -(wnode(i) + wnode(jn)) * links[i].dot(&dirs[i]);
            if i + 1 < m || cyclic {
                upper[i] = wnode(jn) * links[i].dot(&dirs[ip]);
            }
            if i > 0 || cyclic {
                lower[i] = wnode(i) * links[i].dot(&dirs[im]);
            }
        }
        let mu = if cyclic {
            solve_cyclic_tridiagonal(&lower, &diag, &upper, &resid)?
        } else {
            solve_tridiagonal(&lower, &diag, &upper, &resid)?
        };
        for j in 0..n {
            if cyclic && j == n - 1 {
                let first = eta.values()[0];
                eta.values_mut()[j] = first;
                continue;
            }
            if im[j] == 0.0 {
                continue;
            }
            let mut delta = Vec3::zeros();
            if j < m {
                delta += mu[j] * dirs[j];
            }
            if j > 0 && j - 1 < m {
                delta -= mu[j - 1] * dirs[j - 1];
            } else if cyclic && j == 0 {
                delta -= mu[m - 1] * dirs[m - 1];
            }
            eta.values_mut()[j] += delta * im[j];
        }
    }
    let mut worst = 0.0f64;
    for i in 0..m {
        let j = if cyclic && i == m - 1 { 0 } else { i + 1 };
        let d = (eta.values()[j] - eta.values()[i]).norm();
        worst = worst.max((d / h - 1.0).abs());
    }
    if worst > DRIFT_AFTER_PROJECTION {
        return Err(Error::ConstraintDrift {
            t: f64::NAN,
            drift: worst,
            budget: DRIFT_AFTER_PROJECTION,
        });
    }
    Ok(())
}

fn current_link_dirs(eta: &Field3, bc: BoundaryFamily) -> Vec<Vec3> {
    let n = eta.len();
    let cyclic = bc == BoundaryFamily::Periodic;
    let m = n - 1;
    let mut dirs = Vec::with_capacity(m);
    for i in 0..m {
        let j = if cyclic && i == m - 1 { 0 } else { i + 1 };
        let l = eta.values()[j] - eta.values()[i];
        dirs.push(l / l.norm());
    }
    dirs
}

fn polish_links(eta: &mut Field3, bc: BoundaryFamily, h: f64) -> Result<()> {
    let dirs = current_link_dirs(eta, bc);
    project_links_along(eta, &dirs, bc, h)
}

/// Project the velocity so every link length is stationary:
/// (v_{i+1} - v_i) . link_dir_i = 0, with pinned nodes immobile. One
/// tridiagonal solve in the link multipliers; exact for this linear
/// constraint set.
pub fn project_velocity(v: &mut Field3, eta: &Field3, bc: BoundaryFamily) -> Result<()> {
    let n = v.len();
    let cyclic = bc == BoundaryFamily::Periodic;
    let m = n - 1;
    let im = inverse_masses(bc, n);
    let wnode = |j: usize| im[j.min(n - 1)];
    let mut dirs: Vec<Vec3> = Vec::with_capacity(m);
    let mut rhs = vec![0.0; m];
    for i in 0..m {
        let j = if cyclic && i == m - 1 { 0 } else { i + 1 };
        let l = eta.values()[j] - eta.values()[i];
        let d = l.norm();
        dirs.push(l / d);
        rhs[i] = (v.values()[j] - v.values()[i]).dot(&dirs[i]);
    }
    let mut lower = vec![0.0; m];
    let mut diag = vec![0.0; m];
    let mut upper = vec![0.0; m];
    for i in 0..m {
        let jn = if cyclic && i == m - 1 { 0 } else { i + 1 };
        let ip = if i + 1 < m {
            i + 1
        } else if cyclic {
            0
        } else {
            i
        };
        let im = if i > 0 {
            i - 1
        } else if cyclic {
            m - 1
        } else {
            i
        };
        diag[i] = wnode(i) + wnode(jn);
        if i + 1 < m || cyclic {
            upper[i] = -wnode(jn) * dirs[i].dot(&dirs[ip]);
        }
        if i > 0 || cyclic {
            lower[i] = -wnode(i) * dirs[i].dot(&dirs[im]);
        }
    }
    let lambda = if cyclic {
        solve_cyclic_tridiagonal(&lower, &diag, &upper, &rhs)?
    } else {
        solve_tridiagonal(&lower, &diag, &upper, &rhs)?
    };
    for j in 0..n {
        if im[j] == 0.0 && !cyclic {
            continue;
        }
        if cyclic && j == n - 1 {
            let first = v.values()[0];
            v.values_mut()[j] = first;
            continue;
        }
        let mut delta = Vec3::zeros();
        if j < m {
            delta += lambda[j] * dirs[j];
        }
        if j > 0 && j - 1 < m {
            delta -= lambda[j - 1] * dirs[j - 1];
        } else if cyclic && j == 0 {
            delta -= lambda[m - 1] * dirs[m - 1];
        }
        v.values_mut()[j] += delta * im[j];
    }
    Ok(())
}

/// Maximum link stretch | |link|/h - 1 | of a configuration.
pub fn link_drift(eta: &Field3, bc: BoundaryFamily) -> f64 {
    let n = eta.len();
    let h = eta.grid().spacing();
    let cyclic = bc == BoundaryFamily::Periodic;
    let m = n - 1;
    let mut worst = 0.0f64;
    for i in 0..m {
        let j = if cyclic && i == m - 1 { 0 } else { i + 1 };
        let d = (eta.values()[j] - eta.values()[i]).norm();
        worst = worst.max((d / h - 1.0).abs());
    }
    worst
}

/// Maximum link-wise orthogonality residual |(dv . dl)| / h^2 of (eta, v).
pub fn link_orthogonality(eta: &Field3, v: &Field3, bc: BoundaryFamily) -> f64 {
    let n = eta.len();
    let h = eta.grid().spacing();
    let cyclic = bc == BoundaryFamily::Periodic;
    let m = n - 1;
    let mut worst = 0.0f64;
    for i in 0..m {
        let j = if cyclic && i == m - 1 { 0 } else { i + 1 };
        let dl = eta.values()[j] - eta.values()[i];
        let dv = v.values()[j] - v.values()[i];
        worst = worst.max(dv.dot(&dl).abs() / (h * h));
    }
    worst
}

/// One constrained velocity-Verlet (RATTLE) step. Gravity is the only
/// applied force; the link multipliers of the position and velocity
/// projections carry the constraint force, which is the discrete tension.
/// The tension boundary value problem is solved at each force evaluation
/// and returned for diagnostics and output; it agrees with the multiplier
/// route to discretization order.
pub fn step_constrained(
    state: &ConstrainedState,
    dt: f64,
    ctx: &StepContext,
) -> Result<(ConstrainedState, FieldScalar)> {
    let grid = state.grid();
    let h = grid.spacing();
    let n = grid.n_nodes();
    let (_, sigma1) = acceleration(&state.eta, &state.v, ctx)?;
    let sig_max = sigma1
        .values()
        .iter()
        .fold(0.0f64, |mx, s| mx.max(s.max(0.0)));
    let dt_max = 0.5 * h / (sig_max + 1.0).sqrt();
    if !(dt > 0.0) || dt > dt_max {
        return Err(Error::StepSize { dt, max: dt_max });
    }

    // half kick (external force) and drift
    let mut v_half = state.v.clone();
    for i in 0..n {
        v_half.values_mut()[i] += ctx.g * (0.5 * dt);
    }
    pin_velocities(&mut v_half, ctx);
    let dirs_old = current_link_dirs(&state.eta, ctx.bc);
    let mut eta_new = state.eta.clone();
    for i in 0..n {
        eta_new.values_mut()[i] += v_half.values()[i] * dt;
    }
    pin_positions(&mut eta_new, ctx);
    let drift_pre = link_drift(&eta_new, ctx.bc);
    if drift_pre > DRIFT_BUDGET {
        return Err(Error::ConstraintDrift {
            t: state.t + dt,
            drift: drift_pre,
            budget: DRIFT_BUDGET,
        });
    }
    // position-stage multipliers along the pre-step link directions
    project_links_along(&mut eta_new, &dirs_old, ctx.bc, h)?;

    // the realized half-step velocity includes the constraint impulse
    for i in 0..n {
        let dv = (eta_new.values()[i] - state.eta.values()[i]) / dt;
        v_half.values_mut()[i] = dv;
    }
    pin_velocities(&mut v_half, ctx);

    // second half kick and velocity-stage multipliers
    let mut v_new = v_half;
    for i in 0..n {
        v_new.values_mut()[i] += ctx.g * (0.5 * dt);
    }
    pin_velocities(&mut v_new, ctx);
    project_velocity(&mut v_new, &eta_new, ctx.bc)?;

    let (_, sigma2) = acceleration(&eta_new, &v_new, ctx)?;
    Ok((
        ConstrainedState {
            eta: eta_new,
            v: v_new,
            t: state.t + dt,
        },
        sigma2,
    ))
}

fn pin_positions(eta: &mut Field3, ctx: &StepContext) {
    let n = eta.len();
    if let Some(p) = ctx.pin_first {
        eta.values_mut()[0] = p;
    }
    if let Some(p) = ctx.pin_last {
        eta.values_mut()[n - 1] = p;
    }
}

fn pin_velocities(v: &mut Field3, ctx: &StepContext) {
    let n = v.len();
    if ctx.pin_first.is_some() {
        v.values_mut()[0] = Vec3::zeros();
    }
    if ctx.pin_last.is_some() {
        v.values_mut()[n - 1] = Vec3::zeros();
    }
}

/// Run parameters for [`run_constrained`].
#[derive(Clone, Copy, Debug)]
pub struct RefRunParams {
    pub dt: f64,
    pub horizon: f64,
    pub sample_every: usize,
}

/// Decimated history of one constrained run.
#[derive(Clone, Debug)]
pub struct ConstrainedTrajectory {
    pub grid: Grid1D,
    pub bc: BoundaryFamily,
    pub g: Vec3,
    pub dt: f64,
    pub times: Vec<f64>,
    pub eta: Vec<Field3>,
    pub v: Vec<Field3>,
    pub sigma: Vec<FieldScalar>,
    pub diagnostics: DiagnosticsSeries,
    /// Validation warnings raised at startup (isolated compatibility
    /// violations such as a fold corner); the run proceeds with these.
    pub flags: Vec<String>,
    pub max_drift_pre: f64,
    pub max_drift_post: f64,
    pub max_link_orthogonality: f64,
    pub sup_kinetic: f64,
}

impl ConstrainedTrajectory {
    pub fn final_state(&self) -> ConstrainedState {
        ConstrainedState {
            eta: self.eta.last().unwrap().clone(),
            v: self.v.last().unwrap().clone(),
            t: *self.times.last().unwrap(),
        }
    }
}

/// Conservative default step: half the CFL bound at the given tension
/// scale, capped so the free drift of one step (acceleration scale
/// `accel`, typically |g| plus the internal scale) stays inside the link
/// stretch budget.
pub fn default_dt_constrained(grid: Grid1D, sigma_max: f64, accel: f64) -> f64 {
    let h = grid.spacing();
    let cfl = 0.25 * h / (sigma_max.max(0.0) + 1.0).sqrt();
    let drift = (0.5 * DRIFT_BUDGET * h / accel.max(1.0)).sqrt();
    cfl.min(drift)
}

/// Integrate the constrained system from (alpha, beta).
///
/// Initial data must satisfy |alpha_s| = 1 and alpha_s . beta_s = 0 within
/// 1e-8 nodewise; isolated corner violations (the folded chain) raise a
/// warning flag and the run proceeds, widespread violations are an error.
pub fn run_constrained(
    alpha: &Field3,
    beta: &Field3,
    bc: BoundaryFamily,
    g: Vec3,
    params: RefRunParams,
) -> Result<ConstrainedTrajectory> {
    let grid = alpha.grid();
    if beta.grid() != grid {
        return Err(Error::LengthMismatch {
            expected: grid.n_nodes(),
            got: beta.len(),
        });
    }
    let n = grid.n_nodes();
    let alpha_s = alpha.derivative_s(bc);
    let beta_s = beta.derivative_s(bc);
    // The central stencil carries an O(h^2) floor on smooth curved data, so
    // the compatibility tolerance cannot sit below it.
    let h = grid.spacing();
    let bs_max = beta_s.values().iter().fold(0.0f64, |m, v| m.max(v.norm()));
    let tol1 = 1e-8f64.max(10.0 * h * h);
    let tol2 = 1e-8f64.max(10.0 * h * h * (1.0 + bs_max * bs_max));
    let mut flags = Vec::new();
    let mut bad = Vec::new();
    for i in 0..n {
        let r1 = (alpha_s.values()[i].norm() - 1.0).abs();
        let r2 = alpha_s.values()[i].dot(&beta_s.values()[i]).abs();
        if r1 > tol1 {
            bad.push(format!("|alpha_s| - 1 = {r1:.3e} at node {i}"));
        }
        if r2 > tol2 {
            bad.push(format!("alpha_s . beta_s = {r2:.3e} at node {i}"));
        }
    }
    let isolated = n.div_ceil(20).max(2);
    if bad.len() > isolated {
        return Err(Error::Incompatible(bad.join("; ")));
    }
    flags.extend(bad);

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

    let ctx = StepContext::for_family(bc, g, alpha);
    // start on the constraint manifold: project the sampled data once
    let mut eta0 = alpha.clone();
    project_arclength(&mut eta0, bc, grid.spacing())?;
    let mut v0 = beta.clone();
    pin_velocities(&mut v0, &ctx);
    project_velocity(&mut v0, &eta0, bc)?;
    let mut state = ConstrainedState {
        eta: eta0,
        v: v0,
        t: 0.0,
    };
    let (_, sigma0) = acceleration(&state.eta, &state.v, &ctx)?;

    let mut traj = ConstrainedTrajectory {
        grid,
        bc,
        g,
        dt,
        times: Vec::new(),
        eta: Vec::new(),
        v: Vec::new(),
        sigma: Vec::new(),
        diagnostics: DiagnosticsSeries::default(),
        flags,
        max_drift_pre: link_drift(&state.eta, bc),
        max_drift_post: 0.0,
        max_link_orthogonality: 0.0,
        sup_kinetic: integrate_s(&state.v.map_scalar(|x| x.norm_squared())),
    };
    record(&mut traj, &state, &sigma0);

    for k in 1..=steps {
        let pre_drift_probe = link_drift(&state.eta, bc);
        traj.max_drift_pre = traj.max_drift_pre.max(pre_drift_probe);
        let (next, sigma) = step_constrained(&state, dt, &ctx)?;
        let post = link_drift(&next.eta, bc);
        if post > DRIFT_AFTER_PROJECTION {
            return Err(Error::ConstraintDrift {
                t: next.t,
                drift: post,
                budget: DRIFT_AFTER_PROJECTION,
            });
        }
        traj.max_drift_post = traj.max_drift_post.max(post);
        traj.max_link_orthogonality = traj
            .max_link_orthogonality
            .max(link_orthogonality(&next.eta, &next.v, bc));
        traj.sup_kinetic = traj
            .sup_kinetic
            .max(integrate_s(&next.v.map_scalar(|x| x.norm_squared())));
        state = next;
        if k % params.sample_every == 0 || k == steps {
            record(&mut traj, &state, &sigma);
        }
    }
    Ok(traj)
}

fn record(traj: &mut ConstrainedTrajectory, state: &ConstrainedState, sigma: &FieldScalar) {
    let (k, p, e) = conserved_energies(&state.eta, &state.v, traj.g);
    traj.times.push(state.t);
    traj.eta.push(state.eta.clone());
    traj.v.push(state.v.clone());
    traj.sigma.push(sigma.clone());
    traj.diagnostics.times.push(state.t);
    traj.diagnostics.kinetic.push(k);
    traj.diagnostics.potential.push(p);
    traj.diagnostics.total.push(e);
    traj.diagnostics.e_eps.push(0.0);
    traj.diagnostics.tension_l1_running.push(0.0);
    traj.diagnostics
        .constraint_drift
        .push(link_drift(&state.eta, traj.bc));
    traj.diagnostics.dissipation_defect.push(0.0);
}
