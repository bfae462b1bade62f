//! Scalar functionals and inequality monitors: kinetic/potential/total
//! energy of the constrained system, the regularized energy with its online
//! history accumulator, the space-time L1 norm of the contact force, and the
//! compatibility residuals of initial data.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{integrate_s, integrate_st, Field3, Vec3};
use crate::tension::BoundaryFamily;

/// Time series of the monitored functionals, aligned with `times`.
#[derive(Clone, Debug, Default, Serialize)]
pub struct DiagnosticsSeries {
    pub times: Vec<f64>,
    pub kinetic: Vec<f64>,
    pub potential: Vec<f64>,
    pub total: Vec<f64>,
    pub e_eps: Vec<f64>,
    pub tension_l1_running: Vec<f64>,
    pub constraint_drift: Vec<f64>,
    pub dissipation_defect: Vec<f64>,
}

impl DiagnosticsSeries {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Kinetic, potential, and total energy of a (position, velocity) state:
/// K = 1/2 int |v|^2, P = -int g.eta, E = K + P.
pub fn conserved_energies(eta: &Field3, v: &Field3, g: Vec3) -> (f64, f64, f64) {
    let k = 0.5 * integrate_s(&v.map_scalar(|x| x.norm_squared()));
    let p = -integrate_s(&eta.map_scalar(|x| g.dot(&x)));
    (k, p, k + p)
}

/// Regularized energy
///
///   E_eps = 1/2 int |v|^2 - int g.eta + eps/2 int |kappa|^2 + sqrt(eps)
///           - eps int (eps + |kappa|^2)^{-1/2} + (history accumulator)
///
/// where the history term eps int_0^t int grad-G(tau) tau_s . tau_s is kept
/// as a running scalar updated once per step by the integrator.
pub fn regularized_energy(
    v: &Field3,
    kappa: &Field3,
    eta: &Field3,
    eps: f64,
    g: Vec3,
    history_accumulator: f64,
) -> f64 {
    let kin = 0.5 * integrate_s(&v.map_scalar(|x| x.norm_squared()));
    let pot = -integrate_s(&eta.map_scalar(|x| g.dot(&x)));
    let elastic = 0.5 * eps * integrate_s(&kappa.map_scalar(|x| x.norm_squared()));
    let well = -eps * integrate_s(&kappa.map_scalar(|x| 1.0 / (eps + x.norm_squared()).sqrt()));
    kin + pot + elastic + eps.sqrt() + well + history_accumulator
}

/// Space-time trapezoid of int int |kappa| ds dt over retained samples.
pub fn tension_l1(times: &[f64], kappa_history: &[Field3]) -> Result<f64> {
    if kappa_history.is_empty() || times.len() != kappa_history.len() {
        return Err(Error::EmptyHistory(
            "tension_l1 needs at least one kappa snapshot",
        ));
    }
    let per_time: Vec<f64> = kappa_history
        .iter()
        .map(|k| integrate_s(&k.map_scalar(|x| x.norm())))
        .collect();
    Ok(integrate_st(times, &per_time))
}

/// Compatibility residuals of initial data:
/// r1 = max | |alpha_s| - 1 |, r2 = max |alpha_s . beta_s|,
/// with the discrete derivative of the family (periodic wrap on the ring).
pub fn compatibility_residuals(alpha: &Field3, beta: &Field3, bc: BoundaryFamily) -> (f64, f64) {
    let a_s = alpha.derivative_s(bc);
    let b_s = beta.derivative_s(bc);
    let r1 = a_s
        .values()
        .iter()
        .fold(0.0f64, |m, v| m.max((v.norm() - 1.0).abs()));
    let r2 = a_s
        .values()
        .iter()
        .zip(b_s.values())
        .fold(0.0f64, |m, (a, b)| m.max(a.dot(b).abs()));
    (r1, r2)
}

/// Worst violating node of the unit-speed condition, for validation reports.
pub fn worst_stretch_node(alpha: &Field3, bc: BoundaryFamily) -> (usize, f64) {
    let a_s = alpha.derivative_s(bc);
    let mut worst = (0, 0.0f64);
    for (i, v) in a_s.values().iter().enumerate() {
        let d = (v.norm() - 1.0).abs();
        if d > worst.1 {
            worst = (i, d);
        }
    }
    worst
}

/// Loose Gronwall envelope for the kinetic energy on runs with a fixed end:
/// sup_t int |v|^2 <= e^T (2 E(0) + |g|^2 T).
pub fn kinetic_envelope(e0: f64, g: Vec3, horizon: f64) -> f64 {
    horizon.exp() * (2.0 * e0 + g.norm_squared() * horizon)
}

/// Per-step dissipation defect |dE/dt + eps int |v_s|^2| of the regularized
/// flow; the identity holds up to O(dt + h^2).
pub fn dissipation_defect(
    e_prev: f64,
    e_next: f64,
    dt: f64,
    v_next: &Field3,
    eps: f64,
    bc: BoundaryFamily,
) -> f64 {
    let vs = v_next.derivative_s(bc);
    let d = integrate_s(&vs.map_scalar(|x| x.norm_squared()));
    ((e_next - e_prev) / dt + eps * d).abs()
}
