//! Empirical generalized Young measures on Omega = \[0,T\] x \[0,1\].
//!
//! A family of gamma = (v, w) fields is compressed, cell by cell, into the
//! triple (nu, lambda, nu_inf): values with |gamma| <= R enter the
//! oscillation histogram nu (probability-normalized per cell, sparse bins
//! over the box \[-R, R\]^6 with per-bin centroids), the excess |gamma|^2 mass
//! of large values accumulates into the concentration mass lambda, and their
//! directions into the concentration-angle histogram nu_inf over S^5.
//!
//! The angular partition is hierarchical and exactly equal-area: cells are
//! unions of coordinate orthants (2^k cells, k <= 6, selected by the sign
//! bits of the leading components).
//!
//! Pairings sum f over bin centroids; the weak-form residual of the merged
//! system evaluates either a single smooth field pointwise or a measure
//! cellwise against analytic test-function pairs.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{Field3, Grid1D, Vec3};
use crate::maps::{
    space_flux, space_flux_recession, time_flux, w_from_contact_force, EpsParam, Gamma,
};
use crate::regdyn::RegTrajectory;

/// gamma samples on a (times x s-grid) lattice; row-major in time.
#[derive(Clone, Debug)]
pub struct GammaField {
    pub times: Vec<f64>,
    pub grid: Grid1D,
    values: Vec<Gamma>,
}

impl GammaField {
    pub fn new(times: Vec<f64>, grid: Grid1D, values: Vec<Gamma>) -> Result<Self> {
        if values.len() != times.len() * grid.n_nodes() {
            return Err(Error::LengthMismatch {
                expected: times.len() * grid.n_nodes(),
                got: values.len(),
            });
        }
        Ok(GammaField {
            times,
            grid,
            values,
        })
    }

    pub fn from_fn(times: Vec<f64>, grid: Grid1D, f: impl Fn(f64, f64) -> Gamma) -> Self {
        let mut values = Vec::with_capacity(times.len() * grid.n_nodes());
        for t in &times {
            for s in grid.nodes() {
                values.push(f(*t, s));
            }
        }
        GammaField {
            times,
            grid,
            values,
        }
    }

    /// v from the velocity snapshots, w built from the contact force per the
    /// sequence construction w = kappa/sqrt(eps+|kappa|^2) + kappa/sqrt(|kappa|).
    pub fn from_regularized(traj: &RegTrajectory) -> Result<Self> {
        let eps = EpsParam::new(traj.eps)?;
        let grid = traj.grid;
        let mut values = Vec::with_capacity(traj.times.len() * grid.n_nodes());
        for j in 0..traj.times.len() {
            for i in 0..grid.n_nodes() {
                let v = traj.v[j].values()[i];
                let w = w_from_contact_force(traj.kappa[j].values()[i], eps);
                values.push(Gamma::new(v, w));
            }
        }
        GammaField::new(traj.times.clone(), grid, values)
    }

    pub fn at(&self, it: usize, is: usize) -> &Gamma {
        &self.values[it * self.grid.n_nodes() + is]
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().unwrap_or(&0.0)
    }

    fn time_weights(&self) -> Vec<f64> {
        let t = &self.times;
        let m = t.len();
        if m == 1 {
            return vec![1.0];
        }
        let mut w = vec![0.0; m];
        for i in 0..m {
            let lo = if i == 0 { t[0] } else { t[i - 1] };
            let hi = if i == m - 1 { t[m - 1] } else { t[i + 1] };
            w[i] = 0.5 * (hi - lo);
        }
        w
    }

    fn space_weights(&self) -> Vec<f64> {
        let n = self.grid.n_nodes();
        let h = self.grid.spacing();
        let mut w = vec![h; n];
        w[0] = 0.5 * h;
        w[n - 1] = 0.5 * h;
        w
    }

    /// Direct space-time quadrature of f(gamma), the left side of the
    /// fundamental-theorem pairing.
    pub fn integrate(&self, f: impl Fn(&Gamma) -> f64) -> f64 {
        let wt = self.time_weights();
        let ws = self.space_weights();
        let mut acc = 0.0;
        for (it, wti) in wt.iter().enumerate() {
            for (is, wsj) in ws.iter().enumerate() {
                acc += wti * wsj * f(self.at(it, is));
            }
        }
        acc
    }
}

/// Rectangular partition of \[0,T\] x \[0,1\].
#[derive(Clone, Copy, Debug, Serialize)]
pub struct CellGrid {
    pub nt: usize,
    pub ns: usize,
    pub horizon: f64,
}

impl CellGrid {
    pub fn cell_of(&self, t: f64, s: f64) -> (usize, usize) {
        // boundary samples attach to the adjacent interior cell
        let it = ((t / self.horizon.max(f64::MIN_POSITIVE)) * self.nt as f64) as usize;
        let is = (s * self.ns as f64) as usize;
        (it.min(self.nt - 1), is.min(self.ns - 1))
    }

    pub fn area(&self) -> f64 {
        (self.horizon / self.nt as f64) * (1.0 / self.ns as f64)
    }

    pub fn center(&self, it: usize, is: usize) -> (f64, f64) {
        (
            (it as f64 + 0.5) * self.horizon / self.nt as f64,
            (is as f64 + 0.5) / self.ns as f64,
        )
    }
}

#[derive(Clone, Debug, Default)]
struct Bin {
    weight: f64,
    centroid_sum: [f64; 6],
}

impl Bin {
    fn centroid(&self) -> Gamma {
        Gamma::from_array([
            self.centroid_sum[0] / self.weight,
            self.centroid_sum[1] / self.weight,
            self.centroid_sum[2] / self.weight,
            self.centroid_sum[3] / self.weight,
            self.centroid_sum[4] / self.weight,
            self.centroid_sum[5] / self.weight,
        ])
    }

    fn unit_centroid(&self) -> Gamma {
        let c = self.centroid();
        c.scale(1.0 / c.norm())
    }
}

/// One cell of the empirical measure.
#[derive(Clone, Debug, Default)]
pub struct CellMeasure {
    nu: BTreeMap<u64, Bin>,
    /// Total quadrature weight of the small samples behind nu.
    small_weight: f64,
    pub lambda: f64,
    nu_inf: BTreeMap<u32, Bin>,
}

impl CellMeasure {
    /// Probability weights of the oscillation histogram (sum to 1).
    pub fn nu_weights(&self) -> Vec<(u64, f64)> {
        self.nu
            .iter()
            .map(|(k, b)| (*k, b.weight / self.small_weight))
            .collect()
    }

    pub fn nu_inf_weights(&self) -> Vec<(u32, f64)> {
        let total: f64 = self.nu_inf.values().map(|b| b.weight).sum();
        self.nu_inf
            .iter()
            .map(|(k, b)| (*k, b.weight / total))
            .collect()
    }

    fn nu_expectation(&self, f: &dyn Fn(&Gamma) -> f64) -> f64 {
        if self.small_weight == 0.0 {
            return 0.0;
        }
        let acc: f64 = self.nu.values().map(|b| b.weight * f(&b.centroid())).sum();
        acc / self.small_weight
    }

    fn nu_expectation_gamma(&self, f: &dyn Fn(&Gamma) -> Gamma) -> Gamma {
        if self.small_weight == 0.0 {
            return Gamma::zero();
        }
        let mut v = Vec3::zeros();
        let mut w = Vec3::zeros();
        for b in self.nu.values() {
            let y = f(&b.centroid());
            v += y.v * b.weight;
            w += y.w * b.weight;
        }
        Gamma::new(v / self.small_weight, w / self.small_weight)
    }

    fn nu_inf_expectation(&self, f: &dyn Fn(&Gamma) -> f64) -> f64 {
        let total: f64 = self.nu_inf.values().map(|b| b.weight).sum();
        if total == 0.0 {
            return 0.0;
        }
        let acc: f64 = self
            .nu_inf
            .values()
            .map(|b| b.weight * f(&b.unit_centroid()))
            .sum();
        acc / total
    }

    fn nu_inf_expectation_gamma(&self, f: &dyn Fn(&Gamma) -> Gamma) -> Gamma {
        let total: f64 = self.nu_inf.values().map(|b| b.weight).sum();
        if total == 0.0 {
            return Gamma::zero();
        }
        let mut v = Vec3::zeros();
        let mut w = Vec3::zeros();
        for b in self.nu_inf.values() {
            let y = f(&b.unit_centroid());
            v += y.v * b.weight;
            w += y.w * b.weight;
        }
        Gamma::new(v / total, w / total)
    }
}

/// Empirical generalized Young measure over a cell partition.
#[derive(Clone, Debug)]
pub struct EmpiricalYoungMeasure {
    pub cells: CellGrid,
    /// None marks a cell no sample landed in; excluded from pairings.
    pub cell_data: Vec<Option<CellMeasure>>,
    pub radius: f64,
    pub value_bins: usize,
    pub angle_bits: u32,
}

/// Truncation radius: fixed, or 5x the empirical 99th percentile of |gamma|.
#[derive(Clone, Copy, Debug)]
pub enum RadiusPolicy {
    Auto,
    Fixed(f64),
}

/// Build configuration.
#[derive(Clone, Copy, Debug)]
pub struct YmConfig {
    pub cells_t: usize,
    pub cells_s: usize,
    pub radius: RadiusPolicy,
    pub value_bins: usize,
    /// Requested angular cells; rounded down to a power of two <= 64.
    pub angle_bins: usize,
}

impl Default for YmConfig {
    fn default() -> Self {
        YmConfig {
            cells_t: 4,
            cells_s: 4,
            radius: RadiusPolicy::Auto,
            value_bins: 32,
            angle_bins: 64,
        }
    }
}

fn angle_bits(requested: usize) -> u32 {
    let mut bits = 1u32;
    while bits < 6 && (1usize << (bits + 1)) <= requested.max(2) {
        bits += 1;
    }
    bits
}

fn orthant_id(g: &Gamma, bits: u32) -> u32 {
    let a = g.to_array();
    let mut id = 0u32;
    for (k, x) in a.iter().take(bits as usize).enumerate() {
        if *x >= 0.0 {
            id |= 1 << k;
        }
    }
    id
}

fn value_bin(g: &Gamma, radius: f64, bins: usize) -> u64 {
    let a = g.to_array();
    let mut id = 0u64;
    for x in a.iter().rev() {
        let frac = (x + radius) / (2.0 * radius);
        let k = ((frac * bins as f64) as i64).clamp(0, bins as i64 - 1) as u64;
        id = id * bins as u64 + k;
    }
    id
}

fn percentile99(fields: &[GammaField]) -> f64 {
    let mut norms: Vec<f64> = Vec::new();
    for f in fields {
        norms.extend(f.values.iter().map(|g| g.norm()));
    }
    norms.sort_by(|a, b| a.total_cmp(b));
    let idx = ((norms.len() as f64) * 0.99) as usize;
    norms[idx.min(norms.len() - 1)]
}

/// Build the empirical measure from a family of fields (one per member of
/// the approximating sequence), each weighted equally.
pub fn build_empirical(fields: &[GammaField], config: &YmConfig) -> Result<EmpiricalYoungMeasure> {
    if fields.is_empty() {
        return Err(Error::EmptyHistory(
            "build_empirical needs at least one field",
        ));
    }
    let horizon = fields[0].horizon();
    for f in fields {
        if (f.horizon() - horizon).abs() > 1e-9 * (1.0 + horizon) {
            return Err(Error::Validation {
                issues: vec!["all gamma fields must share one horizon".to_string()],
            });
        }
    }
    let radius = match config.radius {
        RadiusPolicy::Fixed(r) if r > 0.0 => r,
        RadiusPolicy::Fixed(r) => {
            return Err(Error::Domain {
                what: "radius",
                value: r,
            })
        }
        RadiusPolicy::Auto => (5.0 * percentile99(fields)).max(1e-12),
    };
    let cells = CellGrid {
        nt: config.cells_t,
        ns: config.cells_s,
        horizon: horizon.max(1e-300),
    };
    let bits = angle_bits(config.angle_bins);
    let mut data: Vec<Option<CellMeasure>> = vec![None; cells.nt * cells.ns];
    let fw = 1.0 / fields.len() as f64;

    for field in fields {
        let wt = field.time_weights();
        let ws = field.space_weights();
        for (it, t) in field.times.iter().enumerate() {
            for (is, s) in field.grid.nodes().enumerate() {
                let g = field.at(it, is);
                let q = fw * wt[it] * ws[is];
                let (ct, cs) = cells.cell_of(*t, s);
                let cell = data[ct * cells.ns + cs].get_or_insert_with(CellMeasure::default);
                let norm = g.norm();
                if norm <= radius {
                    let bin = cell
                        .nu
                        .entry(value_bin(g, radius, config.value_bins))
                        .or_default();
                    bin.weight += q;
                    let a = g.to_array();
                    for k in 0..6 {
                        bin.centroid_sum[k] += q * a[k];
                    }
                    cell.small_weight += q;
                } else {
                    let mass = q * norm * norm;
                    cell.lambda += mass;
                    let bin = cell.nu_inf.entry(orthant_id(g, bits)).or_default();
                    bin.weight += mass;
                    let a = g.to_array();
                    for k in 0..6 {
                        bin.centroid_sum[k] += mass * a[k] / norm;
                    }
                }
            }
        }
    }
    Ok(EmpiricalYoungMeasure {
        cells,
        cell_data: data,
        radius,
        value_bins: config.value_bins,
        angle_bits: bits,
    })
}

impl EmpiricalYoungMeasure {
    /// Total concentration mass lambda over the closed domain.
    pub fn lambda_total(&self) -> f64 {
        self.cell_data.iter().flatten().map(|c| c.lambda).sum()
    }

    /// Second moment int <nu, |xi|^2>, the oscillation part of the
    /// admissibility ledger.
    pub fn second_moment(&self) -> f64 {
        self.cell_data
            .iter()
            .flatten()
            .map(|c| c.small_weight * c.nu_expectation(&|g: &Gamma| g.norm_squared()))
            .sum()
    }

    /// Admissibility ledger: second moment plus concentration mass.
    pub fn admissibility(&self) -> f64 {
        self.second_moment() + self.lambda_total()
    }

    pub fn cell(&self, it: usize, is: usize) -> Option<&CellMeasure> {
        self.cell_data[it * self.cells.ns + is].as_ref()
    }
}

/// Verify that `f_recession` is the quadratic recession of `f`:
/// f(s z)/s^2 must approach it within 1% at s = 1e2 and 1e3 on a fixed
/// direction sample.
fn check_recession(f: &dyn Fn(&Gamma) -> f64, f_rec: &dyn Fn(&Gamma) -> f64) -> Result<()> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x5eed);
    for _ in 0..32 {
        let mut a = [0.0; 6];
        for x in a.iter_mut() {
            *x = rng.gen_range(-1.0..1.0);
        }
        let norm = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 0.3 {
            continue;
        }
        for x in a.iter_mut() {
            *x /= norm;
        }
        let z = Gamma::from_array(a);
        let want = f_rec(&z);
        for s in [1e2, 1e3] {
            let got = f(&z.scale(s)) / (s * s);
            // 1% convergence check; tiny slack so an exactly-1% deviation
            // (e.g. f = |xi| at s = 100) is not rejected by rounding
            if (got - want).abs() > 0.01 * (1.0 + want.abs()) + 1e-9 {
                return Err(Error::InvalidIntegrand(format!(
                    "f(s z)/s^2 = {got} vs recession {want} at s = {s}"
                )));
            }
        }
    }
    Ok(())
}

/// Fundamental-theorem pairing: int <nu, f> dx + int <nu_inf, f_rec> dlambda.
pub fn pair_with(
    f: &dyn Fn(&Gamma) -> f64,
    f_recession: &dyn Fn(&Gamma) -> f64,
    ym: &EmpiricalYoungMeasure,
) -> Result<f64> {
    check_recession(f, f_recession)?;
    let mut acc = 0.0;
    for cell in ym.cell_data.iter().flatten() {
        acc += cell.small_weight * cell.nu_expectation(f);
        acc += cell.lambda * cell.nu_inf_expectation(f_recession);
    }
    Ok(acc)
}

// ---------------------------------------------------------------------------
// Test functions
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
struct SeparableTerm {
    axis: Vec3,
    s_poly: Vec<f64>,
    t_poly: Vec<f64>,
}

impl SeparableTerm {
    fn eval(&self, t: f64, s: f64) -> Vec3 {
        self.axis * (poly(&self.s_poly, s) * poly(&self.t_poly, t))
    }

    fn d_t(&self, t: f64, s: f64) -> Vec3 {
        self.axis * (poly(&self.s_poly, s) * poly_deriv(&self.t_poly, t))
    }

    fn d_s(&self, t: f64, s: f64) -> Vec3 {
        self.axis * (poly_deriv(&self.s_poly, s) * poly(&self.t_poly, t))
    }
}

fn poly(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, ck| acc * x + ck)
}

fn poly_deriv(c: &[f64], x: f64) -> f64 {
    let mut acc = 0.0;
    for k in (1..c.len()).rev() {
        acc = acc * x + c[k] * k as f64;
    }
    acc
}

/// Smooth pair (phi, psi) with analytic derivatives, satisfying
/// phi(.,1) = 0, phi_s(.,0) = 0, phi(T,.) = 0 and
/// psi(.,0) = 0, psi_s(.,1) = 0, psi(T,.) = 0.
#[derive(Clone, Debug)]
pub struct TestFunctionPair {
    pub horizon: f64,
    phi: SeparableTerm,
    psi: SeparableTerm,
}

impl TestFunctionPair {
    /// Build a pair from separable polynomial data (axis, s-polynomial
    /// coefficients low-to-high, t-polynomial coefficients); rejects pairs
    /// violating any of the six boundary constraints.
    #[allow(clippy::too_many_arguments)]
    pub fn from_polynomials(
        horizon: f64,
        phi_axis: Vec3,
        phi_s_poly: Vec<f64>,
        phi_t_poly: Vec<f64>,
        psi_axis: Vec3,
        psi_s_poly: Vec<f64>,
        psi_t_poly: Vec<f64>,
    ) -> Result<Self> {
        let pair = TestFunctionPair {
            horizon,
            phi: SeparableTerm {
                axis: phi_axis,
                s_poly: phi_s_poly,
                t_poly: phi_t_poly,
            },
            psi: SeparableTerm {
                axis: psi_axis,
                s_poly: psi_s_poly,
                t_poly: psi_t_poly,
            },
        };
        pair.check_boundary()?;
        Ok(pair)
    }

    pub fn phi(&self, t: f64, s: f64) -> Vec3 {
        self.phi.eval(t, s)
    }

    pub fn phi_t(&self, t: f64, s: f64) -> Vec3 {
        self.phi.d_t(t, s)
    }

    pub fn phi_s(&self, t: f64, s: f64) -> Vec3 {
        self.phi.d_s(t, s)
    }

    pub fn psi(&self, t: f64, s: f64) -> Vec3 {
        self.psi.eval(t, s)
    }

    pub fn psi_t(&self, t: f64, s: f64) -> Vec3 {
        self.psi.d_t(t, s)
    }

    pub fn psi_s(&self, t: f64, s: f64) -> Vec3 {
        self.psi.d_s(t, s)
    }

    /// Numeric check of the six boundary constraints at edge samples.
    pub fn check_boundary(&self) -> Result<()> {
        let samples = 21;
        let t_of = |k: usize| self.horizon * k as f64 / (samples - 1) as f64;
        let s_of = |k: usize| k as f64 / (samples - 1) as f64;
        for k in 0..samples {
            let checks = [
                ("phi(s=1)", self.phi(t_of(k), 1.0).norm()),
                ("phi_s(s=0)", self.phi_s(t_of(k), 0.0).norm()),
                ("phi(t=T)", self.phi(self.horizon, s_of(k)).norm()),
                ("psi(s=0)", self.psi(t_of(k), 0.0).norm()),
                ("psi_s(s=1)", self.psi_s(t_of(k), 1.0).norm()),
                ("psi(t=T)", self.psi(self.horizon, s_of(k)).norm()),
            ];
            for (what, v) in checks {
                if v > 1e-10 {
                    return Err(Error::InvalidTestPair(format!("{what} = {v:.3e}")));
                }
            }
        }
        Ok(())
    }

    fn is_trivial(&self) -> bool {
        self.phi.axis.norm() * self.phi.s_poly.iter().map(|c| c.abs()).sum::<f64>() == 0.0
            && self.psi.axis.norm() * self.psi.s_poly.iter().map(|c| c.abs()).sum::<f64>() == 0.0
    }
}

/// Deterministic test family: tensor products of low-order polynomials in t
/// with s-profiles built to satisfy the six boundary constraints exactly.
/// The family's L2(Omega) Gram matrix is checked for full numerical rank.
pub fn make_test_family(horizon: f64, count: usize) -> Result<Vec<TestFunctionPair>> {
    if count == 0 || horizon <= 0.0 {
        return Err(Error::InvalidTestPair(format!(
            "need count >= 1 and positive horizon, got count={count}, T={horizon}"
        )));
    }
    // u(1) = 0, u'(0) = 0
    let phi_profiles: [&[f64]; 4] = [
        &[1.0, 0.0, -1.0],                 // 1 - s^2
        &[1.0, 0.0, -2.0, 0.0, 1.0],       // (1 - s^2)^2
        &[1.0, 0.0, 0.0, -1.0],            // 1 - s^3
        &[1.0, 0.0, -1.0, -1.0, 0.0, 1.0], // (1 - s^2)(1 - s^3)
    ];
    // w(0) = 0, w'(1) = 0
    let psi_profiles: [&[f64]; 4] = [
        &[0.0, 2.0, -1.0],            // 2s - s^2
        &[0.0, 0.0, 3.0, -2.0],       // 3s^2 - 2s^3
        &[0.0, 0.0, 0.0, 4.0, -3.0],  // 4s^3 - 3s^4
        &[0.0, 1.0, 0.0, -1.0 / 3.0], // s - s^3/3
    ];
    let t1 = horizon;
    // p(T) = 0
    let t_profiles: [Vec<f64>; 3] = [
        vec![1.0, -1.0 / t1],
        vec![1.0, -2.0 / t1, 1.0 / (t1 * t1)],
        vec![0.0, 1.0 / t1, -1.0 / (t1 * t1)],
    ];
    let axes = [Vec3::x(), Vec3::y(), Vec3::z()];

    let mut family = Vec::with_capacity(count);
    for k in 0..count {
        let pair = TestFunctionPair {
            horizon,
            phi: SeparableTerm {
                axis: axes[k % 3],
                s_poly: phi_profiles[k % 4].to_vec(),
                t_poly: t_profiles[(k / 3) % 3].clone(),
            },
            psi: SeparableTerm {
                axis: axes[(k + 1) % 3],
                s_poly: psi_profiles[(k + 1) % 4].to_vec(),
                t_poly: t_profiles[(k / 3 + 1) % 3].clone(),
            },
        };
        pair.check_boundary()?;
        if pair.is_trivial() {
            return Err(Error::InvalidTestPair("trivial pair generated".to_string()));
        }
        family.push(pair);
    }

    // Gram matrix over L2(Omega; R^6) via Gauss quadrature (exact for these
    // polynomial degrees); full numerical rank certifies the family spans.
    let q = gauss10();
    let inner = |a: &TestFunctionPair, b: &TestFunctionPair| -> f64 {
        let mut acc = 0.0;
        for (ti, wi) in &q {
            let t = ti * horizon;
            for (sj, wj) in &q {
                let w = wi * wj * horizon;
                acc += w * (a.phi(t, *sj).dot(&b.phi(t, *sj)) + a.psi(t, *sj).dot(&b.psi(t, *sj)));
            }
        }
        acc
    };
    let m = family.len();
    let mut gram = nalgebra::DMatrix::<f64>::zeros(m, m);
    for i in 0..m {
        for j in i..m {
            let v = inner(&family[i], &family[j]);
            gram[(i, j)] = v;
            gram[(j, i)] = v;
        }
    }
    let svd = gram.svd(false, false);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > 1e-10 * smax) {
        return Err(Error::InvalidTestPair(format!(
            "test family Gram matrix is rank deficient (smin/smax = {:.3e})",
            smin / smax
        )));
    }
    Ok(family)
}

fn gauss10() -> Vec<(f64, f64)> {
    // 10-point Gauss-Legendre on [0,1]
    const X: [f64; 5] = [
        0.148874338981631211,
        0.433395394129247191,
        0.679409568299024406,
        0.865063366688984511,
        0.973906528517171720,
    ];
    const W: [f64; 5] = [
        0.295524224714752870,
        0.269266719309996355,
        0.219086362515982044,
        0.149451349150580593,
        0.066671344308688138,
    ];
    let mut out = Vec::with_capacity(10);
    for k in 0..5 {
        out.push((0.5 - 0.5 * X[k], 0.5 * W[k]));
        out.push((0.5 + 0.5 * X[k], 0.5 * W[k]));
    }
    out
}

// ---------------------------------------------------------------------------
// Weak-form residual
// ---------------------------------------------------------------------------

/// Either a single smooth field (the <nu, .> terms collapse to pointwise
/// composition) or an empirical measure.
pub enum WeakInput<'a> {
    Field(&'a GammaField),
    Measure(&'a EmpiricalYoungMeasure),
}

/// Boundary operator of the merged weak form:
/// Xi_0 = -int beta.phi|_{t=0} ds + int alpha.psi_s|_{t=0} ds - int int g.phi.
fn xi0(tf: &TestFunctionPair, alpha: &Field3, beta: &Field3, g: Vec3) -> f64 {
    let grid = alpha.grid();
    let h = grid.spacing();
    let n = grid.n_nodes();
    let sw = |i: usize| if i == 0 || i == n - 1 { 0.5 * h } else { h };
    let mut acc = 0.0;
    for (i, s) in grid.nodes().enumerate() {
        acc -= sw(i) * beta.values()[i].dot(&tf.phi(0.0, s));
        acc += sw(i) * alpha.values()[i].dot(&tf.psi_s(0.0, s));
    }
    // -int int g.phi: Gauss in t (analytic), trapezoid in s
    let q = gauss10();
    for (ti, wi) in &q {
        let t = ti * tf.horizon;
        for (i, s) in grid.nodes().enumerate() {
            acc -= wi * tf.horizon * sw(i) * g.dot(&tf.phi(t, s));
        }
    }
    acc
}

/// Residual of the merged weak identity
///
///   int A(gamma).d_t(phi,psi) - int B(gamma).d_s(phi,psi)
///   - int <nu_inf, B_rec>.d_s(phi,psi) dlambda - Xi_0(alpha, beta, phi,psi)
///
/// with the limit (eps = 0) coupling maps. Vanishes for exact solutions of
/// the string system with non-negative tension.
pub fn weak_residual(
    input: &WeakInput,
    tf: &TestFunctionPair,
    alpha: &Field3,
    beta: &Field3,
    g: Vec3,
) -> Result<f64> {
    tf.check_boundary()?;
    let eps0 = EpsParam::limit();
    let boundary = xi0(tf, alpha, beta, g);
    match input {
        WeakInput::Field(field) => {
            let wt = field.time_weights();
            let ws = field.space_weights();
            let mut acc = 0.0;
            for (it, t) in field.times.iter().enumerate() {
                for (is, s) in field.grid.nodes().enumerate() {
                    let gamma = field.at(it, is);
                    let a = time_flux(gamma, eps0)?;
                    let b = space_flux(gamma, eps0)?;
                    let q = wt[it] * ws[is];
                    acc += q * (a.v.dot(&tf.phi_t(*t, s)) + a.w.dot(&tf.psi_t(*t, s)));
                    acc -= q * (b.v.dot(&tf.phi_s(*t, s)) + b.w.dot(&tf.psi_s(*t, s)));
                }
            }
            Ok(acc - boundary)
        }
        WeakInput::Measure(ym) => {
            let q = gauss10();
            let cells = ym.cells;
            let dt_cell = cells.horizon / cells.nt as f64;
            let ds_cell = 1.0 / cells.ns as f64;
            let mut acc = 0.0;
            for it in 0..cells.nt {
                for is in 0..cells.ns {
                    let Some(cell) = ym.cell(it, is) else {
                        continue;
                    };
                    let a_avg = cell.nu_expectation_gamma(&|g: &Gamma| time_flux(g, eps0).unwrap());
                    let b_avg =
                        cell.nu_expectation_gamma(&|g: &Gamma| space_flux(g, eps0).unwrap());
                    // exact cell integrals of the analytic test derivatives
                    let t0 = it as f64 * dt_cell;
                    let s0 = is as f64 * ds_cell;
                    let mut int_dt = (Vec3::zeros(), Vec3::zeros());
                    let mut int_ds = (Vec3::zeros(), Vec3::zeros());
                    for (xi, wi) in &q {
                        let t = t0 + xi * dt_cell;
                        for (xj, wj) in &q {
                            let s = s0 + xj * ds_cell;
                            let w = wi * wj * dt_cell * ds_cell;
                            int_dt.0 += tf.phi_t(t, s) * w;
                            int_dt.1 += tf.psi_t(t, s) * w;
                            int_ds.0 += tf.phi_s(t, s) * w;
                            int_ds.1 += tf.psi_s(t, s) * w;
                        }
                    }
                    acc += a_avg.v.dot(&int_dt.0) + a_avg.w.dot(&int_dt.1);
                    acc -= b_avg.v.dot(&int_ds.0) + b_avg.w.dot(&int_ds.1);
                    // concentration term at the cell center
                    let binf = cell.nu_inf_expectation_gamma(&space_flux_recession);
                    let (tc, sc) = cells.center(it, is);
                    acc -= cell.lambda
                        * (binf.v.dot(&tf.phi_s(tc, sc)) + binf.w.dot(&tf.psi_s(tc, sc)));
                }
            }
            Ok(acc - boundary)
        }
    }
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct CellDoc {
    nu: BTreeMap<String, f64>,
    lambda: f64,
    nu_inf: BTreeMap<String, f64>,
}

#[derive(Serialize)]
struct MeasureDoc {
    horizon: f64,
    cells_t: usize,
    cells_s: usize,
    radius: f64,
    value_bins: usize,
    angle_cells: usize,
    second_moment: f64,
    lambda_total: f64,
    cells: BTreeMap<String, CellDoc>,
}

impl EmpiricalYoungMeasure {
    /// Serialized measure document: cell index -> sparse nu / lambda / nu_inf.
    pub fn to_json(&self) -> Result<String> {
        let mut cells = BTreeMap::new();
        for it in 0..self.cells.nt {
            for is in 0..self.cells.ns {
                if let Some(cell) = self.cell(it, is) {
                    let nu = cell
                        .nu_weights()
                        .into_iter()
                        .map(|(k, w)| (k.to_string(), w))
                        .collect();
                    let nu_inf = cell
                        .nu_inf_weights()
                        .into_iter()
                        .map(|(k, w)| (k.to_string(), w))
                        .collect();
                    cells.insert(
                        format!("{it},{is}"),
                        CellDoc {
                            nu,
                            lambda: cell.lambda,
                            nu_inf,
                        },
                    );
                }
            }
        }
        let doc = MeasureDoc {
            horizon: self.cells.horizon,
            cells_t: self.cells.nt,
            cells_s: self.cells.ns,
            radius: self.radius,
            value_bins: self.value_bins,
            angle_cells: 1 << self.angle_bits,
            second_moment: self.second_moment(),
            lambda_total: self.lambda_total(),
            cells,
        };
        serde_json::to_string_pretty(&doc).map_err(|e| Error::Config(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> Grid1D {
        Grid1D::new(n).unwrap()
    }

    fn uniform_times(m: usize, horizon: f64) -> Vec<f64> {
        (0..m)
            .map(|k| horizon * k as f64 / (m - 1) as f64)
            .collect()
    }

    #[test]
    fn constant_field_gives_point_mass_and_no_concentration() {
        let g = grid(101);
        let c = Gamma::new(Vec3::new(0.5, 0.0, 0.0), Vec3::new(0.0, -1.0, 0.5));
        let field = GammaField::from_fn(uniform_times(9, 1.0), g, |_, _| c);
        let ym = build_empirical(&[field], &YmConfig::default()).unwrap();
        assert_eq!(ym.lambda_total(), 0.0);
        for it in 0..ym.cells.nt {
            for is in 0..ym.cells.ns {
                let cell = ym.cell(it, is).expect("cell populated");
                let w = cell.nu_weights();
                assert_eq!(w.len(), 1, "single bin expected");
                assert!((w[0].1 - 1.0).abs() < 1e-12);
            }
        }
        // pairing with f = |xi|^2 recovers |c|^2 |Omega|
        let f = |g: &Gamma| g.norm_squared();
        let frec = |_: &Gamma| 1.0;
        let v = pair_with(&f, &frec, &ym).unwrap();
        assert!((v - c.norm_squared()).abs() < 1e-10, "got {v}");
        // probability normalization: f = 1 with zero recession pairs to |Omega|
        let one = |_: &Gamma| 1.0;
        let zero = |_: &Gamma| 0.0;
        let area = pair_with(&one, &zero, &ym).unwrap();
        assert!((area - 1.0).abs() < 1e-10, "got {area}");
    }

    #[test]
    fn oscillation_family_recovers_two_point_measure() {
        let g = grid(2001);
        let times = uniform_times(5, 1.0);
        let mut fields = Vec::new();
        for n in [64.0f64, 128.0, 256.0] {
            fields.push(GammaField::from_fn(times.clone(), g, |_, s| {
                let val = (2.0 * std::f64::consts::PI * n * s).sin().signum();
                Gamma::new(Vec3::zeros(), Vec3::new(val, 0.0, 0.0))
            }));
        }
        let ym = build_empirical(&fields, &YmConfig::default()).unwrap();
        assert!(ym.lambda_total() < 1e-12);
        for it in 0..ym.cells.nt {
            for is in 0..ym.cells.ns {
                let cell = ym.cell(it, is).unwrap();
                let w = cell.nu_weights();
                assert_eq!(w.len(), 2, "two bins expected");
                for (_, weight) in w {
                    assert!((weight - 0.5).abs() <= 0.05, "bin weight {weight}");
                }
            }
        }
        // f(x) = x^2 pairs to 1 * |Omega|
        let f = |g: &Gamma| g.w.x * g.w.x;
        let frec = |g: &Gamma| g.w.x * g.w.x;
        let v = pair_with(&f, &frec, &ym).unwrap();
        assert!((v - 1.0).abs() <= 0.05, "got {v}");
        // and matches the direct integrals within 5%
        for field in &fields {
            let direct = field.integrate(|g| g.w.x * g.w.x);
            assert!((direct - v).abs() <= 0.05 * (1.0 + v.abs()));
        }
    }

    #[test]
    fn concentration_family_recovers_unit_mass_and_direction() {
        // w_n = n on [0, 1/n^2], else 0; int |w_n|^2 = 1
        let times = uniform_times(3, 1.0);
        let mut fields = Vec::new();
        for n in [32.0f64, 64.0] {
            let m = (20.0 * n * n) as usize + 1;
            let g = grid(m);
            fields.push(GammaField::from_fn(times.clone(), g, |_, s| {
                let val = if s < 1.0 / (n * n) { n } else { 0.0 };
                Gamma::new(Vec3::zeros(), Vec3::new(0.0, val, 0.0))
            }));
        }
        let ym = build_empirical(&fields, &YmConfig::default()).unwrap();
        // R = 5 p99 is tiny (99% of samples are zero), so the spike is all
        // concentration: lambda ~ 1, nu = delta_0, nu_inf a point mass
        let lam = ym.lambda_total();
        assert!((lam - 1.0).abs() <= 0.05, "lambda = {lam}");
        for cell in ym.cell_data.iter().flatten() {
            let w = cell.nu_weights();
            assert_eq!(w.len(), 1);
            assert!((w[0].1 - 1.0).abs() < 1e-12);
        }
        // all concentration mass in one angular cell
        let mut seen = std::collections::BTreeMap::new();
        for cell in ym.cell_data.iter().flatten() {
            for (k, w) in cell.nu_inf_weights() {
                if cell.lambda > 0.0 {
                    *seen.entry(k).or_insert(0.0) += w * cell.lambda;
                }
            }
        }
        assert_eq!(seen.len(), 1, "point mass expected, got {seen:?}");
        // f = |xi|^2 pairing: second moment ~ 0 plus lambda
        let f = |g: &Gamma| g.norm_squared();
        let frec = |_: &Gamma| 1.0;
        let v = pair_with(&f, &frec, &ym).unwrap();
        assert!((v - lam).abs() <= 0.05, "pairing {v} vs lambda {lam}");
    }

    #[test]
    fn pairing_rejects_wrong_recession() {
        let g = grid(11);
        let field = GammaField::from_fn(uniform_times(3, 1.0), g, |_, _| Gamma::zero());
        let ym = build_empirical(&[field], &YmConfig::default()).unwrap();
        let f = |g: &Gamma| g.norm_squared();
        let bad = |_: &Gamma| 0.5;
        assert!(matches!(
            pair_with(&f, &bad, &ym),
            Err(Error::InvalidIntegrand(_))
        ));
    }

    #[test]
    fn test_family_satisfies_constraints_and_spans() {
        let fam = make_test_family(2.0, 12).unwrap();
        assert_eq!(fam.len(), 12);
        for pair in &fam {
            pair.check_boundary().unwrap();
            assert!(!pair.is_trivial());
        }
        let one = make_test_family(1.5, 1).unwrap();
        assert!(!one[0].is_trivial());
        assert!(make_test_family(1.0, 0).is_err());
    }

    #[test]
    fn invalid_test_pair_is_rejected() {
        // phi = s * (1 - t/T): violates phi(s=1) = 0 and phi_s(s=0) = 0
        let bad = TestFunctionPair::from_polynomials(
            1.0,
            Vec3::x(),
            vec![0.0, 1.0],
            vec![1.0, -1.0],
            Vec3::y(),
            vec![0.0, 2.0, -1.0],
            vec![1.0, -1.0],
        );
        assert!(matches!(bad, Err(Error::InvalidTestPair(_))));
        // a compliant custom pair is accepted
        let ok = TestFunctionPair::from_polynomials(
            1.0,
            Vec3::x(),
            vec![1.0, 0.0, -1.0],
            vec![1.0, -1.0],
            Vec3::y(),
            vec![0.0, 2.0, -1.0],
            vec![1.0, -1.0],
        );
        assert!(ok.is_ok());
    }

    #[test]
    fn weak_residual_vanishes_on_zero_data() {
        let g = grid(51);
        let field = GammaField::from_fn(uniform_times(11, 1.0), g, |_, _| Gamma::zero());
        let alpha = Field3::zeros(g);
        let beta = Field3::zeros(g);
        for tf in make_test_family(1.0, 6).unwrap() {
            let r = weak_residual(&WeakInput::Field(&field), &tf, &alpha, &beta, Vec3::zeros())
                .unwrap();
            assert!(r.abs() < 1e-12, "residual {r}");
        }
    }

    #[test]
    fn weak_residual_small_on_hanging_steady_state() {
        // v = 0, w = alpha_s (1 + sqrt(sigma)), sigma = |g| s solves the
        // weak form identically; the discrete residual is quadrature error
        let n = 201;
        let g = grid(n);
        let ghat = Vec3::new(0.0, 0.0, -1.0);
        let gravity = ghat * 9.8;
        let alpha = Field3::from_fn(g, |s| ghat * (1.0 - s));
        let beta = Field3::zeros(g);
        let horizon = 1.0;
        let field = GammaField::from_fn(uniform_times(41, horizon), g, |_, s| {
            Gamma::new(Vec3::zeros(), -ghat * (1.0 + (9.8 * s).sqrt()))
        });
        for tf in make_test_family(horizon, 12).unwrap() {
            let r = weak_residual(&WeakInput::Field(&field), &tf, &alpha, &beta, gravity).unwrap();
            assert!(r.abs() < 1e-3, "residual {r}");
        }
    }

    #[test]
    fn measure_residual_tracks_field_residual() {
        // single smooth field: the measure version must agree with the
        // pointwise version up to cell-averaging error
        let g = grid(201);
        let horizon = 1.0;
        let field = GammaField::from_fn(uniform_times(41, horizon), g, |t, s| {
            Gamma::new(
                Vec3::new(0.3 * (s + t).sin(), 0.0, 0.1 * s),
                Vec3::new(0.0, 0.5 + 0.2 * (2.0 * s - t).cos(), 0.0),
            )
        });
        let cfg = YmConfig {
            cells_t: 10,
            cells_s: 10,
            ..YmConfig::default()
        };
        let ym = build_empirical(&[field.clone()], &cfg).unwrap();
        let alpha = Field3::zeros(g);
        let beta = Field3::zeros(g);
        for tf in make_test_family(horizon, 4).unwrap() {
            let rf = weak_residual(&WeakInput::Field(&field), &tf, &alpha, &beta, Vec3::zeros())
                .unwrap();
            let rm =
                weak_residual(&WeakInput::Measure(&ym), &tf, &alpha, &beta, Vec3::zeros()).unwrap();
            assert!(
                (rf - rm).abs() < 0.05 * (1.0 + rf.abs()),
                "field {rf} vs measure {rm}"
            );
        }
    }

    #[test]
    fn lambda_is_additive_across_cell_partitions() {
        // total concentration mass is a sum over cells, so refining the
        // partition must not change it
        let g = grid(4001);
        let times = uniform_times(5, 1.0);
        let field = GammaField::from_fn(times, g, |t, s| {
            let big = if s < 0.1 && t < 0.5 { 40.0 } else { 0.3 };
            Gamma::new(Vec3::zeros(), Vec3::new(big, 0.0, 0.0))
        });
        let coarse = YmConfig {
            cells_t: 1,
            cells_s: 1,
            radius: RadiusPolicy::Fixed(5.0),
            ..YmConfig::default()
        };
        let fine = YmConfig {
            cells_t: 5,
            cells_s: 8,
            radius: RadiusPolicy::Fixed(5.0),
            ..YmConfig::default()
        };
        let ym_c = build_empirical(std::slice::from_ref(&field), &coarse).unwrap();
        let ym_f = build_empirical(std::slice::from_ref(&field), &fine).unwrap();
        assert!((ym_c.lambda_total() - ym_f.lambda_total()).abs() < 1e-12);
        assert!(ym_c.lambda_total() > 0.1);
        assert!((ym_c.second_moment() - ym_f.second_moment()).abs() < 1e-12);
    }

    #[test]
    fn empty_cells_are_flagged_undefined() {
        // samples only at t=0 with one time slice: later cells stay empty
        let g = grid(11);
        let field = GammaField::from_fn(vec![0.0], g, |_, _| Gamma::zero());
        let cfg = YmConfig {
            cells_t: 3,
            cells_s: 2,
            ..YmConfig::default()
        };
        let ym = build_empirical(&[field], &cfg).unwrap();
        assert!(ym.cell(0, 0).is_some());
        assert!(ym.cell(2, 0).is_none());
        assert!(ym.cell(2, 1).is_none());
    }
}
