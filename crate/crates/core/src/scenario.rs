//! Scenario presets, structured-text configuration, file output, and the
//! eps-sweep driver.
//!
//! Initial curves and velocities are named closed-form generators (or
//! tabulated nodal values), so a scenario is deterministic at any grid size
//! and validation can point at exact nodes. Gravity defaults to
//! (0, 0, -9.8) in the presets; the solvers treat it as an arbitrary
//! constant vector.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::DiagnosticsSeries;
use crate::error::{Error, Result};
use crate::grid::{Field3, Grid1D, Vec3};
use crate::refdyn::{run_constrained, ConstrainedTrajectory, RefRunParams};
use crate::regdyn::{default_dt, run_regularized, RegRunParams, RegTrajectory};
use crate::tension::BoundaryFamily;
use crate::youngmeasure::{
    build_empirical, make_test_family, weak_residual, GammaField, WeakInput, YmConfig,
};

/// Environment variable capping sweep parallelism.
pub const THREADS_ENV: &str = "WHIPDYN_THREADS";

const PRESETS: [&str; 4] = ["upright", "hanging", "folded", "ring"];

fn default_gravity() -> [f64; 3] {
    [0.0, 0.0, -9.8]
}

/// Closed-form initial curve, or tabulated nodal positions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CurveSpec {
    /// alpha(s) = from + s (to - from); unit speed when |to - from| = 1.
    Line {
        from: [f64; 3],
        to: [f64; 3],
    },
    /// alpha(s) = direction (1/2 - |s - 1/2|): both ends at the origin,
    /// fold apex at s = 1/2.
    Fold {
        direction: [f64; 3],
    },
    /// Circle of the given radius in the xy-plane centered at the origin;
    /// unit speed when radius = 1/(2 pi).
    Circle {
        radius: f64,
        phase: f64,
    },
    Tabulated {
        values: Vec<[f64; 3]>,
    },
}

impl CurveSpec {
    pub fn eval(&self, s: f64) -> Option<Vec3> {
        match self {
            CurveSpec::Line { from, to } => {
                let a = Vec3::from(*from);
                let b = Vec3::from(*to);
                Some(a + (b - a) * s)
            }
            CurveSpec::Fold { direction } => Some(Vec3::from(*direction) * (0.5 - (s - 0.5).abs())),
            CurveSpec::Circle { radius, phase } => {
                let th = 2.0 * std::f64::consts::PI * s + phase;
                Some(Vec3::new(radius * th.cos(), radius * th.sin(), 0.0))
            }
            CurveSpec::Tabulated { .. } => None,
        }
    }

    pub fn sample(&self, grid: Grid1D) -> Result<Field3> {
        if let CurveSpec::Tabulated { values } = self {
            let v: Vec<Vec3> = values.iter().map(|a| Vec3::from(*a)).collect();
            return Field3::from_values(grid, v);
        }
        Ok(Field3::from_fn(grid, |s| self.eval(s).unwrap()))
    }
}

/// Closed-form initial velocity, or tabulated nodal values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VelocitySpec {
    Zero,
    /// Rigid rotation beta(s) = omega x (alpha(s) - about); compatible with
    /// any curve since omega x alpha_s is orthogonal to alpha_s.
    Rotation {
        omega: [f64; 3],
        about: [f64; 3],
    },
    Tabulated {
        values: Vec<[f64; 3]>,
    },
}

impl VelocitySpec {
    pub fn sample(&self, alpha: &Field3) -> Result<Field3> {
        let grid = alpha.grid();
        match self {
            VelocitySpec::Zero => Ok(Field3::zeros(grid)),
            VelocitySpec::Rotation { omega, about } => {
                let w = Vec3::from(*omega);
                let c = Vec3::from(*about);
                Ok(alpha.map(|p| w.cross(&(p - c))))
            }
            VelocitySpec::Tabulated { values } => {
                let v: Vec<Vec3> = values.iter().map(|a| Vec3::from(*a)).collect();
                Field3::from_values(grid, v)
            }
        }
    }
}

/// Initial data, gravity, family, and horizon of one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub bc: BoundaryFamily,
    pub horizon: f64,
    /// Gravity vector; the presets use (0, 0, -9.8).
    pub g: [f64; 3],
    pub alpha: CurveSpec,
    pub beta: VelocitySpec,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct ScenarioDoc {
    scenario: Scenario,
}

impl Scenario {
    pub fn gravity(&self) -> Vec3 {
        Vec3::from(self.g)
    }

    pub fn sample_alpha(&self, grid: Grid1D) -> Result<Field3> {
        self.alpha.sample(grid)
    }

    pub fn sample_beta(&self, grid: Grid1D) -> Result<Field3> {
        let alpha = self.sample_alpha(grid)?;
        self.beta.sample(&alpha)
    }

    /// Check every scenario invariant at the given grid size; the error
    /// lists each violated condition with its node index.
    pub fn validate(&self, n_nodes: usize) -> Result<()> {
        let grid = Grid1D::new(n_nodes)?;
        let mut issues = Vec::new();
        if !(self.horizon >= 0.0) {
            issues.push(format!("horizon {} must be non-negative", self.horizon));
        }
        let alpha = self.sample_alpha(grid)?;
        self.beta.sample(&alpha)?;
        let alpha_s = alpha.derivative_s(self.bc);
        for (i, t) in alpha_s.values().iter().enumerate() {
            if t.norm() > 1.0 + 1e-9 {
                issues.push(format!("|alpha_s| = {:.6} > 1 at node {i}", t.norm()));
            }
        }
        if self.bc == BoundaryFamily::Whip && alpha.values()[n_nodes - 1].norm() > 1e-12 {
            issues.push(format!(
                "alpha(1) = {:?} must be the origin for the whip family",
                alpha.values()[n_nodes - 1]
            ));
        }
        if self.bc == BoundaryFamily::Periodic {
            let gap = (alpha.values()[0] - alpha.values()[n_nodes - 1]).norm();
            if gap > 1e-9 {
                issues.push(format!(
                    "periodic curve must close: |alpha(0)-alpha(1)| = {gap:.3e}"
                ));
            }
        }
        if issues.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation { issues })
        }
    }
}

/// Built-in scenarios: the unstable upright column, the hanging chain, the
/// released folded chain, and the spinning ring.
pub fn preset(name: &str) -> Result<Scenario> {
    let g = default_gravity();
    let down = [0.0, 0.0, -1.0];
    let up = [0.0, 0.0, 1.0];
    match name {
        "upright" => Ok(Scenario {
            name: "upright".to_string(),
            bc: BoundaryFamily::Whip,
            horizon: 5.0,
            g,
            // alpha(s) = (s-1) g/|g|: free end one unit above the pivot
            alpha: CurveSpec::Line {
                from: up,
                to: [0.0, 0.0, 0.0],
            },
            beta: VelocitySpec::Zero,
        }),
        "hanging" => Ok(Scenario {
            name: "hanging".to_string(),
            bc: BoundaryFamily::Whip,
            horizon: 10.0,
            g,
            alpha: CurveSpec::Line {
                from: down,
                to: [0.0, 0.0, 0.0],
            },
            beta: VelocitySpec::Zero,
        }),
        "folded" => Ok(Scenario {
            name: "folded".to_string(),
            bc: BoundaryFamily::Whip,
            horizon: 2.0,
            g,
            alpha: CurveSpec::Fold { direction: down },
            beta: VelocitySpec::Zero,
        }),
        "ring" => Ok(Scenario {
            name: "ring".to_string(),
            bc: BoundaryFamily::Periodic,
            horizon: 1.0,
            g: [0.0, 0.0, 0.0],
            alpha: CurveSpec::Circle {
                radius: 0.5 / std::f64::consts::PI,
                phase: 0.0,
            },
            beta: VelocitySpec::Rotation {
                omega: [0.0, 0.0, 2.0 * std::f64::consts::PI],
                about: [0.0, 0.0, 0.0],
            },
        }),
        other => Err(Error::UnknownPreset {
            name: other.to_string(),
            known: PRESETS.iter().map(|s| s.to_string()).collect(),
        }),
    }
}

/// Resolve a preset name or a config-file path.
pub fn resolve_scenario(spec: &str) -> Result<Scenario> {
    if PRESETS.contains(&spec) {
        preset(spec)
    } else if Path::new(spec).exists() {
        load_scenario(spec)
    } else {
        preset(spec) // yields the unknown-preset listing
    }
}

/// Parse a scenario from its structured-text (TOML) document.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    let text = fs::read_to_string(path.as_ref())?;
    let doc: ScenarioDoc = toml::from_str(&text)
        .map_err(|e| Error::Config(format!("{}: {e}", path.as_ref().display())))?;
    Ok(doc.scenario)
}

/// Canonical serialization; save -> load -> save is byte-identical.
pub fn save_scenario(scenario: &Scenario, path: impl AsRef<Path>) -> Result<()> {
    let doc = ScenarioDoc {
        scenario: scenario.clone(),
    };
    let text = toml::to_string_pretty(&doc).map_err(|e| Error::Config(e.to_string()))?;
    fs::write(path, text)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Run wrappers
// ---------------------------------------------------------------------------

/// Integrate the regularized solver on a scenario (whip family only; the
/// other families route to the constrained solver).
pub fn run_regularized_scenario(
    scenario: &Scenario,
    eps: f64,
    n_nodes: usize,
    dt: Option<f64>,
    sample_every: usize,
) -> Result<RegTrajectory> {
    if scenario.bc != BoundaryFamily::Whip {
        return Err(Error::UnsupportedBoundary(format!(
            "regularized solver integrates the whip family; use the constrained solver for {}",
            scenario.bc.tag()
        )));
    }
    scenario.validate(n_nodes)?;
    let grid = Grid1D::new(n_nodes)?;
    let alpha = scenario.sample_alpha(grid)?;
    let beta = scenario.sample_beta(grid)?;
    let dt = dt.unwrap_or_else(|| default_dt(grid, eps));
    let params = RegRunParams {
        eps,
        dt,
        horizon: scenario.horizon,
        sample_every,
    };
    run_regularized(&alpha, &beta, scenario.gravity(), params)
}

/// Integrate the constrained reference solver on a scenario.
pub fn run_constrained_scenario(
    scenario: &Scenario,
    n_nodes: usize,
    dt: f64,
    sample_every: usize,
) -> Result<ConstrainedTrajectory> {
    scenario.validate(n_nodes)?;
    let grid = Grid1D::new(n_nodes)?;
    let alpha = scenario.sample_alpha(grid)?;
    let beta = scenario.sample_beta(grid)?;
    let params = RefRunParams {
        dt,
        horizon: scenario.horizon,
        sample_every,
    };
    run_constrained(&alpha, &beta, scenario.bc, scenario.gravity(), params)
}

// ---------------------------------------------------------------------------
// File output
// ---------------------------------------------------------------------------

/// Metadata stored next to every run for later post-processing.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunMeta {
    pub solver: String,
    pub scenario: String,
    pub eps: Option<f64>,
    pub nodes: usize,
    pub dt: f64,
    pub horizon: f64,
    pub sample_every: usize,
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut f = fs::File::create(path)?;
    f.write_all(contents.as_bytes())?;
    Ok(())
}

#[derive(Serialize)]
struct DiagnosticsDoc<'a> {
    times: &'a [f64],
    #[serde(rename = "K")]
    kinetic: &'a [f64],
    #[serde(rename = "P")]
    potential: &'a [f64],
    #[serde(rename = "E")]
    total: &'a [f64],
    #[serde(rename = "E_eps")]
    e_eps: &'a [f64],
    #[serde(rename = "tension_L1")]
    tension_l1: f64,
    drift: &'a [f64],
}

/// JSON diagnostics document with the schema
/// {times, K, P, E, E_eps, tension_L1, drift}.
pub fn diagnostics_json(series: &DiagnosticsSeries, tension_l1: f64) -> Result<String> {
    let doc = DiagnosticsDoc {
        times: &series.times,
        kinetic: &series.kinetic,
        potential: &series.potential,
        total: &series.total,
        e_eps: &series.e_eps,
        tension_l1,
        drift: &series.constraint_drift,
    };
    serde_json::to_string_pretty(&doc).map_err(|e| Error::Config(e.to_string()))
}

/// Write a regularized trajectory: trajectory.csv with columns
/// t,s,v_x,v_y,v_z,tau_x,tau_y,tau_z,kappa_x,kappa_y,kappa_z, plus
/// diagnostics.json and run.json.
pub fn save_reg_trajectory(
    traj: &RegTrajectory,
    scenario_name: &str,
    dir: impl AsRef<Path>,
) -> Result<()> {
    let dir = dir.as_ref();
    let mut csv = String::from("t,s,v_x,v_y,v_z,tau_x,tau_y,tau_z,kappa_x,kappa_y,kappa_z\n");
    for (j, t) in traj.times.iter().enumerate() {
        for (i, s) in traj.grid.nodes().enumerate() {
            let v = traj.v[j].values()[i];
            let tau = traj.tau[j].values()[i];
            let k = traj.kappa[j].values()[i];
            csv.push_str(&format!(
                "{t},{s},{},{},{},{},{},{},{},{},{}\n",
                v.x, v.y, v.z, tau.x, tau.y, tau.z, k.x, k.y, k.z
            ));
        }
    }
    write_file(&dir.join("trajectory.csv"), &csv)?;
    write_file(
        &dir.join("diagnostics.json"),
        &diagnostics_json(&traj.diagnostics, traj.tension_l1_total)?,
    )?;
    let meta = RunMeta {
        solver: "reg".to_string(),
        scenario: scenario_name.to_string(),
        eps: Some(traj.eps),
        nodes: traj.grid.n_nodes(),
        dt: traj.dt,
        horizon: *traj.times.last().unwrap_or(&0.0),
        sample_every: traj.sample_every,
    };
    write_file(
        &dir.join("run.json"),
        &serde_json::to_string_pretty(&meta).map_err(|e| Error::Config(e.to_string()))?,
    )
}

/// Write a constrained trajectory: trajectory.csv with columns
/// t,s,eta_x,eta_y,eta_z,v_x,v_y,v_z,sigma, plus diagnostics.json and run.json.
pub fn save_ref_trajectory(
    traj: &ConstrainedTrajectory,
    scenario_name: &str,
    dir: impl AsRef<Path>,
) -> Result<()> {
    let dir = dir.as_ref();
    let mut csv = String::from("t,s,eta_x,eta_y,eta_z,v_x,v_y,v_z,sigma\n");
    for (j, t) in traj.times.iter().enumerate() {
        for (i, s) in traj.grid.nodes().enumerate() {
            let e = traj.eta[j].values()[i];
            let v = traj.v[j].values()[i];
            let sg = traj.sigma[j].values()[i];
            csv.push_str(&format!(
                "{t},{s},{},{},{},{},{},{},{sg}\n",
                e.x, e.y, e.z, v.x, v.y, v.z
            ));
        }
    }
    write_file(&dir.join("trajectory.csv"), &csv)?;
    write_file(
        &dir.join("diagnostics.json"),
        &diagnostics_json(&traj.diagnostics, 0.0)?,
    )?;
    let meta = RunMeta {
        solver: "ref".to_string(),
        scenario: scenario_name.to_string(),
        eps: None,
        nodes: traj.grid.n_nodes(),
        dt: traj.dt,
        horizon: *traj.times.last().unwrap_or(&0.0),
        sample_every: 1,
    };
    write_file(
        &dir.join("run.json"),
        &serde_json::to_string_pretty(&meta).map_err(|e| Error::Config(e.to_string()))?,
    )
}

/// Write sigma as the two-column CSV (s, sigma).
pub fn save_tension_csv(grid: Grid1D, sigma: &[f64], path: impl AsRef<Path>) -> Result<()> {
    let mut csv = String::from("s,sigma\n");
    for (s, v) in grid.nodes().zip(sigma) {
        csv.push_str(&format!("{s},{v}\n"));
    }
    write_file(path.as_ref(), &csv)
}

/// Read back a regularized run directory (run.json + trajectory.csv) as a
/// gamma field for measure extraction.
pub fn load_run_gamma_field(dir: impl AsRef<Path>) -> Result<(GammaField, RunMeta)> {
    let dir = dir.as_ref();
    let meta: RunMeta = serde_json::from_str(&fs::read_to_string(dir.join("run.json"))?)
        .map_err(|e| Error::Config(format!("run.json: {e}")))?;
    let eps = meta
        .eps
        .ok_or_else(|| Error::Config("run.json has no eps; not a regularized run".to_string()))?;
    let ep = crate::maps::EpsParam::new(eps)?;
    let text = fs::read_to_string(dir.join("trajectory.csv"))?;
    let grid = Grid1D::new(meta.nodes)?;
    let mut times = Vec::new();
    let mut values = Vec::new();
    for (lineno, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<f64> = line
            .split(',')
            .map(|c| c.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Config(format!("trajectory.csv line {}: {e}", lineno + 1)))?;
        if cols.len() != 11 {
            return Err(Error::Config(format!(
                "trajectory.csv line {}: expected 11 columns, got {}",
                lineno + 1,
                cols.len()
            )));
        }
        if times.last().is_none_or(|t| *t != cols[0]) {
            times.push(cols[0]);
        }
        let v = Vec3::new(cols[2], cols[3], cols[4]);
        let kappa = Vec3::new(cols[8], cols[9], cols[10]);
        values.push(crate::maps::Gamma::new(
            v,
            crate::maps::w_from_contact_force(kappa, ep),
        ));
    }
    Ok((GammaField::new(times, grid, values)?, meta))
}

// ---------------------------------------------------------------------------
// Epsilon sweep
// ---------------------------------------------------------------------------

/// Grid/step policy of a sweep.
#[derive(Clone, Copy, Debug)]
pub struct SweepPolicy {
    pub n_nodes: usize,
    /// None picks the stable default per eps.
    pub dt: Option<f64>,
    pub sample_every: usize,
    pub test_pairs: usize,
}

impl Default for SweepPolicy {
    fn default() -> Self {
        SweepPolicy {
            n_nodes: 101,
            dt: None,
            sample_every: 50,
            test_pairs: 12,
        }
    }
}

/// One row of the sweep report.
#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub eps: f64,
    pub dt: f64,
    pub tension_l1: f64,
    pub sup_kinetic: f64,
    pub max_weak_residual: f64,
    pub admissibility: f64,
    pub energy_slack_violations: usize,
    pub error: Option<String>,
}

/// Trend columns across the sweep (present only with >= 2 successful rows).
#[derive(Clone, Debug, Serialize)]
pub struct SweepTrends {
    /// max/min ratio of the tension L1 column.
    pub tension_l1_ratio: f64,
    /// max/min ratio of the kinetic supremum column.
    pub kinetic_ratio: f64,
    /// max/min ratio of the admissibility column.
    pub admissibility_ratio: f64,
    /// Whether the residual column decreases along decreasing eps (10% slack).
    pub residual_monotone: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepReport {
    pub scenario: String,
    pub nodes: usize,
    pub rows: Vec<SweepRow>,
    pub trends: Option<SweepTrends>,
}

/// Run the regularized solver once per eps (concurrently; WHIPDYN_THREADS
/// caps the pool), build the sequence fields, and report the residual and
/// bound columns against eps. A diverged run yields an annotated row.
pub fn sweep_epsilon(
    scenario: &Scenario,
    eps_list: &[f64],
    policy: &SweepPolicy,
) -> Result<SweepReport> {
    sweep_epsilon_impl(scenario, eps_list, policy, None)
}

/// Like [`sweep_epsilon`], additionally writing each run into
/// `dir/eps_<value>/` (trajectory, diagnostics, metadata) and the report
/// into `dir/sweep.{csv,json}`.
pub fn sweep_epsilon_to_dir(
    scenario: &Scenario,
    eps_list: &[f64],
    policy: &SweepPolicy,
    dir: impl AsRef<Path>,
) -> Result<SweepReport> {
    let report = sweep_epsilon_impl(scenario, eps_list, policy, Some(dir.as_ref()))?;
    report.save(dir)?;
    Ok(report)
}

fn sweep_epsilon_impl(
    scenario: &Scenario,
    eps_list: &[f64],
    policy: &SweepPolicy,
    out_dir: Option<&Path>,
) -> Result<SweepReport> {
    let mut issues = Vec::new();
    if eps_list.is_empty() {
        issues.push("eps list must not be empty".to_string());
    }
    for (i, e) in eps_list.iter().enumerate() {
        if !(*e > 0.0 && *e <= 1.0) {
            issues.push(format!("eps[{i}] = {e} outside (0, 1]"));
        }
        if i > 0 && *e >= eps_list[i - 1] {
            issues.push(format!(
                "eps list must be strictly decreasing: eps[{i}] = {e} after {}",
                eps_list[i - 1]
            ));
        }
    }
    if !issues.is_empty() {
        return Err(Error::Validation { issues });
    }
    scenario.validate(policy.n_nodes)?;

    let threads = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;

    let grid = Grid1D::new(policy.n_nodes)?;
    let alpha = scenario.sample_alpha(grid)?;
    let beta = scenario.sample_beta(grid)?;
    let g = scenario.gravity();
    let family = make_test_family(scenario.horizon.max(f64::MIN_POSITIVE), policy.test_pairs)?;

    let rows: Vec<SweepRow> = pool.install(|| {
        eps_list
            .par_iter()
            .map(|&eps| {
                let dt = policy.dt.unwrap_or_else(|| default_dt(grid, eps));
                // cap retained samples so small-eps runs stay in memory
                let steps = (scenario.horizon / dt).round().max(1.0) as usize;
                let sample_every = policy.sample_every.max(steps.div_ceil(400));
                match run_regularized_scenario(
                    scenario,
                    eps,
                    policy.n_nodes,
                    Some(dt),
                    sample_every,
                ) {
                    Ok(traj) => {
                        if let Some(dir) = out_dir {
                            let run_dir = dir.join(format!("eps_{eps}"));
                            if let Err(e) = save_reg_trajectory(&traj, &scenario.name, &run_dir) {
                                return SweepRow {
                                    eps,
                                    dt,
                                    tension_l1: traj.tension_l1_total,
                                    sup_kinetic: traj.sup_kinetic,
                                    max_weak_residual: f64::NAN,
                                    admissibility: f64::NAN,
                                    energy_slack_violations: traj.energy_slack_violations,
                                    error: Some(e.to_string()),
                                };
                            }
                        }
                        let field = match GammaField::from_regularized(&traj) {
                            Ok(f) => f,
                            Err(e) => {
                                return SweepRow {
                                    eps,
                                    dt,
                                    tension_l1: f64::NAN,
                                    sup_kinetic: f64::NAN,
                                    max_weak_residual: f64::NAN,
                                    admissibility: f64::NAN,
                                    energy_slack_violations: 0,
                                    error: Some(e.to_string()),
                                }
                            }
                        };
                        let mut max_res = 0.0f64;
                        for tf in &family {
                            match weak_residual(&WeakInput::Field(&field), tf, &alpha, &beta, g) {
                                Ok(r) => max_res = max_res.max(r.abs()),
                                Err(e) => {
                                    return SweepRow {
                                        eps,
                                        dt,
                                        tension_l1: traj.tension_l1_total,
                                        sup_kinetic: traj.sup_kinetic,
                                        max_weak_residual: f64::NAN,
                                        admissibility: f64::NAN,
                                        energy_slack_violations: traj.energy_slack_violations,
                                        error: Some(e.to_string()),
                                    }
                                }
                            }
                        }
                        let admissibility = match build_empirical(
                            std::slice::from_ref(&field),
                            &YmConfig::default(),
                        ) {
                            Ok(ym) => ym.admissibility(),
                            Err(_) => field.integrate(|gm| gm.norm_squared()),
                        };
                        SweepRow {
                            eps,
                            dt,
                            tension_l1: traj.tension_l1_total,
                            sup_kinetic: traj.sup_kinetic,
                            max_weak_residual: max_res,
                            admissibility,
                            energy_slack_violations: traj.energy_slack_violations,
                            error: None,
                        }
                    }
                    Err(e) => SweepRow {
                        eps,
                        dt,
                        tension_l1: f64::NAN,
                        sup_kinetic: f64::NAN,
                        max_weak_residual: f64::NAN,
                        admissibility: f64::NAN,
                        energy_slack_violations: 0,
                        error: Some(e.to_string()),
                    },
                }
            })
            .collect()
    });

    let ok: Vec<&SweepRow> = rows.iter().filter(|r| r.error.is_none()).collect();
    let trends = if ok.len() >= 2 {
        let ratio = |f: fn(&SweepRow) -> f64| {
            let mut lo = f64::MAX;
            let mut hi = 0.0f64;
            for r in &ok {
                lo = lo.min(f(r));
                hi = hi.max(f(r));
            }
            hi / lo.max(f64::MIN_POSITIVE)
        };
        let mut monotone = true;
        for w in ok.windows(2) {
            if w[1].max_weak_residual > 1.1 * w[0].max_weak_residual {
                monotone = false;
            }
        }
        Some(SweepTrends {
            tension_l1_ratio: ratio(|r| r.tension_l1),
            kinetic_ratio: ratio(|r| r.sup_kinetic),
            admissibility_ratio: ratio(|r| r.admissibility),
            residual_monotone: monotone,
        })
    } else {
        None
    };

    Ok(SweepReport {
        scenario: scenario.name.clone(),
        nodes: policy.n_nodes,
        rows,
        trends,
    })
}

impl SweepReport {
    pub fn to_csv(&self) -> String {
        let mut csv = String::from(
            "eps,dt,tension_l1,sup_kinetic,max_weak_residual,admissibility,energy_slack_violations,error\n",
        );
        for r in &self.rows {
            csv.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.eps,
                r.dt,
                r.tension_l1,
                r.sup_kinetic,
                r.max_weak_residual,
                r.admissibility,
                r.energy_slack_violations,
                r.error.clone().unwrap_or_default()
            ));
        }
        csv
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        write_file(&dir.join("sweep.csv"), &self.to_csv())?;
        write_file(
            &dir.join("sweep.json"),
            &serde_json::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))?,
        )
    }
}

/// Residual report rows (test-pair id, epsilon, residual) as CSV.
pub fn residual_report_csv(rows: &[(usize, f64, f64)]) -> String {
    let mut csv = String::from("pair,eps,residual\n");
    for (pair, eps, res) in rows {
        csv.push_str(&format!("{pair},{eps},{res}\n"));
    }
    csv
}

/// Deterministic map of preset names to their scenarios, for listings.
pub fn preset_table() -> BTreeMap<&'static str, Scenario> {
    PRESETS.iter().map(|n| (*n, preset(n).unwrap())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::compatibility_residuals;

    #[test]
    fn presets_pass_their_own_invariants() {
        for name in PRESETS {
            let sc = preset(name).unwrap();
            sc.validate(101).unwrap();
            sc.validate(201).unwrap();
        }
    }

    #[test]
    fn unknown_preset_lists_known_names() {
        match preset("sideways") {
            Err(Error::UnknownPreset { name, known }) => {
                assert_eq!(name, "sideways");
                assert_eq!(known.len(), 4);
                assert!(known.contains(&"upright".to_string()));
            }
            other => panic!("expected unknown-preset error, got {other:?}"),
        }
    }

    #[test]
    fn upright_preset_matches_closed_form() {
        let sc = preset("upright").unwrap();
        let grid = Grid1D::new(101).unwrap();
        let alpha = sc.sample_alpha(grid).unwrap();
        // alpha(0) = -g/|g| (one unit above the origin), alpha(1) = 0
        assert!((alpha.values()[0] - Vec3::new(0.0, 0.0, 1.0)).norm() < 1e-15);
        assert!(alpha.values()[100].norm() < 1e-15);
    }

    #[test]
    fn hanging_preset_compatibility_is_exact() {
        let sc = preset("hanging").unwrap();
        let grid = Grid1D::new(101).unwrap();
        let alpha = sc.sample_alpha(grid).unwrap();
        let beta = sc.sample_beta(grid).unwrap();
        let (r1, r2) = compatibility_residuals(&alpha, &beta, sc.bc);
        assert!(r1 <= 1e-10);
        assert_eq!(r2, 0.0);
    }

    #[test]
    fn folded_preset_has_fold_apex_and_unit_speed_links() {
        let sc = preset("folded").unwrap();
        let grid = Grid1D::new(101).unwrap();
        let alpha = sc.sample_alpha(grid).unwrap();
        // apex at s = 1/2, half a unit below the origin
        assert!((alpha.values()[50] - Vec3::new(0.0, 0.0, -0.5)).norm() < 1e-15);
        // both ends at the origin
        assert!(alpha.values()[0].norm() < 1e-15);
        assert!(alpha.values()[100].norm() < 1e-15);
        // |alpha_s| = 1 a.e. with the jump at the fold
        let (r1, _) = compatibility_residuals(&alpha, &Field3::zeros(grid), sc.bc);
        assert!(r1 > 0.9);
    }

    #[test]
    fn scenario_roundtrip_is_byte_identical() {
        let dir = std::env::temp_dir().join("whipdyn-test-scenario");
        fs::create_dir_all(&dir).unwrap();
        let path1 = dir.join("a.toml");
        let path2 = dir.join("b.toml");
        // include tabulated data to pin bitwise reproduction
        let grid = Grid1D::new(11).unwrap();
        let alpha = preset("hanging").unwrap().sample_alpha(grid).unwrap();
        let sc = Scenario {
            name: "custom".to_string(),
            bc: BoundaryFamily::Whip,
            horizon: 0.5,
            g: [0.0, 0.0, -9.8],
            alpha: CurveSpec::Tabulated {
                values: alpha.values().iter().map(|v| [v.x, v.y, v.z]).collect(),
            },
            beta: VelocitySpec::Zero,
        };
        save_scenario(&sc, &path1).unwrap();
        let loaded = load_scenario(&path1).unwrap();
        assert_eq!(loaded, sc);
        save_scenario(&loaded, &path2).unwrap();
        assert_eq!(fs::read(&path1).unwrap(), fs::read(&path2).unwrap());
    }

    #[test]
    fn validation_names_the_offending_node() {
        let mut values: Vec<[f64; 3]> = (0..11)
            .map(|i| {
                let s = i as f64 / 10.0;
                [0.0, 0.0, s - 1.0]
            })
            .collect();
        values[5][0] += 0.05; // local stretch past 1
        let sc = Scenario {
            name: "stretched".to_string(),
            bc: BoundaryFamily::Whip,
            horizon: 1.0,
            g: [0.0, 0.0, -9.8],
            alpha: CurveSpec::Tabulated { values },
            beta: VelocitySpec::Zero,
        };
        match sc.validate(11) {
            Err(Error::Validation { issues }) => {
                assert!(issues.iter().any(|m| m.contains("node")), "{issues:?}");
            }
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn missing_gravity_key_is_a_parse_error_naming_g() {
        let dir = std::env::temp_dir().join("whipdyn-test-missing-g");
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.toml");
        fs::write(
            &path,
            "[scenario]\nname = \"x\"\nbc = \"whip\"\nhorizon = 1.0\n\n[scenario.alpha]\nkind = \"line\"\nfrom = [0.0, 0.0, 1.0]\nto = [0.0, 0.0, 0.0]\n\n[scenario.beta]\nkind = \"zero\"\n",
        )
        .unwrap();
        match load_scenario(&path) {
            Err(Error::Config(msg)) => assert!(msg.contains("`g`"), "message: {msg}"),
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn sweep_validates_eps_list() {
        let sc = preset("upright").unwrap();
        let policy = SweepPolicy {
            n_nodes: 31,
            ..SweepPolicy::default()
        };
        assert!(matches!(
            sweep_epsilon(&sc, &[0.1, 0.1], &policy),
            Err(Error::Validation { .. })
        ));
        assert!(matches!(
            sweep_epsilon(&sc, &[0.1, 0.3], &policy),
            Err(Error::Validation { .. })
        ));
        assert!(matches!(
            sweep_epsilon(&sc, &[1.5], &policy),
            Err(Error::Validation { .. })
        ));
    }

    #[test]
    fn single_eps_sweep_has_no_trend_columns() {
        let mut sc = preset("upright").unwrap();
        sc.horizon = 0.02;
        let policy = SweepPolicy {
            n_nodes: 41,
            sample_every: 10,
            test_pairs: 2,
            dt: None,
        };
        let report = sweep_epsilon(&sc, &[0.1], &policy).unwrap();
        assert_eq!(report.rows.len(), 1);
        assert!(report.rows[0].error.is_none());
        assert!(report.trends.is_none());
    }
}
