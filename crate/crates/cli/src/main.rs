use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};

use whipdyn::scenario::{
    load_run_gamma_field, resolve_scenario, run_constrained_scenario, run_regularized_scenario,
    save_ref_trajectory, save_reg_trajectory, save_tension_csv, sweep_epsilon_to_dir, SweepPolicy,
};
use whipdyn::tension::initial_tension;
use whipdyn::verify::{run_suite, Suite};
use whipdyn::youngmeasure::{build_empirical, RadiusPolicy, YmConfig};
use whipdyn::Grid1D;

/// Inextensible-string dynamics: regularized and constrained solvers,
/// tension boundary-value problems, eps sweeps, and empirical generalized
/// Young measures.
#[derive(Parser)]
#[command(name = "whipdyn", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Solver {
    /// eps-regularized semi-implicit solver (whip family)
    Reg,
    /// constrained reference solver (all families)
    Ref,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one scenario and write trajectory, diagnostics, metadata.
    Simulate {
        /// Preset name (upright, hanging, folded, ring) or a TOML path.
        #[arg(long)]
        scenario: String,
        #[arg(long, value_enum)]
        solver: Solver,
        /// Regularization strength (reg solver only).
        #[arg(long, default_value_t = 0.1)]
        eps: f64,
        #[arg(long, default_value_t = 101)]
        nodes: usize,
        /// Time step; defaults to the stable step of the chosen solver.
        #[arg(long)]
        dt: Option<f64>,
        /// Horizon override; defaults to the scenario's.
        #[arg(long)]
        horizon: Option<f64>,
        #[arg(long, default_value_t = 50)]
        sample_every: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve the initial-tension boundary value problem, emit CSV (s, sigma).
    Tension {
        #[arg(long)]
        scenario: String,
        #[arg(long, default_value_t = 101)]
        nodes: usize,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the regularized solver across an eps list and report the
    /// residual-vs-eps and bounds-vs-eps columns.
    Sweep {
        #[arg(long)]
        scenario: String,
        /// Strictly decreasing list, e.g. 0.1,0.03,0.01.
        #[arg(long, value_delimiter = ',')]
        eps_list: Vec<f64>,
        #[arg(long, default_value_t = 101)]
        nodes: usize,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long, default_value_t = 50)]
        sample_every: usize,
        #[arg(long, default_value_t = 12)]
        test_pairs: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build an empirical generalized Young measure from stored runs.
    YmExtract {
        /// Directory whose subdirectories hold run.json + trajectory.csv.
        #[arg(long)]
        runs: PathBuf,
        /// Value-box bins per axis.
        #[arg(long, default_value_t = 32)]
        bins: usize,
        /// "auto" (5x the 99th percentile of |gamma|) or a fixed radius.
        #[arg(long, default_value = "auto")]
        radius_policy: String,
        #[arg(long, default_value_t = 4)]
        cells_t: usize,
        #[arg(long, default_value_t = 4)]
        cells_s: usize,
        /// Output JSON path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run invariant checks; nonzero exit on any failure.
    Verify {
        /// maps | tension | energy | ym | all
        #[arg(long, default_value = "all")]
        suite: String,
    },
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run() -> anyhow::Result<ExitCode> {
    let cli = Cli::parse();
    match cli.command {
        Command::Simulate {
            scenario,
            solver,
            eps,
            nodes,
            dt,
            horizon,
            sample_every,
            out,
        } => {
            let mut sc = resolve_scenario(&scenario)?;
            if let Some(t) = horizon {
                sc.horizon = t;
            }
            match solver {
                Solver::Reg => {
                    let traj = run_regularized_scenario(&sc, eps, nodes, dt, sample_every)
                        .context("regularized run failed")?;
                    save_reg_trajectory(&traj, &sc.name, &out)?;
                    println!(
                        "reg run '{}': {} samples to t = {:.3}, E_eps {:.6} -> {:.6}, written to {}",
                        sc.name,
                        traj.times.len(),
                        traj.times.last().unwrap(),
                        traj.diagnostics.e_eps.first().unwrap(),
                        traj.diagnostics.e_eps.last().unwrap(),
                        out.display()
                    );
                }
                Solver::Ref => {
                    let dt = dt.unwrap_or_else(|| {
                        let grid = Grid1D::new(nodes).expect("validated above");
                        let gmag = sc.gravity().norm();
                        whipdyn::refdyn::default_dt_constrained(grid, 2.0 * gmag, gmag)
                    });
                    let traj = run_constrained_scenario(&sc, nodes, dt, sample_every)
                        .context("constrained run failed")?;
                    for flag in &traj.flags {
                        eprintln!("warning: {flag}");
                    }
                    save_ref_trajectory(&traj, &sc.name, &out)?;
                    println!(
                        "ref run '{}': {} samples to t = {:.3}, E {:.6} -> {:.6}, max drift {:.2e}, written to {}",
                        sc.name,
                        traj.times.len(),
                        traj.times.last().unwrap(),
                        traj.diagnostics.total.first().unwrap(),
                        traj.diagnostics.total.last().unwrap(),
                        traj.max_drift_post,
                        out.display()
                    );
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Tension {
            scenario,
            nodes,
            out,
        } => {
            let sc = resolve_scenario(&scenario)?;
            sc.validate(nodes)?;
            let grid = Grid1D::new(nodes)?;
            let alpha = sc.sample_alpha(grid)?;
            let beta = sc.sample_beta(grid)?;
            let sigma = initial_tension(&alpha, &beta, sc.bc, sc.gravity())?;
            save_tension_csv(grid, sigma.values(), &out)?;
            println!(
                "tension for '{}' on {} nodes: min {:.4}, max {:.4}, written to {}",
                sc.name,
                nodes,
                sigma.values().iter().cloned().fold(f64::MAX, f64::min),
                sigma.values().iter().cloned().fold(f64::MIN, f64::max),
                out.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Sweep {
            scenario,
            eps_list,
            nodes,
            dt,
            sample_every,
            test_pairs,
            out,
        } => {
            let sc = resolve_scenario(&scenario)?;
            let policy = SweepPolicy {
                n_nodes: nodes,
                dt,
                sample_every,
                test_pairs,
            };
            let report = sweep_epsilon_to_dir(&sc, &eps_list, &policy, &out)?;
            print!("{}", report.to_csv());
            if let Some(trends) = &report.trends {
                println!(
                    "trends: tension-L1 ratio {:.3}, kinetic ratio {:.3}, residual monotone {}",
                    trends.tension_l1_ratio, trends.kinetic_ratio, trends.residual_monotone
                );
            }
            let failed = report.rows.iter().any(|r| r.error.is_some());
            Ok(if failed {
                ExitCode::FAILURE
            } else {
                ExitCode::SUCCESS
            })
        }
        Command::YmExtract {
            runs,
            bins,
            radius_policy,
            cells_t,
            cells_s,
            out,
        } => {
            let radius = match radius_policy.as_str() {
                "auto" => RadiusPolicy::Auto,
                v => RadiusPolicy::Fixed(
                    v.parse::<f64>()
                        .context("radius policy must be 'auto' or a number")?,
                ),
            };
            let mut fields = Vec::new();
            for entry in std::fs::read_dir(&runs)? {
                let dir = entry?.path();
                if dir.is_dir() && dir.join("run.json").exists() {
                    let (field, meta) = load_run_gamma_field(&dir)?;
                    println!(
                        "loaded {} (eps = {:?}, {} time samples)",
                        dir.display(),
                        meta.eps,
                        field.times.len()
                    );
                    fields.push(field);
                }
            }
            if fields.is_empty() {
                bail!("no run directories with run.json under {}", runs.display());
            }
            let cfg = YmConfig {
                cells_t,
                cells_s,
                radius,
                value_bins: bins,
                angle_bins: 64,
            };
            let ym = build_empirical(&fields, &cfg)?;
            let json = ym.to_json()?;
            if let Some(parent) = out.parent() {
                std::fs::create_dir_all(parent)?;
            }
            std::fs::write(&out, &json)?;
            println!(
                "measure over {} fields: lambda = {:.4}, second moment = {:.4}, written to {}",
                fields.len(),
                ym.lambda_total(),
                ym.second_moment(),
                out.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify { suite } => {
            let Some(suite) = Suite::parse(&suite) else {
                bail!("unknown suite '{suite}'; use maps, tension, energy, ym, or all");
            };
            let results = run_suite(suite);
            let mut ok = true;
            for r in &results {
                println!("{}", r.line());
                ok &= r.passed;
            }
            println!(
                "{}/{} checks passed",
                results.iter().filter(|r| r.passed).count(),
                results.len()
            );
            Ok(if ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
    }
}
