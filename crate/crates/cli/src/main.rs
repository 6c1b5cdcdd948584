//! `scalelab` — run scale-by-scale corrector simulations, check the driver
//! covariation identities, emit reference curves, and compare the two.
//!
//! Exit codes: 0 success, 1 failed assertions (identity suite, comparison,
//! or convergence out of range), 2 usage/configuration errors.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use scalelab_core::covariation::SUITE_Z_THRESHOLD;
use scalelab_core::grid::GridSpec;
use scalelab_core::harness::{
    self, covariation_csv, reference_csv, trajectory_csv, CompareTolerances, MomentOracles,
};
use scalelab_core::{
    compare, config, convergence_study, run_ensemble, run_identity_suite, QvConfig, SimConfig,
};

#[derive(Parser)]
#[command(name = "scalelab", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonOpts {
    /// Configuration file (flat `key = value`; defaults apply when omitted).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the config output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte Carlo ensemble and write the moment trajectory CSV.
    Simulate(CommonOpts),
    /// Estimate every driver covariation identity and flag outliers.
    QvCheck(CommonOpts),
    /// Emit the deterministic reference curves.
    Reference(CommonOpts),
    /// Step-size convergence study of the residuum.
    Convergence(CommonOpts),
    /// Run an ensemble (or load a trajectory) and compare against the
    /// reference curves.
    Report {
        #[command(flatten)]
        common: CommonOpts,
        /// Reuse an existing trajectory CSV instead of running an ensemble.
        #[arg(long)]
        trajectory: Option<PathBuf>,
    },
}

fn load(opts: &CommonOpts) -> Result<SimConfig, config::ConfigError> {
    let mut cfg = match &opts.config {
        Some(path) => config::load_config(path)?,
        None => SimConfig::default_desk(),
    };
    if let Some(seed) = opts.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &opts.out {
        cfg.output_dir = out.clone();
    }
    let warnings = cfg.validate()?;
    for w in warnings {
        eprintln!("warning: {w}");
    }
    Ok(cfg)
}

/// s-grid for reference curves: the trajectory output times.
fn output_grid(cfg: &SimConfig) -> Vec<f64> {
    let mut grid = vec![0.0];
    let mut s = cfg.output_every;
    while s < cfg.s_max - 1e-9 {
        grid.push(s);
        s += cfg.output_every;
    }
    if cfg.s_max > 0.0 {
        grid.push(cfg.s_max);
    }
    grid
}

fn cmd_simulate(opts: &CommonOpts) -> Result<ExitCode, CliError> {
    let cfg = load(opts)?;
    let out = run_ensemble(&cfg)?;
    let csv = trajectory_csv(&out.trajectory);
    let path = cfg.output_dir.join("trajectory.csv");
    harness::write_file(&path, &csv)?;
    println!(
        "wrote {} ({} output times, ensemble {})",
        path.display(),
        out.trajectory.rows.len(),
        cfg.ensemble
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_qv_check(opts: &CommonOpts) -> Result<ExitCode, CliError> {
    let cfg = load(opts)?;
    let s_list = [0.0, 1.0, 3.0];
    let qv = QvConfig {
        sampler: cfg.sampler_config(),
        grid: GridSpec::new(cfg.grid_n, cfg.box_length).map_err(CliError::msg)?,
        seed: cfg.seed,
    };
    let n_samples = 10_000;
    let estimates = run_identity_suite(&s_list, cfg.epsilon, n_samples, cfg.ds, &qv)?;
    let csv = covariation_csv(&estimates);
    let path = cfg.output_dir.join("qv_report.csv");
    harness::write_file(&path, &csv)?;

    let mut failures = 0usize;
    println!(
        "{:<22} {:>6} {:>10} {:>8}  status",
        "kind", "s", "max |z|", "samples"
    );
    for est in &estimates {
        let fail = est.fails_at(SUITE_Z_THRESHOLD);
        failures += fail as usize;
        println!(
            "{:<22} {:>6.2} {:>10.3} {:>8}  {}",
            est.kind.label(),
            est.s,
            est.z_score(),
            est.n_samples,
            if fail { "FAIL" } else { "ok" }
        );
    }
    println!("wrote {}", path.display());
    if failures > 0 {
        eprintln!("{failures} identity estimate(s) beyond {SUITE_Z_THRESHOLD} standard errors");
        return Ok(ExitCode::FAILURE);
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_reference(opts: &CommonOpts) -> Result<ExitCode, CliError> {
    let cfg = load(opts)?;
    let grid = output_grid(&cfg);
    let oracles = MomentOracles::build(cfg.epsilon, &grid)?;
    let csv = reference_csv(&[&oracles.phi2, &oracles.sigma2, &oracles.phi4, &oracles.f2]);
    let path = cfg.output_dir.join("reference.csv");
    harness::write_file(&path, &csv)?;
    println!("wrote {}", path.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_convergence(opts: &CommonOpts) -> Result<ExitCode, CliError> {
    let cfg = load(opts)?;
    let ds_list = [0.04, 0.02, 0.01];
    let table = convergence_study(&cfg, &ds_list)?;
    let path = cfg.output_dir.join("convergence.csv");
    harness::write_file(&path, &table.csv())?;
    println!("{:>8} {:>14} {:>12} {:>10}", "ds", "E|r|^2", "stderr", "order");
    for r in &table.rows {
        println!(
            "{:>8} {:>14.6e} {:>12.3e} {:>10}",
            r.ds,
            r.r2_final,
            r.r2_se,
            r.observed_order
                .map(|o| format!("{o:.3}"))
                .unwrap_or_default()
        );
    }
    println!("wrote {}", path.display());
    if !table.ok {
        eprintln!("observed convergence order outside [0.7, 1.3]");
        return Ok(ExitCode::FAILURE);
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_report(opts: &CommonOpts, trajectory: Option<&Path>) -> Result<ExitCode, CliError> {
    let cfg = load(opts)?;
    let traj = match trajectory {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                CliError::Config(config::ConfigError::Io {
                    path: path.to_path_buf(),
                    source: e,
                })
            })?;
            harness::parse_trajectory_csv(&text)?
        }
        None => {
            let out = run_ensemble(&cfg)?;
            let csv = trajectory_csv(&out.trajectory);
            harness::write_file(&cfg.output_dir.join("trajectory.csv"), &csv)?;
            // martingale diagnostics ride along with the report
            for row in &out.martingale {
                if row.s == 0.0 {
                    continue;
                }
                let zx = row.phi_mean.x.abs() / row.phi_se.x.max(f64::MIN_POSITIVE);
                let zy = row.phi_mean.y.abs() / row.phi_se.y.max(f64::MIN_POSITIVE);
                println!(
                    "info: s = {:.2}: E[phi] z-scores ({:.2}, {:.2}), E[sigma.Jphi] = {:.3e}",
                    row.s,
                    zx,
                    zy,
                    out.trajectory
                        .rows
                        .iter()
                        .find(|r| r.s == row.s)
                        .map(|r| r.sigma_dot_jphi.mean)
                        .unwrap_or(f64::NAN)
                );
            }
            out.trajectory
        }
    };
    let grid = output_grid(&cfg);
    let oracles = MomentOracles::build(cfg.epsilon, &grid)?;
    let report = compare(&traj, &oracles, &CompareTolerances::default())?;
    let text = report.render();
    print!("{text}");
    harness::write_file(&cfg.output_dir.join("report.txt"), &text)?;
    Ok(if report.ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

enum CliError {
    Config(config::ConfigError),
    Runtime(String),
}

impl CliError {
    fn msg<E: std::fmt::Display>(e: E) -> Self {
        CliError::Runtime(format!("{e}"))
    }
}

impl From<config::ConfigError> for CliError {
    fn from(e: config::ConfigError) -> Self {
        CliError::Config(e)
    }
}

impl From<scalelab_core::HarnessError> for CliError {
    fn from(e: scalelab_core::HarnessError) -> Self {
        match e {
            scalelab_core::HarnessError::Config(c) => CliError::Config(c),
            other => CliError::Runtime(format!("{other}")),
        }
    }
}

impl From<scalelab_core::CovariationError> for CliError {
    fn from(e: scalelab_core::CovariationError) -> Self {
        CliError::Runtime(format!("{e}"))
    }
}

impl From<scalelab_core::MomentError> for CliError {
    fn from(e: scalelab_core::MomentError) -> Self {
        CliError::Runtime(format!("{e}"))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(opts) => cmd_simulate(opts),
        Command::QvCheck(opts) => cmd_qv_check(opts),
        Command::Reference(opts) => cmd_reference(opts),
        Command::Convergence(opts) => cmd_convergence(opts),
        Command::Report { common, trajectory } => cmd_report(common, trajectory.as_deref()),
    };
    match result {
        Ok(code) => code,
        Err(CliError::Config(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
