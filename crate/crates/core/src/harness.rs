//! Ensemble orchestration: deterministic parallel path runs, trajectory
//! CSV emission, comparison against the reference curves, and the step-size
//! convergence study.
//!
//! Determinism contract: per-path seeds derive from `(seed, path_index)`,
//! paths are reduced in index order, and no result depends on the worker
//! count (`RAYON_NUM_THREADS` only changes the schedule).

use std::fmt::Write as _;

use rayon::prelude::*;
use thiserror::Error;

use crate::algebra::{Mat2, Vec2};
use crate::config::{ConfigError, SimConfig};
use crate::covariation::CovariationEstimate;
use crate::derive_seed;
use crate::evolution::{run_path_with, EvolutionError, StepOptions, StepSummary};
use crate::moments::{envelope_constant, shape, MomentCurve, MomentError, MomentKind};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Moment(#[from] MomentError),
    #[error("path {path_index} failed: {source}")]
    Path {
        path_index: usize,
        source: EvolutionError,
    },
    #[error("trajectory is empty; refusing to compare")]
    EmptyTrajectory,
    #[error("convergence study needs at least 3 strictly decreasing step sizes, got {0:?}")]
    BadStepList(Vec<f64>),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

/// Ensemble mean and standard error of one quantity at one output time.
#[derive(Clone, Copy, Debug, Default)]
pub struct MeanSe {
    pub mean: f64,
    pub se: f64,
}

/// One trajectory row: ensemble statistics of the space-averaged moments.
#[derive(Clone, Copy, Debug)]
pub struct TrajectoryRow {
    pub s: f64,
    pub lambda: f64,
    pub psi2: MeanSe,
    pub phi2: MeanSe,
    pub sigma2: MeanSe,
    pub phi4: MeanSe,
    pub f2: MeanSe,
    pub r2: MeanSe,
    /// Signed cross moment `E[sigma . J phi]`; reported for diagnostics,
    /// not part of the trajectory CSV schema.
    pub sigma_dot_jphi: MeanSe,
}

/// Per-`s` ensemble statistics of one run.
#[derive(Clone, Debug)]
pub struct MomentTrajectory {
    pub epsilon: f64,
    pub ensemble: usize,
    pub rows: Vec<TrajectoryRow>,
}

/// Componentwise ensemble means of the martingale fields at one output
/// time (space-averaged per path first).
#[derive(Clone, Copy, Debug)]
pub struct MartingaleRow {
    pub s: f64,
    pub phi_mean: Vec2,
    pub phi_se: Vec2,
    pub f_mean: Mat2,
    pub f_se: Mat2,
}

/// Everything an ensemble run produces.
#[derive(Clone, Debug)]
pub struct EnsembleOutput {
    pub trajectory: MomentTrajectory,
    pub martingale: Vec<MartingaleRow>,
}

fn mean_se(samples: &[f64]) -> MeanSe {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    if samples.len() < 2 {
        return MeanSe { mean, se: 0.0 };
    }
    let var = samples.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    MeanSe {
        mean,
        se: (var / n).sqrt(),
    }
}

/// Runs `config.ensemble` independent paths and reduces them in path order.
pub fn run_ensemble(config: &SimConfig) -> Result<EnsembleOutput, HarnessError> {
    run_ensemble_with(config, &StepOptions::default())
}

/// The per-path signed space averages the martingale checks need.
struct PathTrace {
    summaries: Vec<StepSummary>,
    phi_means: Vec<Vec2>,
    f_means: Vec<Mat2>,
}

pub fn run_ensemble_with(
    config: &SimConfig,
    opts: &StepOptions,
) -> Result<EnsembleOutput, HarnessError> {
    config.validate()?;
    let traces: Vec<Result<PathTrace, EvolutionError>> = (0..config.ensemble)
        .into_par_iter()
        .map(|path_index| {
            let seed = derive_seed(config.seed, path_index as u64);
            let mut phi_means = Vec::new();
            let mut f_means = Vec::new();
            let summaries = run_path_with(config, seed, opts, |state| {
                let n = state.spec().num_points() as f64;
                let mut phi_acc = Vec2::ZERO;
                let mut f_acc = Mat2::ZERO;
                for idx in 0..state.spec().num_points() {
                    phi_acc = phi_acc.add(state.phi.get(idx));
                    f_acc = f_acc.add(state.f.get(idx));
                }
                phi_means.push(phi_acc.scale(1.0 / n));
                f_means.push(f_acc.scale(1.0 / n));
            })?;
            Ok(PathTrace {
                summaries,
                phi_means,
                f_means,
            })
        })
        .collect();

    // all-or-nothing: the first failing path aborts the run
    let mut paths = Vec::with_capacity(traces.len());
    for (path_index, t) in traces.into_iter().enumerate() {
        paths.push(t.map_err(|source| HarnessError::Path { path_index, source })?);
    }

    let n_out = paths[0].summaries.len();
    let mut rows = Vec::with_capacity(n_out);
    let mut martingale = Vec::with_capacity(n_out);
    for k in 0..n_out {
        let s = paths[0].summaries[k].s_end;
        let lambda = (1.0 + config.epsilon * config.epsilon * s).sqrt();
        let col = |f: &dyn Fn(&StepSummary) -> f64| -> Vec<f64> {
            paths.iter().map(|p| f(&p.summaries[k])).collect()
        };
        rows.push(TrajectoryRow {
            s,
            lambda,
            psi2: mean_se(&col(&|x| x.space_avg_psi2)),
            phi2: mean_se(&col(&|x| x.space_avg_phi2)),
            sigma2: mean_se(&col(&|x| x.space_avg_sigma2)),
            phi4: mean_se(&col(&|x| x.space_avg_phi4)),
            f2: mean_se(&col(&|x| x.space_avg_f2)),
            r2: mean_se(&col(&|x| x.space_avg_r2)),
            sigma_dot_jphi: mean_se(&col(&|x| x.space_avg_sigma_dot_jphi)),
        });

        let phi_x = mean_se(&paths.iter().map(|p| p.phi_means[k].x).collect::<Vec<_>>());
        let phi_y = mean_se(&paths.iter().map(|p| p.phi_means[k].y).collect::<Vec<_>>());
        let f_stats: Vec<MeanSe> = (0..4)
            .map(|c| mean_se(&paths.iter().map(|p| p.f_means[k].0[c]).collect::<Vec<_>>()))
            .collect();
        martingale.push(MartingaleRow {
            s,
            phi_mean: Vec2::new(phi_x.mean, phi_y.mean),
            phi_se: Vec2::new(phi_x.se, phi_y.se),
            f_mean: Mat2([f_stats[0].mean, f_stats[1].mean, f_stats[2].mean, f_stats[3].mean]),
            f_se: Mat2([f_stats[0].se, f_stats[1].se, f_stats[2].se, f_stats[3].se]),
        });
    }

    Ok(EnsembleOutput {
        trajectory: MomentTrajectory {
            epsilon: config.epsilon,
            ensemble: config.ensemble,
            rows,
        },
        martingale,
    })
}

/// Trajectory CSV, schema
/// `s, lambda, mean_psi2, se_psi2, mean_phi2, se_phi2, mean_sigma2,
/// se_sigma2, mean_phi4, se_phi4, mean_f2, se_f2, mean_r2, se_r2`.
pub fn trajectory_csv(t: &MomentTrajectory) -> String {
    let mut out = String::from(
        "s,lambda,mean_psi2,se_psi2,mean_phi2,se_phi2,mean_sigma2,se_sigma2,\
         mean_phi4,se_phi4,mean_f2,se_f2,mean_r2,se_r2\n",
    );
    for r in &t.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.s,
            r.lambda,
            r.psi2.mean,
            r.psi2.se,
            r.phi2.mean,
            r.phi2.se,
            r.sigma2.mean,
            r.sigma2.se,
            r.phi4.mean,
            r.phi4.se,
            r.f2.mean,
            r.f2.se,
            r.r2.mean,
            r.r2.se
        );
    }
    out
}

/// Parses a trajectory CSV produced by [`trajectory_csv`]. The small-coupling
/// parameter is recovered from the lambda column.
pub fn parse_trajectory_csv(text: &str) -> Result<MomentTrajectory, HarnessError> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            continue; // header
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<f64> = line
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| HarnessError::Io {
                path: format!("trajectory csv line {}", i + 1),
                source: std::io::Error::new(std::io::ErrorKind::InvalidData, "bad float"),
            })?;
        if fields.len() != 14 {
            return Err(HarnessError::Io {
                path: format!("trajectory csv line {}", i + 1),
                source: std::io::Error::new(std::io::ErrorKind::InvalidData, "want 14 columns"),
            });
        }
        rows.push(TrajectoryRow {
            s: fields[0],
            lambda: fields[1],
            psi2: MeanSe { mean: fields[2], se: fields[3] },
            phi2: MeanSe { mean: fields[4], se: fields[5] },
            sigma2: MeanSe { mean: fields[6], se: fields[7] },
            phi4: MeanSe { mean: fields[8], se: fields[9] },
            f2: MeanSe { mean: fields[10], se: fields[11] },
            r2: MeanSe { mean: fields[12], se: fields[13] },
            sigma_dot_jphi: MeanSe::default(),
        });
    }
    let epsilon = rows
        .iter()
        .rev()
        .find(|r| r.s > 0.0)
        .map(|r| ((r.lambda * r.lambda - 1.0) / r.s).max(0.0).sqrt())
        .unwrap_or(0.0);
    Ok(MomentTrajectory {
        epsilon,
        ensemble: 0,
        rows,
    })
}

/// Reference-curve CSV, schema `s, value, kind, epsilon`.
pub fn reference_csv(curves: &[&MomentCurve]) -> String {
    let mut out = String::from("s,value,kind,epsilon\n");
    for c in curves {
        for (s, v) in c.s_grid.iter().zip(c.values.iter()) {
            let _ = writeln!(out, "{},{},{},{}", s, v, c.kind.label(), c.epsilon);
        }
    }
    out
}

/// Covariation report CSV, schema
/// `kind, s, component, value, stderr, target, z`.
pub fn covariation_csv(estimates: &[CovariationEstimate]) -> String {
    let mut out = String::from("kind,s,component,value,stderr,target,z\n");
    for e in estimates {
        for (label, value, stderr, target) in &e.components {
            let z = (value - target).abs() / stderr;
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                e.kind.label(),
                e.s,
                label,
                value,
                stderr,
                target,
                z
            );
        }
    }
    out
}

pub fn write_file(path: &std::path::Path, content: &str) -> Result<(), HarnessError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|source| HarnessError::Io {
                path: parent.display().to_string(),
                source,
            })?;
        }
    }
    std::fs::write(path, content).map_err(|source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Tolerances for [`compare`]. The proxy-corrector check combines the
/// statistical error with a relative floor absorbing the O(ds) weak bias;
/// the envelope checks allow the reported constants a fixed slack.
#[derive(Clone, Copy, Debug)]
pub struct CompareTolerances {
    pub phi2_z: f64,
    pub phi2_rel: f64,
    pub envelope_slack: f64,
}

impl Default for CompareTolerances {
    fn default() -> Self {
        CompareTolerances {
            phi2_z: 3.0,
            phi2_rel: 0.15,
            envelope_slack: 1.5,
        }
    }
}

/// Reference curves for one run.
#[derive(Clone, Debug)]
pub struct MomentOracles {
    pub phi2: MomentCurve,
    pub sigma2: MomentCurve,
    pub phi4: MomentCurve,
    pub f2: MomentCurve,
}

impl MomentOracles {
    /// Builds all four curves for `epsilon` on the given grid.
    pub fn build(epsilon: f64, s_grid: &[f64]) -> Result<Self, MomentError> {
        let phi2 = crate::moments::phi2_exact(epsilon, s_grid)?;
        let sigma2 = crate::moments::sigma2_bound(epsilon, s_grid, &phi2)?;
        let phi4 = crate::moments::phi4_bound(epsilon, s_grid, &phi2)?;
        let f2 = crate::moments::f2_bound(epsilon, s_grid, &phi2, &sigma2, &phi4)?;
        Ok(MomentOracles {
            phi2,
            sigma2,
            phi4,
            f2,
        })
    }
}

#[derive(Clone, Debug)]
pub struct CompareLine {
    pub s: f64,
    pub quantity: &'static str,
    pub measured: f64,
    pub se: f64,
    pub reference: f64,
    pub pass: bool,
    pub note: String,
}

#[derive(Clone, Debug)]
pub struct CompareReport {
    pub lines: Vec<CompareLine>,
    /// Reported envelope constants (sigma2, phi4, f2) from the oracle run.
    pub constants: [f64; 3],
    pub ok: bool,
}

impl CompareReport {
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:>8} {:<10} {:>14} {:>12} {:>14}  {}",
            "s", "quantity", "measured", "stderr", "reference", "status"
        );
        for l in &self.lines {
            let _ = writeln!(
                out,
                "{:>8.3} {:<10} {:>14.6e} {:>12.3e} {:>14.6e}  {} {}",
                l.s,
                l.quantity,
                l.measured,
                l.se,
                l.reference,
                if l.pass { "PASS" } else { "FAIL" },
                l.note
            );
        }
        let _ = writeln!(
            out,
            "envelope constants (sigma2, phi4, f2): {:.4}, {:.4}, {:.4}",
            self.constants[0], self.constants[1], self.constants[2]
        );
        let _ = writeln!(out, "overall: {}", if self.ok { "PASS" } else { "FAIL" });
        out
    }
}

/// Checks a Monte Carlo trajectory against the reference curves:
/// `E|phi|^2` against the exact ODE within `max(phi2_z * se, phi2_rel)`,
/// and `E|sigma|^2`, `E|phi|^4`, `E|f|^2` against their envelopes times the
/// reported constants with `envelope_slack`.
pub fn compare(
    trajectory: &MomentTrajectory,
    oracles: &MomentOracles,
    tol: &CompareTolerances,
) -> Result<CompareReport, HarnessError> {
    if trajectory.rows.is_empty() {
        return Err(HarnessError::EmptyTrajectory);
    }
    let eps = oracles.phi2.epsilon;
    let mut lines = Vec::new();
    let mut ok = true;

    // the lambda column pins the trajectory's coupling; a mismatched oracle
    // shows up here rather than as a silent bad comparison
    for r in &trajectory.rows {
        let expected = 1.0 + eps * eps * r.s;
        if (r.lambda * r.lambda - expected).abs() > 1e-9 * expected {
            ok = false;
            lines.push(CompareLine {
                s: r.s,
                quantity: "lambda",
                measured: r.lambda,
                se: 0.0,
                reference: expected.sqrt(),
                pass: false,
                note: format!(
                    "trajectory lambda inconsistent with oracle epsilon = {eps}; \
                     curves were built for a different coupling"
                ),
            });
        }
    }
    if (trajectory.epsilon - eps).abs() > 1e-9 && trajectory.epsilon > 0.0 {
        ok = false;
        lines.push(CompareLine {
            s: 0.0,
            quantity: "epsilon",
            measured: trajectory.epsilon,
            se: 0.0,
            reference: eps,
            pass: false,
            note: "oracle epsilon differs from trajectory epsilon".into(),
        });
    }

    let k_sigma2 = envelope_constant(&oracles.sigma2);
    let k_phi4 = envelope_constant(&oracles.phi4);
    let k_f2 = envelope_constant(&oracles.f2);

    if ok {
        for r in &trajectory.rows {
            if r.s == 0.0 {
                continue;
            }
            // exact ODE comparison
            let reference = oracles.phi2.value_at(r.s);
            let band = (tol.phi2_z * r.phi2.se).max(tol.phi2_rel * reference);
            let pass = (r.phi2.mean - reference).abs() <= band;
            ok &= pass;
            lines.push(CompareLine {
                s: r.s,
                quantity: "phi2",
                measured: r.phi2.mean,
                se: r.phi2.se,
                reference,
                pass,
                note: String::new(),
            });
            // envelope comparisons, constants reported not hard-coded
            for (quantity, stat, kind, k) in [
                ("sigma2", r.sigma2, MomentKind::Sigma2Bound, k_sigma2),
                ("phi4", r.phi4, MomentKind::Phi4Bound, k_phi4),
                ("f2", r.f2, MomentKind::F2Bound, k_f2),
            ] {
                let bound = tol.envelope_slack * k * shape(kind, eps, r.s);
                let pass = stat.mean <= bound;
                ok &= pass;
                lines.push(CompareLine {
                    s: r.s,
                    quantity,
                    measured: stat.mean,
                    se: stat.se,
                    reference: bound,
                    pass,
                    note: String::new(),
                });
            }
        }
    }

    Ok(CompareReport {
        lines,
        constants: [k_sigma2, k_phi4, k_f2],
        ok,
    })
}

/// One row of the convergence study.
#[derive(Clone, Copy, Debug)]
pub struct ConvergenceRow {
    pub ds: f64,
    pub r2_final: f64,
    pub r2_se: f64,
    /// Observed order against the previous (coarser) level.
    pub observed_order: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
    pub ok: bool,
}

impl ConvergenceTable {
    pub fn csv(&self) -> String {
        let mut out = String::from("ds,mean_r2_final,se_r2_final,observed_order\n");
        for r in &self.rows {
            let order = r
                .observed_order
                .map(|o| o.to_string())
                .unwrap_or_default();
            let _ = writeln!(out, "{},{},{},{}", r.ds, r.r2_final, r.r2_se, order);
        }
        out
    }
}

/// Measures the weak first-order shrinkage of `E|r|^2` across step sizes.
/// Fresh driver randomness per level; observed order must land in
/// `[0.7, 1.3]` for `ok`.
pub fn convergence_study(
    config: &SimConfig,
    ds_list: &[f64],
) -> Result<ConvergenceTable, HarnessError> {
    convergence_study_with(config, ds_list, &StepOptions::default())
}

pub fn convergence_study_with(
    config: &SimConfig,
    ds_list: &[f64],
    opts: &StepOptions,
) -> Result<ConvergenceTable, HarnessError> {
    if ds_list.len() < 3 || ds_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(HarnessError::BadStepList(ds_list.to_vec()));
    }
    let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(ds_list.len());
    for (level, &ds) in ds_list.iter().enumerate() {
        let level_config = SimConfig {
            ds,
            seed: derive_seed(config.seed, 0xD5_0000 + level as u64),
            ..config.clone()
        };
        let out = run_ensemble_with(&level_config, opts)?;
        let last = out
            .trajectory
            .rows
            .last()
            .ok_or(HarnessError::EmptyTrajectory)?;
        let observed_order = rows.last().map(|prev: &ConvergenceRow| {
            (prev.r2_final / last.r2.mean).ln() / (prev.ds / ds).ln()
        });
        rows.push(ConvergenceRow {
            ds,
            r2_final: last.r2.mean,
            r2_se: last.r2.se,
            observed_order,
        });
    }
    let ok = rows
        .iter()
        .filter_map(|r| r.observed_order)
        .all(|o| (0.7..=1.3).contains(&o));
    Ok(ConvergenceTable { rows, ok })
}
