//! Configuration, file formats, run drivers and the command-line surface.

pub mod cli;
pub mod config;
pub mod csvio;
pub mod snapshot;

use crate::diagnostics::DiagnosticsRecord;
use crate::grid::Grid;
use crate::init::{init_state, InitError, RatioEnvelope};
use crate::solver::{simulate, RunControl, RunFailure, RunOutput, Solver};
use crate::state::State;
use config::Config;
use csvio::{write_timeseries_csv, CsvIoError};
use serde::Serialize;
use snapshot::{write_snapshot, SnapshotError};
use std::path::{Path, PathBuf};
use thiserror::Error;

/// Environment variable overriding `output.output_dir`.
pub const OUTPUT_DIR_ENV: &str = "MHD2D_OUTPUT_DIR";

#[derive(Debug, Error)]
pub enum RunError {
    #[error("initial data: {0}")]
    Init(#[from] InitError),
    #[error("{0}")]
    Grid(#[from] crate::params::ParamError),
    #[error("cannot create {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Snapshot(#[from] SnapshotError),
    #[error(transparent)]
    Csv(#[from] CsvIoError),
    #[error("cannot write metadata: {0}")]
    Metadata(String),
    #[error("run aborted: {0}")]
    Solver(Box<RunFailure>),
}

pub fn output_dir(config: &Config) -> PathBuf {
    match std::env::var_os(OUTPUT_DIR_ENV) {
        Some(dir) if !dir.is_empty() => PathBuf::from(dir),
        _ => config.output.output_dir.clone(),
    }
}

/// Files produced by [`run_config`].
#[derive(Clone, Debug, PartialEq)]
pub struct RunArtifacts {
    pub series_csv: PathBuf,
    pub metadata: PathBuf,
    pub snapshots: Vec<PathBuf>,
    pub final_snapshot: PathBuf,
}

#[derive(Serialize)]
struct RunMetadata<'a> {
    run_id: &'a str,
    mode: String,
    nx: usize,
    ny: usize,
    lx: f64,
    ly: f64,
    a: f64,
    gamma: f64,
    mu: f64,
    lambda: f64,
    eps: f64,
    delta: f64,
    big_gamma: f64,
    cfl: f64,
    t_final: f64,
    transport: String,
    elastic_energy: &'static str,
    envelope_min: f64,
    envelope_max: f64,
    steps: usize,
    status: String,
}

fn ensure_dir(dir: &Path) -> Result<(), RunError> {
    std::fs::create_dir_all(dir).map_err(|source| RunError::Io {
        path: dir.to_path_buf(),
        source,
    })
}

/// Builds the solver and initial state of a configuration.
pub fn prepare(config: &Config) -> Result<(Solver, State, RatioEnvelope), RunError> {
    let p = &config.params;
    let grid = Grid::new(p.lx, p.ly, p.nx, p.ny)?;
    let (state, envelope) = init_state(&grid, &config.initial)?;
    Ok((Solver::new(grid, p.clone()), state, envelope))
}

/// Integrates a configuration, writing the diagnostics CSV, run metadata,
/// periodic snapshots and a final snapshot into the output directory.
/// On a solver failure the partial series and the last good state are still
/// written before the error is returned.
pub fn run_config(config: &Config) -> Result<(RunOutput, RunArtifacts), RunError> {
    let dir = output_dir(config);
    ensure_dir(&dir)?;
    let (solver, state, envelope) = prepare(config)?;
    let id = &config.run_id;
    let control = RunControl {
        record_interval: config.output.record_interval,
        ..Default::default()
    };
    let mut snapshots = Vec::new();
    let mut snapshot_error = None;
    let every = config.output.snapshot_interval;
    let result = simulate(&solver, state, &control, |step, s| {
        if step % every == 0 && snapshot_error.is_none() {
            let path = dir.join(format!("{id}_{step:08}.mhd2"));
            match write_snapshot(s, &path) {
                Ok(()) => snapshots.push(path),
                Err(e) => snapshot_error = Some(e),
            }
        }
    });
    let series_csv = dir.join(format!("{id}_series.csv"));
    let metadata = dir.join(format!("{id}_meta.toml"));
    let (output, status, last) = match &result {
        Ok(out) => (out, "completed".to_string(), dir.join(format!("{id}_final.mhd2"))),
        Err(f) => (
            &*f.partial,
            format!("failed: {}", f.error),
            dir.join(format!("{id}_failure.mhd2")),
        ),
    };
    write_timeseries_csv(&output.series, &series_csv)?;
    write_snapshot(&output.final_state, &last)?;
    write_metadata(config, envelope, output.steps(), &status, &metadata)?;
    if let Some(e) = snapshot_error {
        return Err(e.into());
    }
    let run = result.map_err(|f| RunError::Solver(Box::new(f)))?;
    Ok((
        run,
        RunArtifacts {
            series_csv,
            metadata,
            snapshots,
            final_snapshot: last,
        },
    ))
}

fn write_metadata(
    config: &Config,
    env: RatioEnvelope,
    steps: usize,
    status: &str,
    path: &Path,
) -> Result<(), RunError> {
    let p = &config.params;
    let meta = RunMetadata {
        run_id: &config.run_id,
        mode: format!("{:?}", config.mode).to_lowercase(),
        nx: p.nx,
        ny: p.ny,
        lx: p.lx,
        ly: p.ly,
        a: p.a,
        gamma: p.gamma,
        mu: p.mu,
        lambda: p.lambda,
        eps: p.eps,
        delta: p.delta,
        big_gamma: p.big_gamma,
        cfl: p.cfl,
        t_final: p.t_final,
        transport: format!("{:?}", p.transport).to_lowercase(),
        elastic_energy: if p.is_isothermal() {
            "a*rho*log(rho)"
        } else {
            "a*rho^gamma/(gamma-1)"
        },
        envelope_min: env.c_star,
        envelope_max: env.c_upper,
        steps,
        status: status.to_string(),
    };
    let text = toml::to_string(&meta).map_err(|e| RunError::Metadata(e.to_string()))?;
    std::fs::write(path, text).map_err(|source| RunError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Outcome of one invariant check.
#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Mass drift allowance per thousand steps, relative to the initial mass.
pub const MASS_TOL_PER_1000: f64 = 1e-12;
/// Allowed overshoot of the ratio envelope.
pub const RATIO_TOL: f64 = 1e-10;
/// Per-step slack of the convex functional, relative to its initial value.
pub const F_TOL: f64 = 1e-8;
/// Allowed cumulative energy growth, relative to the initial energy.
pub const ENERGY_TOL: f64 = 1e-3;

/// Checks the conservation, positivity, envelope, convex-functional and
/// energy invariants on a run (or the partial output of a failed run).
pub fn invariant_checks(result: &Result<RunOutput, RunFailure>, envelope: RatioEnvelope, eps: f64) -> Vec<Check> {
    let (output, failure) = match result {
        Ok(o) => (o, None),
        Err(f) => (&*f.partial, Some(&f.error)),
    };
    let series: &[DiagnosticsRecord] = &output.series;
    let mut checks = Vec::new();
    checks.push(Check {
        name: "positivity",
        passed: failure.is_none() && series.iter().all(|r| r.mass_rho > 0.0),
        detail: match failure {
            Some(e) => e.to_string(),
            None => format!(
                "min rho {:.3e}, min b {:.3e}",
                output.final_state.min_rho(),
                output.final_state.min_b()
            ),
        },
    });
    checks.push(Check {
        name: "finite diagnostics",
        passed: series.iter().all(DiagnosticsRecord::is_finite),
        detail: format!("{} records", series.len()),
    });
    let steps = output.steps();
    let allowed = MASS_TOL_PER_1000 * (steps as f64 / 1000.0).ceil().max(1.0);
    let drift = |f: fn(&DiagnosticsRecord) -> f64| {
        let m0 = f(&series[0]);
        series.iter().map(|r| ((f(r) - m0) / m0).abs()).fold(0.0, f64::max)
    };
    let (dr, db) = (drift(|r| r.mass_rho), drift(|r| r.mass_b));
    checks.push(Check {
        name: "mass conservation",
        passed: dr <= allowed && db <= allowed,
        detail: format!("relative drift rho {dr:.3e}, b {db:.3e}, allowed {allowed:.1e}"),
    });
    let lo = series.iter().map(|r| r.ratio_min).fold(f64::INFINITY, f64::min);
    let hi = series.iter().map(|r| r.ratio_max).fold(f64::NEG_INFINITY, f64::max);
    checks.push(Check {
        name: "ratio envelope",
        passed: envelope.contains(lo, hi, RATIO_TOL),
        detail: format!(
            "b/rho in [{lo:.12}, {hi:.12}], envelope [{:.12}, {:.12}]",
            envelope.c_star, envelope.c_upper
        ),
    });
    let f0 = series[0].f_convex;
    let worst_f = series
        .windows(2)
        .map(|w| w[1].f_convex - w[0].f_convex)
        .fold(f64::NEG_INFINITY, f64::max);
    checks.push(Check {
        name: "convex functional",
        passed: eps == 0.0 || series.len() < 2 || worst_f <= F_TOL * f0,
        detail: if eps == 0.0 {
            "not applicable at eps = 0".into()
        } else {
            format!("largest increase {:.3e} of F(0) = {f0:.6}", worst_f.max(0.0))
        },
    });
    let e0 = series[0].energy;
    let growth: f64 = series.windows(2).map(|w| (w[1].energy - w[0].energy).max(0.0)).sum();
    checks.push(Check {
        name: "energy",
        passed: growth <= ENERGY_TOL * e0.abs().max(1.0),
        detail: format!("cumulative growth {growth:.3e}, E(0) = {e0:.6}"),
    });
    checks
}

/// Runs a configuration with per-step records (no files written) and
/// evaluates [`invariant_checks`].
pub fn verify_config(config: &Config) -> Result<Vec<Check>, RunError> {
    let (solver, state, envelope) = prepare(config)?;
    let control = RunControl {
        record_interval: 1,
        ..Default::default()
    };
    let result = simulate(&solver, state, &control, |_, _| {});
    Ok(invariant_checks(&result, envelope, config.params.eps))
}
