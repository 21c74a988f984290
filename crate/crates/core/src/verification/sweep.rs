//! Parameter sweeps toward the vanishing-viscosity and vanishing-pressure
//! limits. Members start from identical data and share frame times, so
//! Cauchy distances and composition defects against the finest member are
//! well defined.

use crate::diagnostics::{
    composition_defect, delta_pressure_l1, dissipation_rate, evf_pairing, log_entropy, ratio_bounds, total_energy,
    weighted_divergence, EvfWeight, Fraction, TestFunction,
};
use crate::grid::Grid;
use crate::init::{init_state, InitialDataSpec, RatioEnvelope};
use crate::ops::gradient_cc_to_face;
use crate::params::{validate_params, SimulationParams};
use crate::solver::{simulate, FrameSchedule, RunControl, Solver};
use crate::state::{State, Trajectory};
use rayon::prelude::*;
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepKind {
    Epsilon,
    Delta,
}

impl SweepKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Epsilon => "eps",
            Self::Delta => "delta",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepOptions {
    /// Frames are stored at multiples of this time.
    pub frame_dt: f64,
    /// Exponent of the composition defect.
    pub defect_exponent: f64,
    /// Cut-off level of the weighted pairing.
    pub cutoff_k: f64,
    pub ratio_tol: f64,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            frame_dt: 0.025,
            defect_exponent: 2.0,
            cutoff_k: 1.0,
            ratio_tol: 1e-10,
        }
    }
}

/// `1e-2 * 2^-k`, `k = 0..=4`.
pub fn default_eps_list() -> Vec<f64> {
    (0..5).map(|k| 1e-2 * 0.5f64.powi(k)).collect()
}

/// `1e-1 * 4^-k`, `k = 0..=4`.
pub fn default_delta_list() -> Vec<f64> {
    (0..5).map(|k| 1e-1 * 0.25f64.powi(k)).collect()
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SweepError {
    #[error("sweep values must be non-empty and strictly decreasing, got {0:?}")]
    NotDecreasing(Vec<f64>),
    #[error("invalid sweep base configuration: {0}")]
    Setup(String),
}

/// Per-member scalars accumulated over a run.
#[derive(Clone, Debug, PartialEq)]
pub struct MemberSummary {
    pub value: f64,
    pub steps: usize,
    /// `sqrt(int_0^T eps^2 |grad rho|^2)`.
    pub eps_grad_rho: f64,
    /// `int_0^T int delta (rho + b)^Gamma`.
    pub delta_pressure_int: f64,
    pub energy_sup: f64,
    pub dissipation_int: f64,
    /// `int_0^T int (rho + b) div u`.
    pub weighted_div_int: f64,
    pub ratio_min: f64,
    pub ratio_max: f64,
    pub ratio_ok: bool,
    pub evf_sum: Option<f64>,
    pub evf_cutoff: Option<f64>,
    pub terminal_entropy: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MemberRow {
    pub value: f64,
    pub outcome: Result<MemberSummary, String>,
}

/// Comparison of one member against the finest successful member.
#[derive(Clone, Debug, PartialEq)]
pub struct CauchyRow {
    pub value: f64,
    pub distance: f64,
    pub defect_rho: f64,
    pub defect_b: f64,
    /// Left side minus right side of the entropy comparison; expected <= 0.
    pub entropy_defect: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepReport {
    pub kind: SweepKind,
    pub values: Vec<f64>,
    pub envelope: (f64, f64),
    pub members: Vec<MemberRow>,
    pub cauchy: Vec<CauchyRow>,
    /// `log(d_k / d_{k+1}) / log(v_k / v_{k+1})` for consecutive Cauchy rows.
    pub distance_orders: Vec<f64>,
}

struct MemberRun {
    summary: MemberSummary,
    trajectory: Trajectory,
}

fn l2_distance(grid: &Grid, a: &State, b: &State) -> f64 {
    let sq = |x: f64, y: f64| (x - y) * (x - y);
    let mut s: f64 = a.rho.iter().zip(b.rho.iter()).map(|(x, y)| sq(*x, *y)).sum();
    s += a.b.iter().zip(b.b.iter()).map(|(x, y)| sq(*x, *y)).sum::<f64>();
    s +=
        a.u.to_vec()
            .iter()
            .zip(b.u.to_vec())
            .map(|(x, y)| sq(*x, y))
            .sum::<f64>();
    (s * grid.cell_area()).sqrt()
}

fn run_member(
    params: SimulationParams,
    grid: &Grid,
    initial: &State,
    envelope: RatioEnvelope,
    opts: &SweepOptions,
    value: f64,
) -> Result<MemberRun, String> {
    let params = validate_params(params).map_err(|e| e.to_string())?;
    let solver = Solver::new(grid.clone(), params.clone());
    let control = RunControl {
        record_interval: usize::MAX,
        frames: FrameSchedule::EveryTime(opts.frame_dt),
        ..Default::default()
    };
    let area = grid.cell_area();
    let mut acc = Accumulator::default();
    let eps = params.eps;
    let observe = |_: usize, s: &State| {
        let g = gradient_cc_to_face(grid, &s.rho);
        let grad_sq = (g.ux.iter().map(|v| v * v).sum::<f64>() + g.uy.iter().map(|v| v * v).sum::<f64>()) * area;
        let (lo, hi) = ratio_bounds(s);
        acc.push(
            s.t,
            [
                eps * eps * grad_sq,
                delta_pressure_l1(grid, s, &params),
                dissipation_rate(grid, s, &params),
                weighted_divergence(grid, s),
            ],
            total_energy(grid, s, &params),
            (lo, hi),
        );
    };
    let run = simulate(&solver, initial.clone(), &control, observe).map_err(|f| f.to_string())?;
    let test = TestFunction::centered(grid, params.t_final);
    let evf_sum = evf_pairing(&run.trajectory, &test, &params, EvfWeight::Sum).ok();
    let evf_cutoff = evf_pairing(&run.trajectory, &test, &params, EvfWeight::Cutoff(opts.cutoff_k)).ok();
    let [eg, dp, diss, wdiv] = acc.integrals;
    let summary = MemberSummary {
        value,
        steps: run.steps(),
        eps_grad_rho: eg.sqrt(),
        delta_pressure_int: dp,
        energy_sup: acc.energy_sup,
        dissipation_int: diss,
        weighted_div_int: wdiv,
        ratio_min: acc.ratio.0,
        ratio_max: acc.ratio.1,
        ratio_ok: envelope.contains(acc.ratio.0, acc.ratio.1, opts.ratio_tol),
        evf_sum,
        evf_cutoff,
        terminal_entropy: log_entropy(grid, &run.final_state),
    };
    Ok(MemberRun {
        summary,
        trajectory: run.trajectory,
    })
}

/// Trapezoid accumulation over every accepted step.
struct Accumulator {
    last: Option<(f64, [f64; 4])>,
    integrals: [f64; 4],
    energy_sup: f64,
    ratio: (f64, f64),
}

impl Default for Accumulator {
    fn default() -> Self {
        Self {
            last: None,
            integrals: [0.0; 4],
            energy_sup: f64::NEG_INFINITY,
            ratio: (f64::INFINITY, f64::NEG_INFINITY),
        }
    }
}

impl Accumulator {
    fn push(&mut self, t: f64, values: [f64; 4], energy: f64, ratio: (f64, f64)) {
        if let Some((t0, v0)) = self.last {
            for k in 0..4 {
                self.integrals[k] += 0.5 * (t - t0) * (v0[k] + values[k]);
            }
        }
        self.last = Some((t, values));
        self.energy_sup = self.energy_sup.max(energy);
        self.ratio = (self.ratio.0.min(ratio.0), self.ratio.1.max(ratio.1));
    }
}

fn check_decreasing(values: &[f64]) -> Result<(), SweepError> {
    if values.is_empty() || values.windows(2).any(|w| !(w[0] > w[1])) {
        return Err(SweepError::NotDecreasing(values.to_vec()));
    }
    Ok(())
}

fn sweep(
    kind: SweepKind,
    base: &SimulationParams,
    initial: &InitialDataSpec,
    values: &[f64],
    opts: &SweepOptions,
) -> Result<SweepReport, SweepError> {
    check_decreasing(values)?;
    let grid = Grid::new(base.lx, base.ly, base.nx, base.ny).map_err(|e| SweepError::Setup(e.to_string()))?;
    let (state0, envelope) = init_state(&grid, initial).map_err(|e| SweepError::Setup(e.to_string()))?;

    let runs: Vec<Result<MemberRun, String>> = values
        .par_iter()
        .map(|&v| {
            let mut p = base.clone();
            match kind {
                SweepKind::Epsilon => p.eps = v,
                SweepKind::Delta => p.delta = v,
            }
            run_member(p, &grid, &state0, envelope, opts, v)
        })
        .collect();

    let finest = runs.iter().rposition(|r| r.is_ok());
    let mut cauchy = Vec::new();
    if let Some(fi) = finest {
        let reference = runs[fi].as_ref().unwrap();
        for (k, r) in runs.iter().enumerate().take(fi) {
            let Ok(m) = r else { continue };
            let (Some(a), Some(b)) = (m.trajectory.last(), reference.trajectory.last()) else {
                continue;
            };
            let p = opts.defect_exponent;
            let defect_rho = composition_defect(&m.trajectory, &reference.trajectory, p, Fraction::Rho);
            let defect_b = composition_defect(&m.trajectory, &reference.trajectory, p, Fraction::B);
            let lhs = m.summary.terminal_entropy - reference.summary.terminal_entropy;
            let rhs = reference.summary.weighted_div_int - m.summary.weighted_div_int;
            cauchy.push(CauchyRow {
                value: values[k],
                distance: l2_distance(&grid, a, b),
                defect_rho: defect_rho.unwrap_or(f64::NAN),
                defect_b: defect_b.unwrap_or(f64::NAN),
                entropy_defect: lhs - rhs,
            });
        }
    }
    let distance_orders = cauchy
        .windows(2)
        .map(|w| (w[0].distance / w[1].distance).ln() / (w[0].value / w[1].value).ln())
        .collect();
    let members = runs
        .into_iter()
        .zip(values)
        .map(|(r, &value)| MemberRow {
            value,
            outcome: r.map(|m| m.summary),
        })
        .collect();
    Ok(SweepReport {
        kind,
        values: values.to_vec(),
        envelope: (envelope.c_star, envelope.c_upper),
        members,
        cauchy,
        distance_orders,
    })
}

/// Runs every `eps` in `eps_list` (strictly decreasing) at the base `delta`.
pub fn epsilon_sweep(
    base: &SimulationParams,
    initial: &InitialDataSpec,
    eps_list: &[f64],
    opts: &SweepOptions,
) -> Result<SweepReport, SweepError> {
    sweep(SweepKind::Epsilon, base, initial, eps_list, opts)
}

/// Runs every `delta` in `delta_list` (strictly decreasing) at the base `eps`.
pub fn delta_sweep(
    base: &SimulationParams,
    initial: &InitialDataSpec,
    delta_list: &[f64],
    opts: &SweepOptions,
) -> Result<SweepReport, SweepError> {
    sweep(SweepKind::Delta, base, initial, delta_list, opts)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "nan".into(), |x| format!("{x:.16e}"))
}

impl SweepReport {
    pub fn successful(&self) -> impl Iterator<Item = &MemberSummary> {
        self.members.iter().filter_map(|m| m.outcome.as_ref().ok())
    }

    /// Member table as CSV text.
    pub fn members_csv(&self) -> String {
        let mut s = String::from(
            "value,status,steps,eps_grad_rho,delta_pressure_int,energy_sup,dissipation_int,weighted_div_int,ratio_min,ratio_max,ratio_ok,evf_sum,evf_cutoff\n",
        );
        for m in &self.members {
            match &m.outcome {
                Ok(r) => {
                    let _ = writeln!(
                        s,
                        "{:.16e},ok,{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{},{},{}",
                        r.value,
                        r.steps,
                        r.eps_grad_rho,
                        r.delta_pressure_int,
                        r.energy_sup,
                        r.dissipation_int,
                        r.weighted_div_int,
                        r.ratio_min,
                        r.ratio_max,
                        r.ratio_ok,
                        fmt_opt(r.evf_sum),
                        fmt_opt(r.evf_cutoff)
                    );
                }
                Err(e) => {
                    let _ = writeln!(s, "{:.16e},\"failed: {}\",,,,,,,,,,,", m.value, e.replace('"', "'"));
                }
            }
        }
        s
    }

    /// Cauchy table as CSV text.
    pub fn cauchy_csv(&self) -> String {
        let mut s = String::from("value,distance_to_finest,defect_rho,defect_b,entropy_defect\n");
        for c in &self.cauchy {
            let _ = writeln!(
                s,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                c.value, c.distance, c.defect_rho, c.defect_b, c.entropy_defect
            );
        }
        s
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let name = self.kind.name();
        let _ = writeln!(s, "{name} sweep over {} members", self.values.len());
        let _ = writeln!(
            s,
            "initial ratio envelope [{:.6}, {:.6}]",
            self.envelope.0, self.envelope.1
        );
        for m in &self.members {
            match &m.outcome {
                Ok(r) => {
                    let _ = writeln!(
                        s,
                        "  {name} = {:.4e}: steps {}, eps|grad rho| {:.4e}, delta-pressure {:.4e}, energy sup {:.6}, dissipation {:.6}, ratio [{:.6}, {:.6}] {}",
                        r.value,
                        r.steps,
                        r.eps_grad_rho,
                        r.delta_pressure_int,
                        r.energy_sup,
                        r.dissipation_int,
                        r.ratio_min,
                        r.ratio_max,
                        if r.ratio_ok { "inside" } else { "OUTSIDE" }
                    );
                }
                Err(e) => {
                    let _ = writeln!(s, "  {name} = {:.4e}: FAILED ({e})", m.value);
                }
            }
        }
        for c in &self.cauchy {
            let _ = writeln!(
                s,
                "  vs finest, {name} = {:.4e}: distance {:.4e}, defect {:.4e}, entropy defect {:.4e}",
                c.value, c.distance, c.defect_rho, c.entropy_defect
            );
        }
        if !self.distance_orders.is_empty() {
            let orders: Vec<String> = self.distance_orders.iter().map(|o| format!("{o:.3}")).collect();
            let _ = writeln!(s, "  observed distance orders: {}", orders.join(", "));
        }
        s
    }

    /// Largest relative spread `(max - min) / max` of a member column.
    pub fn spread(&self, column: impl Fn(&MemberSummary) -> f64) -> f64 {
        let vals: Vec<f64> = self.successful().map(column).collect();
        let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
        if vals.is_empty() || max == 0.0 {
            0.0
        } else {
            (max - min) / max.abs()
        }
    }
}
