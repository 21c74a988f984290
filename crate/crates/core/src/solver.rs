//! Time integration of the regularized system.
//!
//! One step is a Lie splitting: explicit transport of `rho` and `b`, implicit
//! Neumann diffusion of both, then the momentum update with explicit
//! advection, pressure and `eps grad rho . grad u` terms and an implicit
//! viscous solve. `rho` and `b` pass through the same linear operators inside
//! a step, which is what keeps `b / rho` inside its initial envelope.

use crate::diagnostics::{ratio_bounds, total_energy, DiagnosticsRecord};
use crate::field::{CellField, FaceField};
use crate::grid::Grid;
use crate::linalg::{conjugate_gradient, CgStats, LinearSolveDivergence};
use crate::ops::{density_on_faces, eps_gradrho_gradu, gradient_cc_to_face, momentum_advection, scalar_flux_div};
use crate::params::SimulationParams;
use crate::state::{State, Trajectory};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error, Clone)]
pub enum SolverError {
    #[error("{field} is not strictly positive at cell ({i}, {j}): {value}")]
    NonpositiveField {
        field: &'static str,
        i: usize,
        j: usize,
        value: f64,
    },
    #[error("degenerate state: minimum density {0} is not positive")]
    DegenerateState(f64),
    #[error("positivity lost in {field} at cell ({i}, {j}) during the step from t = {t}: value {value}")]
    PositivityLoss {
        field: &'static str,
        i: usize,
        j: usize,
        value: f64,
        t: f64,
        /// Last state that satisfied every invariant.
        dump: Box<State>,
    },
    #[error("linear solve failed: {0}")]
    LinearSolveDivergence(#[from] LinearSolveDivergence),
    #[error("time step collapsed to {dt:e} at t = {t}")]
    TimeStepCollapse { dt: f64, t: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepReport {
    pub dt_used: f64,
    pub stable_dt: f64,
    /// Overshoot of `b / rho` beyond the pre-step range; zero for monotone steps.
    pub max_ratio_drift: f64,
    pub energy_before: f64,
    pub energy_after: f64,
    pub linear_solver_iters: usize,
}

/// Total pressure `a rho^gamma + b^2 / 2 + delta (rho + b)^Gamma` at one point.
#[inline]
pub fn pressure_at(rho: f64, b: f64, p: &SimulationParams) -> f64 {
    let mut out = p.a * rho.powf(p.gamma) + 0.5 * b * b;
    if p.delta != 0.0 {
        out += p.delta * (rho + b).powf(p.big_gamma);
    }
    out
}

fn first_nonpositive(q: &CellField) -> Option<((usize, usize), f64)> {
    q.indexed_iter().find(|(_, v)| !(**v > 0.0)).map(|(ix, v)| (ix, *v))
}

/// Total pressure per cell. Requires `rho, b > 0`.
pub fn pressure_total(rho: &CellField, b: &CellField, params: &SimulationParams) -> Result<CellField, SolverError> {
    for (field, q) in [("rho", rho), ("b", b)] {
        if let Some(((i, j), value)) = first_nonpositive(q) {
            return Err(SolverError::NonpositiveField { field, i, j, value });
        }
    }
    Ok(pressure_unchecked(rho, b, params))
}

/// Total pressure for diagnostics; admits `b = 0`.
pub fn pressure_total_diagnostic(rho: &CellField, b: &CellField, params: &SimulationParams) -> CellField {
    pressure_unchecked(rho, b, params)
}

fn pressure_unchecked(rho: &CellField, b: &CellField, params: &SimulationParams) -> CellField {
    ndarray::Zip::from(rho)
        .and(b)
        .map_collect(|&r, &bb| pressure_at(r, bb, params))
}

/// Squared fast magnetosonic speed along a fixed ratio `b / rho`:
/// `a gamma rho^(gamma-1) + b^2 / rho + delta Gamma (rho + b)^Gamma / rho`.
#[inline]
pub fn sound_speed_sq(rho: f64, b: f64, p: &SimulationParams) -> f64 {
    let mut c2 = p.a * p.gamma * rho.powf(p.gamma - 1.0) + b * b / rho;
    if p.delta != 0.0 {
        c2 += p.delta * p.big_gamma * (rho + b).powf(p.big_gamma) / rho;
    }
    c2
}

/// Largest stable step, `cfl` times the tightest of
/// - advective: `1 / (2 max|ux| / hx + 2 max|uy| / hy)`, with the drift
///   velocity `eps grad rho / rho` added to `u`,
/// - acoustic: `min(hx, hy) / c_max`,
/// - explicit pressure against implicit viscosity: `(lambda + 2 mu) / (rho c^2)`,
///
/// capped by `dt_max`.
pub fn stable_dt(grid: &Grid, state: &State, params: &SimulationParams) -> Result<f64, SolverError> {
    let rho_min = state.min_rho();
    if !(rho_min > 0.0) {
        return Err(SolverError::DegenerateState(rho_min));
    }
    let (mut mx, mut my) = state.u.max_abs();
    if params.eps > 0.0 {
        let g = gradient_cc_to_face(grid, &state.rho);
        let rf = density_on_faces(grid, &state.rho);
        let dx =
            g.ux.iter()
                .zip(rf.ux.iter())
                .fold(0.0f64, |m, (d, r)| m.max((d / r).abs()));
        let dy =
            g.uy.iter()
                .zip(rf.uy.iter())
                .fold(0.0f64, |m, (d, r)| m.max((d / r).abs()));
        mx += params.eps * dx;
        my += params.eps * dy;
    }
    let adv_rate = 2.0 * (mx / grid.hx + my / grid.hy);

    let mut c2_max = 0.0f64;
    let mut rho_c2_max = 0.0f64;
    for (&r, &b) in state.rho.iter().zip(state.b.iter()) {
        let c2 = sound_speed_sq(r, b, params);
        c2_max = c2_max.max(c2);
        rho_c2_max = rho_c2_max.max(r * c2);
    }
    let mut dt = f64::INFINITY;
    if adv_rate > 0.0 {
        dt = dt.min(1.0 / adv_rate);
    }
    if c2_max > 0.0 {
        dt = dt.min(grid.hx.min(grid.hy) / c2_max.sqrt());
        dt = dt.min(params.longitudinal_viscosity() / rho_c2_max);
    }
    let mut dt = params.cfl * dt;
    if let Some(cap) = params.dt_max {
        dt = dt.min(cap);
    }
    Ok(dt)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Boundary {
    Neumann,
    Dirichlet,
}

/// Iteration cap for every conjugate-gradient solve on this grid.
pub fn iteration_cap(grid: &Grid) -> usize {
    10 * (grid.nx + grid.ny)
}

/// Solves `(I - coef dt lap_h) q' = q` by conjugate gradients, starting from
/// `q`. With Neumann closure the cell sum of `q` is preserved.
pub fn implicit_diffusion_solve(
    grid: &Grid,
    q: &CellField,
    coef: f64,
    dt: f64,
    bc: Boundary,
) -> Result<(CellField, CgStats), SolverError> {
    let c = coef * dt;
    if c == 0.0 {
        return Ok((
            q.clone(),
            CgStats {
                iterations: 0,
                residual: 0.0,
            },
        ));
    }
    let (nx, ny) = (grid.nx, grid.ny);
    let (cx, cy) = (c / (grid.hx * grid.hx), c / (grid.hy * grid.hy));
    let dirichlet = bc == Boundary::Dirichlet;
    let apply = |v: &[f64], out: &mut [f64]| {
        for i in 0..nx {
            for j in 0..ny {
                let k = i * ny + j;
                let vc = v[k];
                let ghost = if dirichlet { -vc } else { vc };
                let l = if i > 0 { v[k - ny] } else { ghost };
                let r = if i + 1 < nx { v[k + ny] } else { ghost };
                let d = if j > 0 { v[k - 1] } else { ghost };
                let t = if j + 1 < ny { v[k + 1] } else { ghost };
                out[k] = vc - cx * (l + r - 2.0 * vc) - cy * (d + t - 2.0 * vc);
            }
        }
    };
    let rhs: Vec<f64> = q.iter().copied().collect();
    let mut x = rhs.clone();
    let stats = conjugate_gradient(apply, &rhs, &mut x, iteration_cap(grid))?;
    let out = CellField::from_shape_vec(grid.cell_shape(), x).expect("cell shape");
    Ok((out, stats))
}

/// Applies `rho_face v - dt (mu lap v + (mu + lambda) grad div v)` on interior
/// faces and the identity on boundary-normal faces; vectors are `[ux, uy]`
/// flattened row-major.
struct ViscousOperator<'a> {
    nx: usize,
    ny: usize,
    hx: f64,
    hy: f64,
    mu_dt: f64,
    bulk_dt: f64,
    rho_faces: &'a [f64],
}

impl ViscousOperator<'_> {
    fn apply(&self, v: &[f64], out: &mut [f64]) {
        let (nx, ny) = (self.nx, self.ny);
        let off = (nx + 1) * ny;
        let ux = |i: usize, j: usize| if i == 0 || i == nx { 0.0 } else { v[i * ny + j] };
        let uy = |i: usize, j: usize| {
            if j == 0 || j == ny {
                0.0
            } else {
                v[off + i * (ny + 1) + j]
            }
        };
        let (ix, iy) = (1.0 / self.hx, 1.0 / self.hy);
        let (ix2, iy2) = (ix * ix, iy * iy);
        let div = |i: usize, j: usize| (ux(i + 1, j) - ux(i, j)) * ix + (uy(i, j + 1) - uy(i, j)) * iy;

        for i in 0..=nx {
            for j in 0..ny {
                let k = i * ny + j;
                if i == 0 || i == nx {
                    out[k] = v[k];
                    continue;
                }
                let c = ux(i, j);
                let below = if j > 0 { ux(i, j - 1) } else { -c };
                let above = if j + 1 < ny { ux(i, j + 1) } else { -c };
                let lap = (ux(i + 1, j) - 2.0 * c + ux(i - 1, j)) * ix2 + (above - 2.0 * c + below) * iy2;
                let gd = (div(i, j) - div(i - 1, j)) * ix;
                out[k] = self.rho_faces[k] * c - self.mu_dt * lap - self.bulk_dt * gd;
            }
        }
        for i in 0..nx {
            for j in 0..=ny {
                let k = off + i * (ny + 1) + j;
                if j == 0 || j == ny {
                    out[k] = v[k];
                    continue;
                }
                let c = uy(i, j);
                let left = if i > 0 { uy(i - 1, j) } else { -c };
                let right = if i + 1 < nx { uy(i + 1, j) } else { -c };
                let lap = (right - 2.0 * c + left) * ix2 + (uy(i, j + 1) - 2.0 * c + uy(i, j - 1)) * iy2;
                let gd = (div(i, j) - div(i, j - 1)) * iy;
                out[k] = self.rho_faces[k] * c - self.mu_dt * lap - self.bulk_dt * gd;
            }
        }
    }
}

/// Solves `(rho_face - dt (mu lap + (mu + lambda) grad div)) u = m` for a
/// no-slip velocity, starting from `guess`.
pub fn implicit_viscous_solve(
    grid: &Grid,
    params: &SimulationParams,
    rho_faces: &FaceField,
    m: &FaceField,
    guess: &FaceField,
    dt: f64,
) -> Result<(FaceField, CgStats), SolverError> {
    let rf = rho_faces.to_vec();
    let op = ViscousOperator {
        nx: grid.nx,
        ny: grid.ny,
        hx: grid.hx,
        hy: grid.hy,
        mu_dt: params.mu * dt,
        bulk_dt: (params.mu + params.lambda) * dt,
        rho_faces: &rf,
    };
    let mut rhs_field = m.clone();
    rhs_field.clear_boundary_normal();
    let rhs = rhs_field.to_vec();
    let mut g = guess.clone();
    g.clear_boundary_normal();
    let mut x = g.to_vec();
    let stats = conjugate_gradient(|v, out| op.apply(v, out), &rhs, &mut x, iteration_cap(grid))?;
    let mut u = m.from_slice(&x);
    u.clear_boundary_normal();
    Ok((u, stats))
}

/// Source terms added to the right-hand sides, e.g. for manufactured solutions.
pub trait Forcing: Send + Sync {
    /// Sources at time `t`: mass and magnetic at cell centers, momentum on faces.
    fn sources(&self, grid: &Grid, params: &SimulationParams, t: f64) -> (CellField, CellField, FaceField);
}

#[derive(Clone)]
pub struct Solver {
    pub grid: Grid,
    pub params: SimulationParams,
    /// Keeps `u` fixed at its current value; used for scalar-only experiments.
    pub freeze_velocity: bool,
    pub forcing: Option<Arc<dyn Forcing>>,
}

fn check_positive(q: &CellField, field: &'static str, state: &State) -> Result<(), SolverError> {
    match first_nonpositive(q) {
        Some(((i, j), value)) => Err(SolverError::PositivityLoss {
            field,
            i,
            j,
            value,
            t: state.t,
            dump: Box::new(state.clone()),
        }),
        None => Ok(()),
    }
}

impl Solver {
    pub fn new(grid: Grid, params: SimulationParams) -> Self {
        Self {
            grid,
            params,
            freeze_velocity: false,
            forcing: None,
        }
    }

    pub fn with_frozen_velocity(mut self) -> Self {
        self.freeze_velocity = true;
        self
    }

    pub fn with_forcing(mut self, forcing: Arc<dyn Forcing>) -> Self {
        self.forcing = Some(forcing);
        self
    }

    pub fn stable_dt(&self, state: &State) -> Result<f64, SolverError> {
        stable_dt(&self.grid, state, &self.params)
    }

    /// Advances by `stable_dt`.
    pub fn step(&self, state: &State) -> Result<(State, StepReport), SolverError> {
        let dt = self.stable_dt(state)?;
        self.step_with_dt(state, dt)
    }

    /// Advances by the given `dt`; callers are responsible for stability.
    pub fn step_with_dt(&self, state: &State, dt: f64) -> Result<(State, StepReport), SolverError> {
        let grid = &self.grid;
        let p = &self.params;
        let stable = self.stable_dt(state)?;
        let pressure = pressure_total(&state.rho, &state.b, p)?;
        let energy_before = total_energy(grid, state, p);
        let (lo_before, hi_before) = ratio_bounds(state);

        let sources = self.forcing.as_ref().map(|f| f.sources(grid, p, state.t));

        // (1) explicit transport
        let mut rho = &state.rho - &(scalar_flux_div(grid, &state.rho, &state.u, p.transport) * dt);
        let mut b = &state.b - &(scalar_flux_div(grid, &state.b, &state.u, p.transport) * dt);
        if let Some((s_rho, s_b, _)) = &sources {
            rho.scaled_add(dt, s_rho);
            b.scaled_add(dt, s_b);
        }
        check_positive(&rho, "rho", state)?;
        check_positive(&b, "b", state)?;

        // (2) implicit diffusion
        let mut iters = 0;
        if p.eps > 0.0 {
            let (r2, s1) = implicit_diffusion_solve(grid, &rho, p.eps, dt, Boundary::Neumann)?;
            let (b2, s2) = implicit_diffusion_solve(grid, &b, p.eps, dt, Boundary::Neumann)?;
            rho = r2;
            b = b2;
            iters += s1.iterations + s2.iterations;
            check_positive(&rho, "rho", state)?;
            check_positive(&b, "b", state)?;
        }

        // (3) momentum
        let u = if self.freeze_velocity {
            state.u.clone()
        } else {
            let rf_old = density_on_faces(grid, &state.rho);
            let mut m = FaceField {
                ux: &rf_old.ux * &state.u.ux,
                uy: &rf_old.uy * &state.u.uy,
            };
            let adv = momentum_advection(grid, &state.rho, &state.u, p.transport);
            let grad_p = gradient_cc_to_face(grid, &pressure);
            let drift = eps_gradrho_gradu(grid, &state.rho, &state.u, p.eps);
            m.scaled_add(-dt, &adv);
            m.scaled_add(-dt, &grad_p);
            m.scaled_add(-dt, &drift);
            if let Some((_, _, s_m)) = &sources {
                m.scaled_add(dt, s_m);
            }
            let rf_new = density_on_faces(grid, &rho);
            let (u, stats) = implicit_viscous_solve(grid, p, &rf_new, &m, &state.u, dt)?;
            iters += stats.iterations;
            u
        };

        let next = State {
            rho,
            b,
            u,
            t: state.t + dt,
        };
        let (lo, hi) = ratio_bounds(&next);
        let report = StepReport {
            dt_used: dt,
            stable_dt: stable,
            max_ratio_drift: (lo_before - lo).max(hi - hi_before).max(0.0),
            energy_before,
            energy_after: total_energy(grid, &next, p),
            linear_solver_iters: iters,
        };
        Ok((next, report))
    }
}

/// When to keep full-state frames in memory during a run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FrameSchedule {
    Never,
    /// Every `n`-th step, plus the initial and final state.
    EverySteps(usize),
    /// At every multiple of the given time; steps are shortened to land on them.
    EveryTime(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunControl {
    /// Diagnostics are recorded every this many steps (and at the end).
    pub record_interval: usize,
    pub frames: FrameSchedule,
    /// Fixed time step instead of `stable_dt`.
    pub fixed_dt: Option<f64>,
    /// Hard cap on the number of steps.
    pub max_steps: Option<usize>,
}

impl Default for RunControl {
    fn default() -> Self {
        Self {
            record_interval: 1,
            frames: FrameSchedule::Never,
            fixed_dt: None,
            max_steps: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub final_state: State,
    pub series: Vec<DiagnosticsRecord>,
    pub trajectory: Trajectory,
    pub reports: Vec<StepReport>,
}

impl RunOutput {
    pub fn steps(&self) -> usize {
        self.reports.len()
    }
}

/// A failed run together with everything produced before the failure.
#[derive(Debug, Clone)]
pub struct RunFailure {
    pub error: SolverError,
    pub partial: Box<RunOutput>,
}

impl std::fmt::Display for RunFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} (after {} steps)", self.error, self.partial.steps())
    }
}

impl std::error::Error for RunFailure {}

const TIME_EPS: f64 = 1e-12;

/// Integrates from `initial` to `params.t_final`.
///
/// `observer` sees every accepted state (including the initial one) with its
/// step index; the run is deterministic for fixed inputs.
pub fn simulate(
    solver: &Solver,
    initial: State,
    control: &RunControl,
    mut observer: impl FnMut(usize, &State),
) -> Result<RunOutput, RunFailure> {
    let grid = &solver.grid;
    let p = &solver.params;
    let t_final = p.t_final;
    let scale = t_final.abs().max(1.0);
    let mut out = RunOutput {
        series: vec![DiagnosticsRecord::compute(grid, &initial, p)],
        trajectory: Trajectory::new(grid.clone()),
        reports: Vec::new(),
        final_state: initial.clone(),
    };
    if control.frames != FrameSchedule::Never {
        out.trajectory.frames.push(initial.clone());
    }
    observer(0, &initial);
    let mut state = initial;
    let mut step = 0usize;
    let fail = |error: SolverError, mut out: RunOutput, state: &State| {
        out.final_state = state.clone();
        RunFailure {
            error,
            partial: Box::new(out),
        }
    };

    while t_final - state.t > TIME_EPS * scale {
        if control.max_steps.is_some_and(|cap| step >= cap) {
            break;
        }
        let mut dt = match control.fixed_dt {
            Some(dt) => dt,
            None => match solver.stable_dt(&state) {
                Ok(dt) => dt,
                Err(e) => return Err(fail(e, out, &state)),
            },
        };
        let mut landing = None;
        if state.t + dt >= t_final - TIME_EPS * scale {
            dt = t_final - state.t;
            landing = Some(t_final);
        }
        let mut frame_due = false;
        if let FrameSchedule::EveryTime(every) = control.frames {
            let next_k = ((state.t + TIME_EPS * scale) / every).floor() + 1.0;
            let target = next_k * every;
            if target < t_final - TIME_EPS * scale && state.t + dt >= target - TIME_EPS * scale {
                dt = target - state.t;
                landing = Some(target);
                frame_due = true;
            }
        }
        if !(dt > 1e-14 * scale) {
            return Err(fail(SolverError::TimeStepCollapse { dt, t: state.t }, out, &state));
        }
        let (mut next, report) = match solver.step_with_dt(&state, dt) {
            Ok(r) => r,
            Err(e) => return Err(fail(e, out, &state)),
        };
        if let Some(t) = landing {
            next.t = t;
        }
        step += 1;
        out.reports.push(report);
        state = next;
        let is_final = t_final - state.t <= TIME_EPS * scale;
        if step.is_multiple_of(control.record_interval.max(1)) || is_final {
            out.series.push(DiagnosticsRecord::compute(grid, &state, p));
        }
        match control.frames {
            FrameSchedule::EverySteps(n) if step.is_multiple_of(n.max(1)) || is_final => {
                out.trajectory.frames.push(state.clone())
            }
            FrameSchedule::EveryTime(_) if frame_due || is_final => out.trajectory.frames.push(state.clone()),
            _ => {}
        }
        observer(step, &state);
    }
    out.final_state = state;
    Ok(out)
}
