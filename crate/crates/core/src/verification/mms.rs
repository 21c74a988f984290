//! Manufactured solutions and the source-augmented refinement study.

use super::richardson::{pairwise_orders, richardson_order, RichardsonError};
use crate::field::{CellField, FaceField};
use crate::grid::Grid;
use crate::params::{SimulationParams, Transport};
use crate::solver::{simulate, Forcing, RunControl, RunFailure, Solver};
use crate::state::State;
use std::f64::consts::PI;
use std::ops::{Add, Mul, Sub};
use std::sync::Arc;
use thiserror::Error;

/// Value of a function of `(t, x, y)` with its first derivatives and the
/// spatial second derivatives.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Jet {
    pub v: f64,
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
}

impl Jet {
    pub fn constant(v: f64) -> Self {
        Self {
            v,
            ..Default::default()
        }
    }

    pub fn coord_t(t: f64) -> Self {
        Self {
            v: t,
            t: 1.0,
            ..Default::default()
        }
    }

    pub fn coord_x(x: f64) -> Self {
        Self {
            v: x,
            x: 1.0,
            ..Default::default()
        }
    }

    pub fn coord_y(y: f64) -> Self {
        Self {
            v: y,
            y: 1.0,
            ..Default::default()
        }
    }

    /// `f(self)` given `f`, `f'` and `f''` at `self.v`.
    pub fn compose(self, f: f64, d1: f64, d2: f64) -> Self {
        Self {
            v: f,
            t: d1 * self.t,
            x: d1 * self.x,
            y: d1 * self.y,
            xx: d2 * self.x * self.x + d1 * self.xx,
            xy: d2 * self.x * self.y + d1 * self.xy,
            yy: d2 * self.y * self.y + d1 * self.yy,
        }
    }

    pub fn cos(self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.compose(c, -s, -c)
    }

    pub fn sin(self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.compose(s, c, -s)
    }

    pub fn exp(self) -> Self {
        let e = self.v.exp();
        self.compose(e, e, e)
    }

    pub fn powf(self, p: f64) -> Self {
        let v = self.v;
        self.compose(v.powf(p), p * v.powf(p - 1.0), p * (p - 1.0) * v.powf(p - 2.0))
    }

    pub fn lap(&self) -> f64 {
        self.xx + self.yy
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(self, o: Jet) -> Jet {
        Jet {
            v: self.v + o.v,
            t: self.t + o.t,
            x: self.x + o.x,
            y: self.y + o.y,
            xx: self.xx + o.xx,
            xy: self.xy + o.xy,
            yy: self.yy + o.yy,
        }
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, o: Jet) -> Jet {
        self + o * -1.0
    }
}

impl Mul<f64> for Jet {
    type Output = Jet;
    fn mul(self, s: f64) -> Jet {
        Jet {
            v: self.v * s,
            t: self.t * s,
            x: self.x * s,
            y: self.y * s,
            xx: self.xx * s,
            xy: self.xy * s,
            yy: self.yy * s,
        }
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, o: Jet) -> Jet {
        Jet {
            v: self.v * o.v,
            t: self.t * o.v + self.v * o.t,
            x: self.x * o.v + self.v * o.x,
            y: self.y * o.v + self.v * o.y,
            xx: self.xx * o.v + 2.0 * self.x * o.x + self.v * o.xx,
            xy: self.xy * o.v + self.x * o.y + self.y * o.x + self.v * o.xy,
            yy: self.yy * o.v + 2.0 * self.y * o.y + self.v * o.yy,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TimeFactor {
    One,
    /// `exp(-rate t)`.
    Decay(f64),
    /// `cos(omega t)`.
    Cos(f64),
}

impl TimeFactor {
    fn jet(&self, t: f64) -> Jet {
        let tj = Jet::coord_t(t);
        match *self {
            Self::One => Jet::constant(1.0),
            Self::Decay(rate) => (tj * -rate).exp(),
            Self::Cos(omega) => (tj * omega).cos(),
        }
    }
}

/// `amplitude cos(kx pi x / lx) cos(ky pi y / ly) tau(t)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CosineMode {
    pub amplitude: f64,
    pub kx: f64,
    pub ky: f64,
    pub time: TimeFactor,
}

impl CosineMode {
    pub fn zero() -> Self {
        Self {
            amplitude: 0.0,
            kx: 0.0,
            ky: 0.0,
            time: TimeFactor::One,
        }
    }
}

/// Closed-form fields
/// `rho* = rho_base + mode`, `b* = b_base + mode`,
/// `u*_x = U s(x) s(y) tau(t)`, `u*_y = U s(x) s(y) cos(pi x / lx) tau(t)`
/// with `s` the half-wave sine, so `u*` vanishes on every wall.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ManufacturedSolution {
    pub lx: f64,
    pub ly: f64,
    pub rho_base: f64,
    pub rho_mode: CosineMode,
    pub b_base: f64,
    pub b_mode: CosineMode,
    pub velocity: f64,
    pub velocity_time: TimeFactor,
}

impl ManufacturedSolution {
    pub fn constant(lx: f64, ly: f64, rho: f64, b: f64) -> Self {
        Self {
            lx,
            ly,
            rho_base: rho,
            rho_mode: CosineMode::zero(),
            b_base: b,
            b_mode: CosineMode::zero(),
            velocity: 0.0,
            velocity_time: TimeFactor::One,
        }
    }

    /// Smooth time-dependent solution used by the refinement study.
    pub fn standard(lx: f64, ly: f64, velocity: f64) -> Self {
        Self {
            lx,
            ly,
            rho_base: 1.0,
            rho_mode: CosineMode {
                amplitude: 0.2,
                kx: 1.0,
                ky: 1.0,
                time: TimeFactor::Cos(1.0),
            },
            b_base: 1.0,
            b_mode: CosineMode {
                amplitude: 0.15,
                kx: 2.0,
                ky: 1.0,
                time: TimeFactor::Cos(2.0),
            },
            velocity,
            velocity_time: TimeFactor::Cos(1.5),
        }
    }

    fn mode_jet(&self, m: &CosineMode, x: f64, y: f64, t: f64) -> Jet {
        let cx = (Jet::coord_x(x) * (m.kx * PI / self.lx)).cos();
        let cy = (Jet::coord_y(y) * (m.ky * PI / self.ly)).cos();
        cx * cy * m.time.jet(t) * m.amplitude
    }

    pub fn rho(&self, x: f64, y: f64, t: f64) -> Jet {
        Jet::constant(self.rho_base) + self.mode_jet(&self.rho_mode, x, y, t)
    }

    pub fn b(&self, x: f64, y: f64, t: f64) -> Jet {
        Jet::constant(self.b_base) + self.mode_jet(&self.b_mode, x, y, t)
    }

    pub fn velocity(&self, x: f64, y: f64, t: f64) -> (Jet, Jet) {
        let sx = (Jet::coord_x(x) * (PI / self.lx)).sin();
        let sy = (Jet::coord_y(y) * (PI / self.ly)).sin();
        let cx = (Jet::coord_x(x) * (PI / self.lx)).cos();
        let base = sx * sy * self.velocity_time.jet(t) * self.velocity;
        (base, base * cx)
    }

    /// Exact fields sampled at the storage locations of `grid`.
    pub fn sample(&self, grid: &Grid, t: f64) -> State {
        let rho = grid.sample_cells(|x, y| self.rho(x, y, t).v);
        let b = grid.sample_cells(|x, y| self.b(x, y, t).v);
        let mut u = grid.sample_faces(|x, y| self.velocity(x, y, t).0.v, |x, y| self.velocity(x, y, t).1.v);
        u.clear_boundary_normal();
        State { rho, b, u, t }
    }

    /// Pointwise sources `(S_rho, S_b, S_ux, S_uy)` that make the fields an
    /// exact solution of the regularized system.
    pub fn sources_at(&self, p: &SimulationParams, x: f64, y: f64, t: f64) -> (f64, f64, f64, f64) {
        let rho = self.rho(x, y, t);
        let b = self.b(x, y, t);
        let (ux, uy) = self.velocity(x, y, t);
        let div = ux.x + uy.y;
        let s_rho = rho.t + rho.x * ux.v + rho.y * uy.v + rho.v * div - p.eps * rho.lap();
        let s_b = b.t + b.x * ux.v + b.y * uy.v + b.v * div - p.eps * b.lap();

        let mut pressure = rho.powf(p.gamma) * p.a + b * b * 0.5;
        if p.delta != 0.0 {
            pressure = pressure + (rho + b).powf(p.big_gamma) * p.delta;
        }
        let m = |ui: Jet, dp: f64, ddiv: f64| {
            let mom = rho * ui;
            let flux_div = (mom * ux).x + (mom * uy).y;
            let drift = rho.x * ui.x + rho.y * ui.y;
            mom.t + flux_div + dp + p.eps * drift - p.mu * ui.lap() - (p.mu + p.lambda) * ddiv
        };
        let s_ux = m(ux, pressure.x, ux.xx + uy.xy);
        let s_uy = m(uy, pressure.y, ux.xy + uy.yy);
        (s_rho, s_b, s_ux, s_uy)
    }
}

/// Source fields at time `t` on `grid`.
pub fn mms_sources(
    ms: &ManufacturedSolution,
    grid: &Grid,
    params: &SimulationParams,
    t: f64,
) -> (CellField, CellField, FaceField) {
    let s_rho = grid.sample_cells(|x, y| ms.sources_at(params, x, y, t).0);
    let s_b = grid.sample_cells(|x, y| ms.sources_at(params, x, y, t).1);
    let mut s_u = grid.sample_faces(
        |x, y| ms.sources_at(params, x, y, t).2,
        |x, y| ms.sources_at(params, x, y, t).3,
    );
    s_u.clear_boundary_normal();
    (s_rho, s_b, s_u)
}

/// [`Forcing`] adapter for a manufactured solution.
#[derive(Clone, Debug)]
pub struct MmsForcing(pub ManufacturedSolution);

impl Forcing for MmsForcing {
    fn sources(&self, grid: &Grid, params: &SimulationParams, t: f64) -> (CellField, CellField, FaceField) {
        mms_sources(&self.0, grid, params, t)
    }
}

/// How the step size follows the grid in a refinement study.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DtRule {
    /// `stable_dt` from the configured CFL number.
    Cfl,
    /// Uniform steps no larger than `c h^2`, `h = min(hx, hy)`.
    Diffusive(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct MmsOptions {
    pub resolutions: Vec<usize>,
    pub dt_rule: DtRule,
}

impl Default for MmsOptions {
    fn default() -> Self {
        Self {
            resolutions: vec![32, 64, 128],
            dt_rule: DtRule::Cfl,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FieldErrors {
    pub rho_l2: f64,
    pub b_l2: f64,
    pub u_l2: f64,
    pub rho_linf: f64,
    pub b_linf: f64,
    pub u_linf: f64,
}

impl FieldErrors {
    /// `sqrt(rho_l2^2 + b_l2^2 + u_l2^2)`.
    pub fn combined_l2(&self) -> f64 {
        (self.rho_l2.powi(2) + self.b_l2.powi(2) + self.u_l2.powi(2)).sqrt()
    }

    pub fn max_linf(&self) -> f64 {
        self.rho_linf.max(self.b_linf).max(self.u_linf)
    }
}

/// Discrete L2 (cell-area weighted) and max-norm errors; velocity errors
/// over interior faces.
pub fn field_errors(grid: &Grid, got: &State, exact: &State) -> FieldErrors {
    let area = grid.cell_area();
    let cell = |a: &CellField, b: &CellField| {
        let mut s = 0.0;
        let mut m = 0.0f64;
        for (x, y) in a.iter().zip(b.iter()) {
            let d = (x - y).abs();
            s += d * d;
            m = m.max(d);
        }
        ((s * area).sqrt(), m)
    };
    let (rho_l2, rho_linf) = cell(&got.rho, &exact.rho);
    let (b_l2, b_linf) = cell(&got.b, &exact.b);
    let mut s = 0.0;
    let mut m = 0.0f64;
    for (x, y) in got.u.to_vec().iter().zip(exact.u.to_vec()) {
        let d = (x - y).abs();
        s += d * d;
        m = m.max(d);
    }
    FieldErrors {
        rho_l2,
        b_l2,
        u_l2: (s * area).sqrt(),
        rho_linf,
        b_linf,
        u_linf: m,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MmsReport {
    pub resolutions: Vec<usize>,
    pub hs: Vec<f64>,
    pub errors: Vec<FieldErrors>,
    pub steps: Vec<usize>,
    /// Least-squares order of the combined L2 error.
    pub order_l2: f64,
    /// Least-squares order of the largest max-norm error.
    pub order_linf: f64,
    pub pairwise_l2: Vec<f64>,
}

#[derive(Debug, Error)]
pub enum MmsError {
    #[error("run at {n}x{n} failed: {failure}")]
    Run { n: usize, failure: Box<RunFailure> },
    #[error("exact solution is not admissible on the {n}x{n} grid: {reason}")]
    Inadmissible { n: usize, reason: String },
    #[error(transparent)]
    Order(#[from] RichardsonError),
    #[error("{0}")]
    Grid(#[from] crate::params::ParamError),
}

/// Runs the source-augmented solver from exact initial data on square grids
/// of each resolution (aspect taken from `params`) and reports errors at
/// `t_final` against the exact fields.
pub fn run_mms(params: &SimulationParams, ms: &ManufacturedSolution, opts: &MmsOptions) -> Result<MmsReport, MmsError> {
    let mut hs = Vec::new();
    let mut errors = Vec::new();
    let mut steps = Vec::new();
    for &n in &opts.resolutions {
        let p = SimulationParams {
            nx: n,
            ny: n,
            ..params.clone()
        };
        let grid = Grid::new(p.lx, p.ly, n, n)?;
        let init = ms.sample(&grid, 0.0);
        init.check_invariants(&grid).map_err(|e| MmsError::Inadmissible {
            n,
            reason: e.to_string(),
        })?;
        let fixed_dt = match opts.dt_rule {
            DtRule::Cfl => None,
            DtRule::Diffusive(c) => {
                let h = grid.hx.min(grid.hy);
                let count = (p.t_final / (c * h * h)).ceil().max(1.0);
                Some(p.t_final / count)
            }
        };
        let solver = Solver::new(grid.clone(), p.clone()).with_forcing(Arc::new(MmsForcing(*ms)));
        let control = RunControl {
            record_interval: usize::MAX,
            fixed_dt,
            ..Default::default()
        };
        let run = simulate(&solver, init, &control, |_, _| {}).map_err(|f| MmsError::Run {
            n,
            failure: Box::new(f),
        })?;
        let exact = ms.sample(&grid, run.final_state.t);
        errors.push(field_errors(&grid, &run.final_state, &exact));
        hs.push(grid.hx.max(grid.hy));
        steps.push(run.steps());
    }
    let l2: Vec<f64> = errors.iter().map(FieldErrors::combined_l2).collect();
    let linf: Vec<f64> = errors.iter().map(FieldErrors::max_linf).collect();
    Ok(MmsReport {
        resolutions: opts.resolutions.clone(),
        order_l2: richardson_order(&l2, &hs)?,
        order_linf: richardson_order(&linf, &hs)?,
        pairwise_l2: pairwise_orders(&l2, &hs),
        hs,
        errors,
        steps,
    })
}

/// Parameters and solution of the upwind refinement study.
pub fn upwind_study(base: &SimulationParams) -> (SimulationParams, ManufacturedSolution, MmsOptions) {
    let p = SimulationParams {
        transport: Transport::Upwind,
        eps: 1e-3,
        delta: 0.0,
        mu: 0.05,
        lambda: 0.0,
        t_final: 0.25,
        ..base.clone()
    };
    let ms = ManufacturedSolution::standard(p.lx, p.ly, 0.5);
    (
        p,
        ms,
        MmsOptions {
            resolutions: vec![32, 64, 128],
            dt_rule: DtRule::Cfl,
        },
    )
}

/// Parameters and solution of the centered, diffusion-dominated study.
pub fn centered_study(base: &SimulationParams) -> (SimulationParams, ManufacturedSolution, MmsOptions) {
    let p = SimulationParams {
        transport: Transport::Centered,
        eps: 5e-2,
        delta: 0.0,
        mu: 0.1,
        lambda: 0.0,
        t_final: 0.1,
        ..base.clone()
    };
    let ms = ManufacturedSolution::standard(p.lx, p.ly, 0.1);
    (
        p,
        ms,
        MmsOptions {
            resolutions: vec![32, 64, 128],
            dt_rule: DtRule::Diffusive(1.0),
        },
    )
}
