//! Functionals evaluated on states and trajectories: energy, dissipation,
//! ratio bounds, convex and entropy functionals, effective viscous flux
//! pairings, weak and renormalized residuals, and composition defects.
//!
//! Space integrals use the midpoint rule on cells; time integrals use the
//! trapezoid rule over trajectory frames.

use crate::field::{integrate, CellField, FaceField};
use crate::grid::Grid;
use crate::ops::{divergence_face_to_cc, gradient_cc_to_face, laplacian_neumann, velocity_at_centers};
use crate::params::SimulationParams;
use crate::solver::{pressure_total_diagnostic, Forcing};
use crate::state::{State, Trajectory};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagnosticsError {
    #[error("frames cover [{covered_from}, {covered_to}] but the test function needs [{needed_from}, {needed_to}]")]
    SupportNotCovered {
        needed_from: f64,
        needed_to: f64,
        covered_from: f64,
        covered_to: f64,
    },
    #[error("trajectories do not share grid and frame times: {0}")]
    GridMismatch(String),
}

/// One row of the functional time series.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub energy: f64,
    pub dissipation: f64,
    pub mass_rho: f64,
    pub mass_b: f64,
    pub ratio_min: f64,
    pub ratio_max: f64,
    pub f_convex: f64,
    pub g_entropy: f64,
    pub delta_pressure_l1: f64,
    pub u_h1_sq: f64,
    pub rho_lgamma: f64,
    pub b_l2_sq: f64,
}

impl DiagnosticsRecord {
    pub fn compute(grid: &Grid, state: &State, params: &SimulationParams) -> Self {
        let area = grid.cell_area();
        let (ratio_min, ratio_max) = ratio_bounds(state);
        Self {
            t: state.t,
            energy: total_energy(grid, state, params),
            dissipation: dissipation_rate(grid, state, params),
            mass_rho: integrate(&state.rho, area),
            mass_b: integrate(&state.b, area),
            ratio_min,
            ratio_max,
            f_convex: convex_functional_f(grid, state),
            g_entropy: log_entropy(grid, state),
            delta_pressure_l1: delta_pressure_l1(grid, state, params),
            u_h1_sq: u_h1_sq(grid, &state.u),
            rho_lgamma: state.rho.iter().map(|r| r.powf(params.gamma)).sum::<f64>() * area,
            b_l2_sq: state.b.iter().map(|b| b * b).sum::<f64>() * area,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values().iter().all(|v| v.is_finite())
    }

    /// Values in CSV column order.
    pub fn values(&self) -> [f64; 13] {
        [
            self.t,
            self.energy,
            self.dissipation,
            self.mass_rho,
            self.mass_b,
            self.ratio_min,
            self.ratio_max,
            self.f_convex,
            self.g_entropy,
            self.delta_pressure_l1,
            self.u_h1_sq,
            self.rho_lgamma,
            self.b_l2_sq,
        ]
    }

    pub fn from_values(v: [f64; 13]) -> Self {
        Self {
            t: v[0],
            energy: v[1],
            dissipation: v[2],
            mass_rho: v[3],
            mass_b: v[4],
            ratio_min: v[5],
            ratio_max: v[6],
            f_convex: v[7],
            g_entropy: v[8],
            delta_pressure_l1: v[9],
            u_h1_sq: v[10],
            rho_lgamma: v[11],
            b_l2_sq: v[12],
        }
    }
}

/// Elastic energy density of `a rho^gamma`; `a rho log rho` when `gamma = 1`.
#[inline]
fn elastic_density(rho: f64, p: &SimulationParams) -> f64 {
    if p.is_isothermal() {
        p.a * rho * rho.ln()
    } else {
        p.a * rho.powf(p.gamma) / (p.gamma - 1.0)
    }
}

/// `sum [rho |u_c|^2 / 2 + elastic(rho) + b^2 / 2 + delta (rho + b)^Gamma / (Gamma - 1)] area`
/// with `u_c` the center-interpolated velocity.
pub fn total_energy(grid: &Grid, state: &State, params: &SimulationParams) -> f64 {
    let (ucx, ucy) = velocity_at_centers(grid, &state.u);
    let mut e = 0.0;
    for (((&r, &b), &vx), &vy) in state.rho.iter().zip(state.b.iter()).zip(ucx.iter()).zip(ucy.iter()) {
        e += 0.5 * r * (vx * vx + vy * vy) + elastic_density(r, params) + 0.5 * b * b;
        if params.delta != 0.0 {
            e += params.delta / (params.big_gamma - 1.0) * (r + b).powf(params.big_gamma);
        }
    }
    e * grid.cell_area()
}

/// Discrete `int |grad u|^2`, equal to `<u, -lap_h u>` for the no-slip
/// Laplacian: wall differences use the mirrored ghost with weight one half.
pub fn u_h1_sq(grid: &Grid, u: &FaceField) -> f64 {
    let (nx, ny) = (grid.nx, grid.ny);
    let (ix2, iy2) = (1.0 / (grid.hx * grid.hx), 1.0 / (grid.hy * grid.hy));
    let mut s = 0.0;
    for i in 0..nx {
        for j in 0..ny {
            s += (u.ux[[i + 1, j]] - u.ux[[i, j]]).powi(2) * ix2;
        }
    }
    for i in 1..nx {
        for j in 0..ny - 1 {
            s += (u.ux[[i, j + 1]] - u.ux[[i, j]]).powi(2) * iy2;
        }
        s += 2.0 * (u.ux[[i, 0]].powi(2) + u.ux[[i, ny - 1]].powi(2)) * iy2;
    }
    for i in 0..nx {
        for j in 0..ny {
            s += (u.uy[[i, j + 1]] - u.uy[[i, j]]).powi(2) * iy2;
        }
    }
    for j in 1..ny {
        for i in 0..nx - 1 {
            s += (u.uy[[i + 1, j]] - u.uy[[i, j]]).powi(2) * ix2;
        }
        s += 2.0 * (u.uy[[0, j]].powi(2) + u.uy[[nx - 1, j]].powi(2)) * ix2;
    }
    s * grid.cell_area()
}

/// `mu |grad u|^2 + (mu + lambda)(div u)^2` integrated, plus for `eps > 0` the
/// face terms `eps a gamma rho^(gamma-2) |grad rho|^2 + eps |grad b|^2`
/// plus `eps delta Gamma (rho + b)^(Gamma-2) |grad(rho + b)|^2`, with
/// face-averaged coefficients.
pub fn dissipation_rate(grid: &Grid, state: &State, params: &SimulationParams) -> f64 {
    let area = grid.cell_area();
    let div = divergence_face_to_cc(grid, &state.u);
    let mut d = params.mu * u_h1_sq(grid, &state.u)
        + (params.mu + params.lambda) * div.iter().map(|v| v * v).sum::<f64>() * area;
    if params.eps > 0.0 {
        let p = params;
        let gr = gradient_cc_to_face(grid, &state.rho);
        let gb = gradient_cc_to_face(grid, &state.b);
        let (nx, ny) = (grid.nx, grid.ny);
        let mut face = |r: f64, b: f64, dr: f64, db: f64| {
            let mut v = p.a * p.gamma * r.powf(p.gamma - 2.0) * dr * dr + db * db;
            if p.delta != 0.0 {
                v += p.delta * p.big_gamma * (r + b).powf(p.big_gamma - 2.0) * (dr + db).powi(2);
            }
            d += p.eps * v * area;
        };
        for i in 1..nx {
            for j in 0..ny {
                let r = 0.5 * (state.rho[[i - 1, j]] + state.rho[[i, j]]);
                let b = 0.5 * (state.b[[i - 1, j]] + state.b[[i, j]]);
                face(r, b, gr.ux[[i, j]], gb.ux[[i, j]]);
            }
        }
        for i in 0..nx {
            for j in 1..ny {
                let r = 0.5 * (state.rho[[i, j - 1]] + state.rho[[i, j]]);
                let b = 0.5 * (state.b[[i, j - 1]] + state.b[[i, j]]);
                face(r, b, gr.uy[[i, j]], gb.uy[[i, j]]);
            }
        }
    }
    d
}

/// `(min, max)` of `b / rho` over cells.
pub fn ratio_bounds(state: &State) -> (f64, f64) {
    state
        .b
        .iter()
        .zip(state.rho.iter())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (b, r)| {
            let q = b / r;
            (lo.min(q), hi.max(q))
        })
}

/// `sum rho^2 / (rho + b) area`.
pub fn convex_functional_f(grid: &Grid, state: &State) -> f64 {
    state
        .rho
        .iter()
        .zip(state.b.iter())
        .map(|(r, b)| r * r / (r + b))
        .sum::<f64>()
        * grid.cell_area()
}

/// Same integrand as [`convex_functional_f`]; transported without change by
/// the target system.
pub fn conserved_functional_g(grid: &Grid, state: &State) -> f64 {
    convex_functional_f(grid, state)
}

/// `sum (rho log rho + b log b) area`.
pub fn log_entropy(grid: &Grid, state: &State) -> f64 {
    let zlogz = |z: f64| if z > 0.0 { z * z.ln() } else { 0.0 };
    state
        .rho
        .iter()
        .zip(state.b.iter())
        .map(|(r, b)| zlogz(*r) + zlogz(*b))
        .sum::<f64>()
        * grid.cell_area()
}

/// `sum delta (rho + b)^Gamma area`.
pub fn delta_pressure_l1(grid: &Grid, state: &State, params: &SimulationParams) -> f64 {
    if params.delta == 0.0 {
        return 0.0;
    }
    state
        .rho
        .iter()
        .zip(state.b.iter())
        .map(|(r, b)| params.delta * (r + b).powf(params.big_gamma))
        .sum::<f64>()
        * grid.cell_area()
}

/// `sum (rho + b) div u area`.
pub fn weighted_divergence(grid: &Grid, state: &State) -> f64 {
    let div = divergence_face_to_cc(grid, &state.u);
    ndarray::Zip::from(&state.rho)
        .and(&state.b)
        .and(&div)
        .fold(0.0, |acc, r, b, d| acc + (r + b) * d)
        * grid.cell_area()
}

/// `sum (lap_h q)^2 area`, a discrete second-derivative size monitor.
pub fn second_difference_norm(grid: &Grid, q: &CellField) -> f64 {
    laplacian_neumann(grid, q).iter().map(|v| v * v).sum::<f64>() * grid.cell_area()
}

/// Per-cell `P_total - (lambda + 2 mu) div u`.
pub fn effective_viscous_flux_field(grid: &Grid, state: &State, params: &SimulationParams) -> CellField {
    let div = divergence_face_to_cc(grid, &state.u);
    pressure_total_diagnostic(&state.rho, &state.b, params) - div * params.longitudinal_viscosity()
}

/// Fraction of the fluctuation energy of `q` not captured by its 2x2 block
/// averages. Requires even `nx` and `ny`.
pub fn high_frequency_fraction(q: &CellField) -> f64 {
    let (nx, ny) = q.dim();
    let mean = q.mean().unwrap_or(0.0);
    let mut total = 0.0;
    let mut high = 0.0;
    for i in (0..nx - nx % 2).step_by(2) {
        for j in (0..ny - ny % 2).step_by(2) {
            let block = [q[[i, j]], q[[i + 1, j]], q[[i, j + 1]], q[[i + 1, j + 1]]];
            let avg = block.iter().sum::<f64>() / 4.0;
            for v in block {
                total += (v - mean).powi(2);
                high += (v - avg).powi(2);
            }
        }
    }
    if total == 0.0 {
        0.0
    } else {
        high / total
    }
}

/// Concave `C^1` profile: `z` on `[0, 1]`, `1 + (z - 1) - (z - 1)^2 / 4` on
/// `[1, 3]`, and `2` beyond.
fn cutoff_t(z: f64) -> (f64, f64, f64) {
    if z <= 1.0 {
        (z, 1.0, 0.0)
    } else if z <= 3.0 {
        let w = z - 1.0;
        (1.0 + w - 0.25 * w * w, 1.0 - 0.5 * w, -0.5)
    } else {
        (2.0, 0.0, 0.0)
    }
}

/// `T_k(z) = k T(z / k)`.
pub fn cutoff_tk(z: f64, k: f64) -> f64 {
    k * cutoff_t(z / k).0
}

/// `(T_k, T_k', T_k'')` at `z`.
pub fn cutoff_tk_derivatives(z: f64, k: f64) -> (f64, f64, f64) {
    let (t, d1, d2) = cutoff_t(z / k);
    (k * t, d1, d2 / k)
}

/// Cubic B-spline bump supported on `[center - half_width, center + half_width]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bump {
    pub center: f64,
    pub half_width: f64,
}

impl Bump {
    pub fn new(center: f64, half_width: f64) -> Self {
        Self { center, half_width }
    }

    /// Value, first and second derivative.
    pub fn eval(&self, x: f64) -> (f64, f64, f64) {
        let ds = 2.0 / self.half_width;
        let s = (x - self.center) * ds;
        let a = s.abs();
        let sg = s.signum();
        let (v, d1, d2) = if a <= 1.0 {
            (
                2.0 / 3.0 - s * s + 0.5 * a * a * a,
                -2.0 * s + 1.5 * a * s,
                -2.0 + 3.0 * a,
            )
        } else if a <= 2.0 {
            let w = 2.0 - a;
            (w * w * w / 6.0, -0.5 * w * w * sg, w)
        } else {
            (0.0, 0.0, 0.0)
        };
        (v, d1 * ds, d2 * ds * ds)
    }

    pub fn support(&self) -> (f64, f64) {
        (self.center - self.half_width, self.center + self.half_width)
    }
}

/// Separable test function `scale psi(t) phi_x(x) phi_y(y)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TestFunction {
    pub time: Bump,
    pub x: Bump,
    pub y: Bump,
    pub scale: f64,
}

/// Spatial factor and its derivatives at one point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpatialJet {
    pub phi: f64,
    pub dx: f64,
    pub dy: f64,
    pub lap: f64,
}

impl TestFunction {
    pub fn new(time: Bump, x: Bump, y: Bump) -> Self {
        Self { time, x, y, scale: 1.0 }
    }

    /// Bump centred in `(0, t_final) x grid`, with support covering the middle half.
    pub fn centered(grid: &Grid, t_final: f64) -> Self {
        Self::new(
            Bump::new(0.5 * t_final, 0.25 * t_final),
            Bump::new(0.5 * grid.lx, 0.25 * grid.lx),
            Bump::new(0.5 * grid.ly, 0.25 * grid.ly),
        )
    }

    pub fn psi(&self, t: f64) -> (f64, f64) {
        let (v, d, _) = self.time.eval(t);
        (self.scale * v, self.scale * d)
    }

    pub fn spatial(&self, x: f64, y: f64) -> SpatialJet {
        let (fx, dfx, ddfx) = self.x.eval(x);
        let (fy, dfy, ddfy) = self.y.eval(y);
        SpatialJet {
            phi: fx * fy,
            dx: dfx * fy,
            dy: fx * dfy,
            lap: ddfx * fy + fx * ddfy,
        }
    }

    fn spatial_table(&self, grid: &Grid) -> Vec<SpatialJet> {
        let mut out = Vec::with_capacity(grid.nx * grid.ny);
        for i in 0..grid.nx {
            for j in 0..grid.ny {
                out.push(self.spatial(grid.xc(i), grid.yc(j)));
            }
        }
        out
    }
}

fn trapezoid_weights(times: &[f64]) -> Vec<f64> {
    let n = times.len();
    let mut w = vec![0.0; n];
    for k in 1..n {
        let h = times[k] - times[k - 1];
        w[k - 1] += 0.5 * h;
        w[k] += 0.5 * h;
    }
    w
}

fn check_coverage(traj: &Trajectory, test: &TestFunction) -> Result<(), DiagnosticsError> {
    let (lo, hi) = test.time.support();
    let (first, last) = match (traj.frames.first(), traj.frames.last()) {
        (Some(a), Some(b)) => (a.t, b.t),
        _ => (f64::NAN, f64::NAN),
    };
    if !(first <= lo && last >= hi) {
        return Err(DiagnosticsError::SupportNotCovered {
            needed_from: lo,
            needed_to: hi,
            covered_from: first,
            covered_to: last,
        });
    }
    Ok(())
}

/// Trapezoid-in-time sum of `per_frame(frame, psi, psi_t)`.
fn time_quadrature(
    traj: &Trajectory,
    test: &TestFunction,
    mut per_frame: impl FnMut(&State, f64, f64) -> f64,
) -> Result<f64, DiagnosticsError> {
    check_coverage(traj, test)?;
    let times = traj.times();
    let w = trapezoid_weights(&times);
    let mut total = 0.0;
    for (frame, wk) in traj.frames.iter().zip(w) {
        let (psi, dpsi) = test.psi(frame.t);
        if psi == 0.0 && dpsi == 0.0 {
            continue;
        }
        total += wk * per_frame(frame, psi, dpsi);
    }
    Ok(total)
}

/// Weight multiplying the effective viscous flux in [`evf_pairing`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EvfWeight {
    /// `rho + b`.
    Sum,
    /// `T_k(rho) + T_k(b)`.
    Cutoff(f64),
}

/// `int int psi phi (P_total - (lambda + 2 mu) div u) w(rho, b)`.
pub fn evf_pairing(
    traj: &Trajectory,
    test: &TestFunction,
    params: &SimulationParams,
    weight: EvfWeight,
) -> Result<f64, DiagnosticsError> {
    let grid = &traj.grid;
    let table = test.spatial_table(grid);
    let area = grid.cell_area();
    time_quadrature(traj, test, |s, psi, _| {
        let evf = effective_viscous_flux_field(grid, s, params);
        let mut acc = 0.0;
        for (k, ((e, r), b)) in evf.iter().zip(s.rho.iter()).zip(s.b.iter()).enumerate() {
            let w = match weight {
                EvfWeight::Sum => r + b,
                EvfWeight::Cutoff(k) => cutoff_tk(*r, k) + cutoff_tk(*b, k),
            };
            acc += table[k].phi * e * w;
        }
        psi * acc * area
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Equation {
    Mass,
    Magnetic,
    /// Euclidean norm of the two component residuals.
    Momentum,
}

/// Centered cell gradient with mirrored (`odd = false`) or sign-flipped
/// (`odd = true`) ghosts.
fn center_gradient(grid: &Grid, q: &CellField, odd: bool) -> (CellField, CellField) {
    let (nx, ny) = (grid.nx, grid.ny);
    let ghost = |v: f64| if odd { -v } else { v };
    let gx = CellField::from_shape_fn((nx, ny), |(i, j)| {
        let c = q[[i, j]];
        let l = if i > 0 { q[[i - 1, j]] } else { ghost(c) };
        let r = if i + 1 < nx { q[[i + 1, j]] } else { ghost(c) };
        (r - l) / (2.0 * grid.hx)
    });
    let gy = CellField::from_shape_fn((nx, ny), |(i, j)| {
        let c = q[[i, j]];
        let d = if j > 0 { q[[i, j - 1]] } else { ghost(c) };
        let t = if j + 1 < ny { q[[i, j + 1]] } else { ghost(c) };
        (t - d) / (2.0 * grid.hy)
    });
    (gx, gy)
}

fn cell_sources(
    grid: &Grid,
    params: &SimulationParams,
    forcing: Option<&dyn Forcing>,
    t: f64,
) -> Option<(CellField, CellField, CellField, CellField)> {
    forcing.map(|f| {
        let (sr, sb, sm) = f.sources(grid, params, t);
        let (smx, smy) = velocity_at_centers(grid, &sm);
        (sr, sb, smx, smy)
    })
}

/// Quadrature of the distributional form of one equation of the regularized
/// system (the target system when `eps = delta = 0`), optionally augmented
/// by source terms. Vanishes for exact solutions.
pub fn weak_residual(
    traj: &Trajectory,
    test: &TestFunction,
    params: &SimulationParams,
    equation: Equation,
    forcing: Option<&dyn Forcing>,
) -> Result<f64, DiagnosticsError> {
    let grid = &traj.grid;
    let table = test.spatial_table(grid);
    let area = grid.cell_area();
    let p = params;
    match equation {
        Equation::Mass | Equation::Magnetic => {
            let magnetic = equation == Equation::Magnetic;
            time_quadrature(traj, test, |s, psi, dpsi| {
                let q = if magnetic { &s.b } else { &s.rho };
                let src = cell_sources(grid, p, forcing, s.t);
                let (ucx, ucy) = velocity_at_centers(grid, &s.u);
                let mut acc = 0.0;
                for (k, &v) in q.iter().enumerate() {
                    let j = table[k];
                    let (vx, vy) = (ucx.as_slice().unwrap()[k], ucy.as_slice().unwrap()[k]);
                    let mut r = v * dpsi * j.phi + psi * (v * (vx * j.dx + vy * j.dy) + p.eps * v * j.lap);
                    if let Some((sr, sb, _, _)) = &src {
                        let sv = if magnetic { sb } else { sr };
                        r += psi * sv.as_slice().unwrap()[k] * j.phi;
                    }
                    acc += r;
                }
                acc * area
            })
        }
        Equation::Momentum => {
            let rx = momentum_component(traj, test, params, forcing, 0, &table)?;
            let ry = momentum_component(traj, test, params, forcing, 1, &table)?;
            Ok(rx.hypot(ry))
        }
    }
}

fn momentum_component(
    traj: &Trajectory,
    test: &TestFunction,
    p: &SimulationParams,
    forcing: Option<&dyn Forcing>,
    axis: usize,
    table: &[SpatialJet],
) -> Result<f64, DiagnosticsError> {
    let grid = &traj.grid;
    let area = grid.cell_area();
    time_quadrature(traj, test, |s, psi, dpsi| {
        let (ucx, ucy) = velocity_at_centers(grid, &s.u);
        let pressure = pressure_total_diagnostic(&s.rho, &s.b, p);
        let div = divergence_face_to_cc(grid, &s.u);
        let (grx, gry) = center_gradient(grid, &s.rho, false);
        let ui = if axis == 0 { &ucx } else { &ucy };
        let (gux, guy) = center_gradient(grid, ui, true);
        let src = cell_sources(grid, p, forcing, s.t);
        let mut acc = 0.0;
        for (k, ((&r, &vx), &vy)) in s.rho.iter().zip(ucx.iter()).zip(ucy.iter()).enumerate() {
            let j = table[k];
            let v = if axis == 0 { vx } else { vy };
            let di = if axis == 0 { j.dx } else { j.dy };
            let sl = |a: &CellField| a.as_slice().unwrap()[k];
            let drift = sl(&grx) * sl(&gux) + sl(&gry) * sl(&guy);
            let mut term = r * v * dpsi * j.phi
                + psi
                    * (r * v * (vx * j.dx + vy * j.dy) + sl(&pressure) * di - p.eps * drift * j.phi + p.mu * v * j.lap
                        - (p.mu + p.lambda) * sl(&div) * di);
            if let Some((_, _, smx, smy)) = &src {
                term += psi * sl(if axis == 0 { smx } else { smy }) * j.phi;
            }
            acc += term;
        }
        acc * area
    })
}

/// Renormalizing function `h` for [`renormalized_residual`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Renormalization {
    Identity,
    Cutoff(f64),
    /// `z log z`; the fields stay bounded away from zero in practice.
    ZLogZ,
}

impl Renormalization {
    fn eval(&self, z: f64) -> (f64, f64, f64) {
        match *self {
            Self::Identity => (z, 1.0, 0.0),
            Self::Cutoff(k) => cutoff_tk_derivatives(z, k),
            Self::ZLogZ => (z * z.ln(), z.ln() + 1.0, 1.0 / z),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scalar {
    Rho,
    B,
}

/// Quadrature of the renormalized identity
/// `h_t + div(h u) + (h' q - h) div u = eps (lap h - h'' |grad q|^2) + h' S`
/// for `q = rho` or `q = b`, tested against `psi phi`.
pub fn renormalized_residual(
    traj: &Trajectory,
    test: &TestFunction,
    params: &SimulationParams,
    h: Renormalization,
    scalar: Scalar,
    forcing: Option<&dyn Forcing>,
) -> Result<f64, DiagnosticsError> {
    let grid = &traj.grid;
    let table = test.spatial_table(grid);
    let area = grid.cell_area();
    let eps = params.eps;
    time_quadrature(traj, test, |s, psi, dpsi| {
        let q = match scalar {
            Scalar::Rho => &s.rho,
            Scalar::B => &s.b,
        };
        let (ucx, ucy) = velocity_at_centers(grid, &s.u);
        let div = divergence_face_to_cc(grid, &s.u);
        let (gx, gy) = center_gradient(grid, q, false);
        let src = cell_sources(grid, params, forcing, s.t);
        let mut acc = 0.0;
        for (k, &z) in q.iter().enumerate() {
            let j = table[k];
            let sl = |a: &CellField| a.as_slice().unwrap()[k];
            let (hv, h1, h2) = h.eval(z);
            let grad_sq = sl(&gx).powi(2) + sl(&gy).powi(2);
            let mut term = hv * dpsi * j.phi
                + psi
                    * (hv * (sl(&ucx) * j.dx + sl(&ucy) * j.dy) - (h1 * z - hv) * sl(&div) * j.phi + eps * hv * j.lap
                        - eps * h2 * grad_sq * j.phi);
            if let Some((sr, sb, _, _)) = &src {
                let sv = match scalar {
                    Scalar::Rho => sr,
                    Scalar::B => sb,
                };
                term += psi * h1 * sl(sv) * j.phi;
            }
            acc += term;
        }
        acc * area
    })
}

fn check_compatible(a: &Trajectory, b: &Trajectory) -> Result<(), DiagnosticsError> {
    if a.grid != b.grid {
        return Err(DiagnosticsError::GridMismatch(format!(
            "{}x{} vs {}x{}",
            a.grid.nx, a.grid.ny, b.grid.nx, b.grid.ny
        )));
    }
    let (ta, tb) = (a.times(), b.times());
    if ta.len() != tb.len()
        || ta
            .iter()
            .zip(&tb)
            .any(|(x, y)| (x - y).abs() > 1e-12 * x.abs().max(1.0))
    {
        return Err(DiagnosticsError::GridMismatch(format!(
            "{} frames vs {} frames with differing times",
            ta.len(),
            tb.len()
        )));
    }
    Ok(())
}

/// Which mass fraction [`composition_defect`] compares.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fraction {
    Rho,
    B,
}

/// `int int (rho_a + b_a) |f_a - f_b|^p` with `f = rho / (rho + b)` (or the
/// `b` fraction), trapezoid in time over shared frames.
pub fn composition_defect(a: &Trajectory, b: &Trajectory, p: f64, fraction: Fraction) -> Result<f64, DiagnosticsError> {
    check_compatible(a, b)?;
    let area = a.grid.cell_area();
    let w = trapezoid_weights(&a.times());
    let frac = |r: f64, bb: f64| match fraction {
        Fraction::Rho => r / (r + bb),
        Fraction::B => bb / (r + bb),
    };
    let mut total = 0.0;
    for ((fa, fb), wk) in a.frames.iter().zip(&b.frames).zip(w) {
        let mut acc = 0.0;
        for (((ra, ba), rb), bb) in fa.rho.iter().zip(fa.b.iter()).zip(fb.rho.iter()).zip(fb.b.iter()) {
            acc += (ra + ba) * (frac(*ra, *ba) - frac(*rb, *bb)).abs().powf(p);
        }
        total += wk * acc * area;
    }
    Ok(total)
}

/// Trapezoid-in-time integral of a per-frame functional.
pub fn time_integral(traj: &Trajectory, f: impl Fn(&State) -> f64) -> f64 {
    let w = trapezoid_weights(&traj.times());
    traj.frames.iter().zip(w).map(|(s, wk)| wk * f(s)).sum()
}

/// Both sides of the entropy comparison between a regularized trajectory
/// and a reference one at the last shared frame:
/// `lhs = entropy(a) - entropy(ref)`,
/// `rhs = int int (rho_ref + b_ref) div u_ref - int int (rho_a + b_a) div u_a`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EntropyComparison {
    pub lhs: f64,
    pub rhs: f64,
}

impl EntropyComparison {
    /// `lhs - rhs`; expected nonpositive.
    pub fn defect(&self) -> f64 {
        self.lhs - self.rhs
    }
}

pub fn entropy_comparison(a: &Trajectory, reference: &Trajectory) -> Result<EntropyComparison, DiagnosticsError> {
    check_compatible(a, reference)?;
    let grid = &a.grid;
    let (la, lr) = match (a.last(), reference.last()) {
        (Some(x), Some(y)) => (x, y),
        _ => return Err(DiagnosticsError::GridMismatch("empty trajectory".into())),
    };
    let lhs = log_entropy(grid, la) - log_entropy(grid, lr);
    let rhs =
        time_integral(reference, |s| weighted_divergence(grid, s)) - time_integral(a, |s| weighted_divergence(grid, s));
    Ok(EntropyComparison { lhs, rhs })
}
