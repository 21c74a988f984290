//! Initial data generation.
//!
//! Every generator yields strictly positive `rho_0`, `b_0` and a velocity with
//! zero normal component on the walls. The ratio envelope `[c_star, c_upper]`
//! of `b_0 / rho_0` is measured on the discrete data, so both bounds are
//! attained at some cell.

use crate::appio::snapshot::{read_snapshot, SnapshotError};
use crate::grid::Grid;
use crate::state::State;
use std::f64::consts::PI;
use std::path::PathBuf;
use thiserror::Error;

#[derive(Clone, Debug, PartialEq)]
pub enum Profile {
    /// `rho_0 = rho`, `b_0 = b`.
    Constant { rho: f64, b: f64 },
    /// `rho_0 = base + amplitude cos(kx pi x / lx) cos(ky pi y / ly)`, `b_0 = ratio rho_0`.
    Cosine {
        base: f64,
        amplitude: f64,
        kx: f64,
        ky: f64,
        ratio: f64,
    },
    /// `rho_0 = rho_base (1 + rho_amp cos(pi x / lx) cos(pi y / ly))` and
    /// `b_0 = r(x) rho_0`, where `r` equals `ratio_lo` on the left quarter of
    /// the domain, `ratio_hi` on the right quarter, and ramps linearly between.
    RatioProfile {
        rho_base: f64,
        rho_amp: f64,
        ratio_lo: f64,
        ratio_hi: f64,
    },
    /// Fields read from a snapshot file (checkpoint resume).
    Snapshot { path: PathBuf },
}

#[derive(Clone, Debug, PartialEq)]
pub struct InitialDataSpec {
    pub profile: Profile,
    /// Required lower bound `m` for `rho_0` and `b_0`, if any.
    pub lower: Option<f64>,
    /// Required upper bound `M` for `rho_0` and `b_0`, if any.
    pub upper: Option<f64>,
    /// Amplitude of an initial vortex built from the discrete stream function
    /// `swirl * sin^2(pi x / lx) sin^2(pi y / ly)`.
    pub swirl: f64,
}

impl InitialDataSpec {
    pub fn new(profile: Profile) -> Self {
        Self {
            profile,
            lower: None,
            upper: None,
            swirl: 0.0,
        }
    }

    pub fn with_swirl(mut self, swirl: f64) -> Self {
        self.swirl = swirl;
        self
    }

    pub fn with_bounds(mut self, lower: f64, upper: f64) -> Self {
        self.lower = Some(lower);
        self.upper = Some(upper);
        self
    }
}

impl Default for InitialDataSpec {
    fn default() -> Self {
        Self::new(Profile::Cosine {
            base: 1.0,
            amplitude: 0.1,
            kx: 1.0,
            ky: 1.0,
            ratio: 1.0,
        })
    }
}

/// Pointwise bounds `c_star <= b / rho <= c_upper` carried by the initial data.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RatioEnvelope {
    pub c_star: f64,
    pub c_upper: f64,
}

impl RatioEnvelope {
    pub fn of_state(state: &State) -> Self {
        let (c_star, c_upper) = crate::diagnostics::ratio_bounds(state);
        Self { c_star, c_upper }
    }

    pub fn contains(&self, lo: f64, hi: f64, tol: f64) -> bool {
        lo >= self.c_star - tol && hi <= self.c_upper + tol
    }
}

#[derive(Debug, Error)]
pub enum InitError {
    #[error("initial {field} violates its bound at cell ({i}, {j}): value {value}, bound {bound}")]
    BoundViolation {
        field: &'static str,
        i: usize,
        j: usize,
        value: f64,
        bound: f64,
    },
    #[error("snapshot grid {found:?} does not match configured grid {expected:?}")]
    GridMismatch {
        found: (usize, usize),
        expected: (usize, usize),
    },
    #[error("snapshot velocity violates no-slip on a boundary-normal face")]
    BoundaryVelocity,
    #[error(transparent)]
    Snapshot(#[from] SnapshotError),
}

/// Builds the state at `t = 0` (or at the snapshot time) and its ratio envelope.
pub fn init_state(grid: &Grid, spec: &InitialDataSpec) -> Result<(State, RatioEnvelope), InitError> {
    let (lx, ly) = (grid.lx, grid.ly);
    let mut state = match &spec.profile {
        Profile::Constant { rho, b } => {
            State::at_rest(grid, grid.sample_cells(|_, _| *rho), grid.sample_cells(|_, _| *b))
        }
        Profile::Cosine {
            base,
            amplitude,
            kx,
            ky,
            ratio,
        } => {
            let rho = grid.sample_cells(|x, y| base + amplitude * (kx * PI * x / lx).cos() * (ky * PI * y / ly).cos());
            let b = rho.mapv(|r| ratio * r);
            State::at_rest(grid, rho, b)
        }
        Profile::RatioProfile {
            rho_base,
            rho_amp,
            ratio_lo,
            ratio_hi,
        } => {
            let rho = grid.sample_cells(|x, y| rho_base * (1.0 + rho_amp * (PI * x / lx).cos() * (PI * y / ly).cos()));
            let ratio = |x: f64| {
                let s = ((x - 0.25 * lx) / (0.5 * lx)).clamp(0.0, 1.0);
                if s == 0.0 {
                    *ratio_lo
                } else if s == 1.0 {
                    *ratio_hi
                } else {
                    ratio_lo + (ratio_hi - ratio_lo) * s
                }
            };
            let b = ndarray::Array2::from_shape_fn(grid.cell_shape(), |(i, j)| ratio(grid.xc(i)) * rho[[i, j]]);
            State::at_rest(grid, rho, b)
        }
        Profile::Snapshot { path } => {
            let s = read_snapshot(path)?;
            if s.rho.dim() != grid.cell_shape() {
                return Err(InitError::GridMismatch {
                    found: s.rho.dim(),
                    expected: grid.cell_shape(),
                });
            }
            if !s.u.boundary_normal_is_zero() {
                return Err(InitError::BoundaryVelocity);
            }
            s
        }
    };

    if spec.swirl != 0.0 {
        let amp = spec.swirl;
        let swirl = grid.curl_of_nodal(|x, y| amp * (PI * x / lx).sin().powi(2) * (PI * y / ly).sin().powi(2));
        state.u.scaled_add(1.0, &swirl);
        state.u.clear_boundary_normal();
    }

    let lower = spec.lower.unwrap_or(0.0);
    for (field, q) in [("rho", &state.rho), ("b", &state.b)] {
        for ((i, j), &value) in q.indexed_iter() {
            let below = if spec.lower.is_some() {
                value < lower
            } else {
                value <= 0.0
            };
            if below || !value.is_finite() {
                return Err(InitError::BoundViolation {
                    field,
                    i,
                    j,
                    value,
                    bound: lower,
                });
            }
            if let Some(upper) = spec.upper {
                if value > upper {
                    return Err(InitError::BoundViolation {
                        field,
                        i,
                        j,
                        value,
                        bound: upper,
                    });
                }
            }
        }
    }
    if let Some(m) = spec.lower {
        if m <= 0.0 {
            return Err(InitError::BoundViolation {
                field: "lower bound",
                i: 0,
                j: 0,
                value: m,
                bound: 0.0,
            });
        }
    }

    let envelope = RatioEnvelope::of_state(&state);
    Ok((state, envelope))
}
