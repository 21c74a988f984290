//! Physical and numerical parameters with admissibility checks.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Discretization of the convective terms.
///
/// `Upwind` is first order and monotone; it is the only scheme for which the
/// discrete maximum principle on `b / rho` holds. `Centered` is second order
/// and exists for convergence studies.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Transport {
    #[default]
    Upwind,
    Centered,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationParams {
    /// Pressure coefficient in `p = a rho^gamma`.
    pub a: f64,
    /// Adiabatic exponent.
    pub gamma: f64,
    /// Shear viscosity.
    pub mu: f64,
    /// Bulk viscosity parameter.
    pub lambda: f64,
    /// Artificial diffusion.
    pub eps: f64,
    /// Artificial pressure coefficient.
    pub delta: f64,
    /// Artificial pressure exponent.
    pub big_gamma: f64,
    pub lx: f64,
    pub ly: f64,
    pub nx: usize,
    pub ny: usize,
    pub cfl: f64,
    pub t_final: f64,
    pub dt_max: Option<f64>,
    pub transport: Transport,
}

impl Default for SimulationParams {
    fn default() -> Self {
        Self {
            a: 1.0,
            gamma: 1.4,
            mu: 0.1,
            lambda: 0.0,
            eps: 1e-2,
            delta: 1e-2,
            big_gamma: 6.0,
            lx: 1.0,
            ly: 1.0,
            nx: 64,
            ny: 64,
            cfl: 0.4,
            t_final: 1.0,
            dt_max: None,
            transport: Transport::Upwind,
        }
    }
}

impl SimulationParams {
    /// Artificial-diffusion-free, artificial-pressure-free specialization.
    pub fn target_system(mut self) -> Self {
        self.eps = 0.0;
        self.delta = 0.0;
        self
    }

    /// Longitudinal viscosity `lambda + 2 mu`.
    pub fn longitudinal_viscosity(&self) -> f64 {
        self.lambda + 2.0 * self.mu
    }

    pub fn is_isothermal(&self) -> bool {
        self.gamma == 1.0
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParamError {
    #[error("viscosity inadmissible: need mu > 0 and lambda + 2 mu > 0, got mu = {mu}, lambda + 2 mu = {sum}")]
    ViscosityInadmissible { mu: f64, sum: f64 },
    #[error("adiabatic exponent inadmissible: need gamma >= 1, got {0}")]
    AdiabaticExponent(f64),
    #[error("artificial pressure exponent too small: need Gamma > max(4, gamma) = {bound} when delta > 0, got Gamma = {big_gamma}")]
    GammaTooSmall { big_gamma: f64, bound: f64 },
    #[error("artificial pressure exponent must exceed 1, got {0}")]
    GammaNotSuperlinear(f64),
    #[error("{name} must be {requirement}, got {value}")]
    OutOfRange {
        name: &'static str,
        requirement: &'static str,
        value: f64,
    },
    #[error("grid too small: need nx >= 4 and ny >= 4, got {nx} x {ny}")]
    GridTooSmall { nx: usize, ny: usize },
}

fn require(cond: bool, name: &'static str, requirement: &'static str, value: f64) -> Result<(), ParamError> {
    if cond {
        Ok(())
    } else {
        Err(ParamError::OutOfRange {
            name,
            requirement,
            value,
        })
    }
}

/// Checks every admissibility inequality and returns the parameters unchanged.
pub fn validate_params(raw: SimulationParams) -> Result<SimulationParams, ParamError> {
    let p = &raw;
    require(p.a > 0.0 && p.a.is_finite(), "a", "> 0", p.a)?;
    if !(p.gamma >= 1.0 && p.gamma.is_finite()) {
        return Err(ParamError::AdiabaticExponent(p.gamma));
    }
    let sum = p.longitudinal_viscosity();
    if !(p.mu > 0.0 && sum > 0.0) {
        return Err(ParamError::ViscosityInadmissible { mu: p.mu, sum });
    }
    require(p.eps >= 0.0 && p.eps.is_finite(), "eps", ">= 0", p.eps)?;
    require(p.delta >= 0.0 && p.delta.is_finite(), "delta", ">= 0", p.delta)?;
    if !(p.big_gamma > 1.0) {
        return Err(ParamError::GammaNotSuperlinear(p.big_gamma));
    }
    if p.delta > 0.0 {
        let bound = p.gamma.max(4.0);
        if !(p.big_gamma > bound) {
            return Err(ParamError::GammaTooSmall {
                big_gamma: p.big_gamma,
                bound,
            });
        }
    }
    require(p.lx > 0.0 && p.lx.is_finite(), "lx", "> 0", p.lx)?;
    require(p.ly > 0.0 && p.ly.is_finite(), "ly", "> 0", p.ly)?;
    if p.nx < 4 || p.ny < 4 {
        return Err(ParamError::GridTooSmall { nx: p.nx, ny: p.ny });
    }
    require(p.cfl > 0.0 && p.cfl <= 1.0, "cfl", "in (0, 1]", p.cfl)?;
    require(p.t_final >= 0.0 && p.t_final.is_finite(), "t_final", ">= 0", p.t_final)?;
    if let Some(dt) = p.dt_max {
        require(dt > 0.0, "dt_max", "> 0", dt)?;
    }
    Ok(raw)
}
