//! One-dimensional blood-flow model on a tree of vessel segments.
//!
//! Unknowns are the lumen area `A` and flow rate `q` at every axial node,
//! plus the capacitor pressure of each RCR outlet. Pressure follows from the
//! Olufsen wall law.

mod geometry;
mod solver;
mod windkessel;

pub use geometry::{Geometry1D, Junction1D, Segment1D};
pub use solver::{
    assemble_residual, simulate, simulate_from, steady_state, Model1D, SimulationOutput,
    SimulationReport, SolverConfig, SolverState,
};
pub use windkessel::{outlet_pressure, rcr_update, BcMode, RcrParams};

use alloc::format;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Blood dynamic viscosity (g / (cm s)).
pub const BLOOD_VISCOSITY: f64 = 0.04;
/// Blood density (g / cm^3).
pub const BLOOD_DENSITY: f64 = 1.06;
/// Blood kinematic viscosity (cm^2 / s).
pub const KINEMATIC_VISCOSITY: f64 = BLOOD_VISCOSITY / BLOOD_DENSITY;
/// Pressure conversion: barye per mmHg.
pub const BARYE_PER_MMHG: f64 = 1333.22;

/// Olufsen constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WallModel {
    /// barye
    pub k1: f64,
    /// 1/cm
    pub k2: f64,
    /// barye
    pub k3: f64,
}

impl WallModel {
    /// Effectively rigid wall: `k1 = 0` and a very large `k3`.
    pub fn rigid() -> Self {
        Self {
            k1: 0.0,
            k2: 0.0,
            k3: 3.0e9,
        }
    }

    pub fn stiffness(&self, r0: f64) -> f64 {
        4.0 / 3.0 * (self.k1 * libm::exp(self.k2 * r0) + self.k3)
    }

    pub fn validate(&self, r0: f64) -> Result<()> {
        let s = self.stiffness(r0);
        if !(s > 0.0) || !s.is_finite() {
            return Err(Error::Validation(format!("wall stiffness must be positive, got {s}")));
        }
        Ok(())
    }
}

/// `p0 + 4/3 (k1 exp(k2 r0) + k3) (1 - sqrt(A0 / A))`.
pub fn wall_pressure(wall: &WallModel, area: f64, a0: f64, r0: f64, p0: f64) -> Result<f64> {
    if !(area > 0.0) || !(a0 > 0.0) {
        return Err(Error::Domain(format!("areas must be positive, got A={area} A0={a0}")));
    }
    Ok(p0 + wall.stiffness(r0) * (1.0 - libm::sqrt(a0 / area)))
}

/// Inverse of [`wall_pressure`] in `A`.
pub fn area_from_pressure(wall: &WallModel, p: f64, a0: f64, r0: f64, p0: f64) -> Result<f64> {
    let s = wall.stiffness(r0);
    let ratio = 1.0 - (p - p0) / s;
    if !(ratio > 0.0) {
        return Err(Error::Domain(format!("pressure {p} exceeds the wall law range")));
    }
    Ok(a0 / (ratio * ratio))
}

/// Poiseuille resistance `8 mu L / (pi r^4)`.
pub fn poiseuille_resistance(mu: f64, length: f64, radius: f64) -> Result<f64> {
    if !(mu > 0.0 && length > 0.0 && radius > 0.0) {
        return Err(Error::Domain(format!(
            "mu, L and r must be positive, got mu={mu} L={length} r={radius}"
        )));
    }
    Ok(8.0 * mu * length / (core::f64::consts::PI * libm::pow(radius, 4.0)))
}
