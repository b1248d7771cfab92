//! Lumped outlet models: three-element Windkessel (RCR) and pure resistance.
//!
//! Distal pressure is zero. The outlet pressure uses the circuit convention
//! `P = Pc + Rp * Q`, which reduces to `P = R * Q` when `C, Rd -> 0`.

use alloc::format;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BcMode {
    Rcr,
    Resistance,
}

/// Outlet boundary-condition parameters in CGS units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RcrParams {
    /// Proximal resistance (barye s / cm^3). Holds `R` in resistance mode.
    pub rp: f64,
    /// Capacitance (cm^3 / barye).
    pub c: f64,
    /// Distal resistance (barye s / cm^3).
    pub rd: f64,
    pub mode: BcMode,
}

impl RcrParams {
    pub fn rcr(rp: f64, c: f64, rd: f64) -> Result<Self> {
        let bc = Self {
            rp,
            c,
            rd,
            mode: BcMode::Rcr,
        };
        bc.validate()?;
        Ok(bc)
    }

    pub fn resistance(r: f64) -> Result<Self> {
        let bc = Self {
            rp: r,
            c: 0.0,
            rd: 0.0,
            mode: BcMode::Resistance,
        };
        bc.validate()?;
        Ok(bc)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rp >= 0.0) || !self.rp.is_finite() {
            return Err(Error::Validation(format!("Rp must be >= 0, got {}", self.rp)));
        }
        match self.mode {
            BcMode::Rcr => {
                if !(self.c > 0.0 && self.rd > 0.0) {
                    return Err(Error::Validation(format!(
                        "rcr mode requires C > 0 and Rd > 0, got C={} Rd={}",
                        self.c, self.rd
                    )));
                }
            }
            BcMode::Resistance => {
                if self.c != 0.0 || self.rd != 0.0 {
                    return Err(Error::Validation(
                        "resistance mode requires C = Rd = 0".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Multiplies every parameter of the group by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            rp: self.rp * factor,
            c: self.c * factor,
            rd: self.rd * factor,
            mode: self.mode,
        }
    }
}

/// One backward-Euler step of `dPc/dt = (Q - Pc/Rd) / C`.
pub fn rcr_update(bc: &RcrParams, pc: f64, q: f64, dt: f64) -> Result<f64> {
    if bc.mode != BcMode::Rcr {
        return Err(Error::Contract(
            "rcr_update called on a resistance outlet; use outlet_pressure".into(),
        ));
    }
    if !(dt > 0.0) {
        return Err(Error::Domain(format!("dt must be positive, got {dt}")));
    }
    Ok((pc + dt * q / bc.c) / (1.0 + dt / (bc.rd * bc.c)))
}

pub fn outlet_pressure(bc: &RcrParams, pc: f64, q: f64) -> f64 {
    match bc.mode {
        BcMode::Rcr => pc + bc.rp * q,
        BcMode::Resistance => bc.rp * q,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equilibrium_is_fixed_point() {
        let bc = RcrParams::rcr(100.0, 1e-3, 500.0).unwrap();
        let pc = 1000.0;
        let q = pc / bc.rd;
        let next = rcr_update(&bc, pc, q, 0.01).unwrap();
        assert!((next - pc).abs() < 1e-10);
    }

    #[test]
    fn step_response_matches_exponential() {
        // Pc(t) = Q Rd (1 - exp(-t / (Rd C)))
        let bc = RcrParams::rcr(0.0, 1.0, 1.0).unwrap();
        let dt = 1e-4;
        let mut pc = 0.0;
        for _ in 0..10_000 {
            pc = rcr_update(&bc, pc, 1.0, dt).unwrap();
        }
        let exact = 1.0 - libm::exp(-1.0);
        assert!((pc - exact).abs() < 1e-4, "pc = {pc}, exact = {exact}");
    }

    #[test]
    fn small_dt_consistency() {
        let bc = RcrParams::rcr(10.0, 2e-3, 300.0).unwrap();
        let (pc, q) = (250.0, 3.0);
        let rhs = (q - pc / bc.rd) / bc.c;
        for &dt in &[1e-3, 1e-4, 1e-5] {
            let next = rcr_update(&bc, pc, q, dt).unwrap();
            let slope = (next - pc) / dt;
            // backward Euler: |slope - rhs| = O(dt)
            assert!((slope - rhs).abs() < 1e3 * dt * rhs.abs().max(1.0), "dt={dt}");
        }
    }

    #[test]
    fn resistance_mode_rejects_update() {
        let bc = RcrParams::resistance(50.0).unwrap();
        assert!(matches!(rcr_update(&bc, 0.0, 1.0, 0.1), Err(Error::Contract(_))));
    }

    #[test]
    fn outlet_pressure_examples() {
        let r = RcrParams::resistance(50.0).unwrap();
        assert_eq!(outlet_pressure(&r, 0.0, 2.0), 100.0);
        let rcr = RcrParams::rcr(100.0, 1e-4, 1000.0).unwrap();
        assert_eq!(outlet_pressure(&rcr, 1000.0, 5.0), 1500.0);
        assert_eq!(outlet_pressure(&rcr, 1000.0, 0.0), 1000.0);
    }

    #[test]
    fn invalid_parameters() {
        assert!(RcrParams::rcr(-1.0, 1.0, 1.0).is_err());
        assert!(RcrParams::rcr(1.0, 0.0, 1.0).is_err());
        assert!(RcrParams::rcr(1.0, 1.0, 0.0).is_err());
        assert!(RcrParams::resistance(-3.0).is_err());
    }
}
