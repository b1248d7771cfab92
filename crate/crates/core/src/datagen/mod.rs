//! Synthetic geometries, boundary-condition perturbation and ground-truth
//! trajectories from the 1D solver.

mod build;
mod geometry;
mod spline;

pub use build::{build_dataset, BuildConfig, Dataset, DatasetManifest, EntryStatus, ManifestEntry};
pub use geometry::{generate_geometry, GeneratedGeometry, GeometrySpec, InflowWaveform, Template};
pub use spline::{resample_trajectory, NaturalSpline};

use alloc::format;
use alloc::vec::Vec;
use rand::Rng;
use rand_distr::Uniform;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{NodeState, Trajectory};
use crate::hemo1d::RcrParams;

/// Inflow waveform and outlet parameters of one simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundarySet {
    pub inflow: InflowWaveform,
    /// One parameter group per outlet segment.
    pub outlets: Vec<RcrParams>,
}

/// Multipliers applied by [`perturb_bcs`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BcFactors {
    pub inlet: f64,
    pub outlets: Vec<f64>,
}

pub const PERTURBATION_RANGE: (f64, f64) = (0.8, 1.2);

/// Scales the inflow by `factors.inlet` and every parameter of outlet `i` by
/// `factors.outlets[i]`.
pub fn apply_factors(base: &BoundarySet, factors: &BcFactors) -> Result<BoundarySet> {
    if factors.outlets.len() != base.outlets.len() {
        return Err(Error::Dimension {
            expected: base.outlets.len(),
            got: factors.outlets.len(),
        });
    }
    let outlets = base
        .outlets
        .iter()
        .zip(&factors.outlets)
        .map(|(bc, &f)| {
            let mut bc = *bc;
            bc.rp *= f;
            bc.c *= f;
            bc.rd *= f;
            bc
        })
        .collect();
    Ok(BoundarySet {
        inflow: base.inflow.scaled(factors.inlet),
        outlets,
    })
}

/// Draws independent `U(0.8, 1.2)` factors for the inflow and each outlet.
pub fn perturb_bcs<R: Rng + ?Sized>(base: &BoundarySet, rng: &mut R) -> Result<(BoundarySet, BcFactors)> {
    let u = Uniform::new_inclusive(PERTURBATION_RANGE.0, PERTURBATION_RANGE.1)
        .map_err(|e| Error::Config(format!("{e}")))?;
    let inlet = rng.sample(u);
    let outlets = (0..base.outlets.len()).map(|_| rng.sample(u)).collect();
    let factors = BcFactors { inlet, outlets };
    Ok((apply_factors(base, &factors)?, factors))
}

/// `(1 - j / n) a + (j / n) b`
pub fn ramp_value(a: f64, b: f64, j: usize, n: usize) -> f64 {
    let s = j as f64 / n as f64;
    (1.0 - s) * a + s * b
}

/// The `steps` loading states that lead from the rest state `p = p_rest`,
/// `q = 0` towards `target`, flagged as loading.
pub fn loading_ramp(target: &NodeState, p_rest: f64, steps: usize) -> Vec<NodeState> {
    (0..steps)
        .map(|j| NodeState {
            p: target.p.iter().map(|&p| ramp_value(p_rest, p, j, steps)).collect(),
            q: target.q.iter().map(|&q| ramp_value(0.0, q, j, steps)).collect(),
            loading: true,
            k: j,
        })
        .collect()
}

/// Prepends a loading ramp of duration `t_l` to a cycle trajectory.
pub fn prepend_loading(trajectory: &Trajectory, p_min: f64, t_l: f64) -> Result<Trajectory> {
    if trajectory.loading_steps != 0 {
        return Err(Error::Validation("trajectory already has a loading phase".into()));
    }
    let dt = trajectory.dt;
    let steps_f = t_l / dt;
    let steps = libm::round(steps_f) as usize;
    if !(t_l >= 0.0) || (steps_f - steps as f64).abs() > 1e-6 {
        return Err(Error::Validation(format!(
            "loading time {t_l} is not a multiple of dt = {dt}"
        )));
    }
    let first = &trajectory.states[0];
    let mut states = loading_ramp(first, p_min, steps);
    let mut inflow: Vec<f64> = (0..steps)
        .map(|j| ramp_value(0.0, trajectory.inlet_flow[0], j, steps))
        .collect();
    for (j, s) in trajectory.states.iter().enumerate() {
        let mut s = s.clone();
        s.loading = false;
        s.k = steps + j;
        states.push(s);
    }
    inflow.extend_from_slice(&trajectory.inlet_flow);
    Trajectory::new(trajectory.graph_id.clone(), dt, states, inflow, steps)
}
