//! Implicit box-scheme discretization and Newton time stepping.
//!
//! Each cell `[z_a, z_b]` contributes the cell integral of the mass and
//! momentum equations with linear interpolation of `A` and `q`. The
//! second-derivative viscous term is rewritten through continuity
//! (`dq/dz = -dA/dt`) so it only needs nodal values. Every segment end
//! carries one boundary row: prescribed inflow, an outlet law, or a junction
//! condition (flow conservation plus static pressure continuity).

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{
    area_from_pressure, wall_pressure, BcMode, Geometry1D, RcrParams, WallModel,
    BLOOD_DENSITY, BARYE_PER_MMHG, KINEMATIC_VISCOSITY,
};
use crate::error::{Error, Result};
use crate::graph::{NodeState, Trajectory};

const P_REF: f64 = BARYE_PER_MMHG;
const Q_REF: f64 = 1.0;
const PI: f64 = core::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Time step (s).
    pub dt: f64,
    /// Threshold on the max-norm of the scaled residual.
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    /// cm^2 / s
    pub kinematic_viscosity: f64,
    /// g / cm^3
    pub density: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            newton_tol: 1e-8,
            newton_max_iter: 30,
            kinematic_viscosity: KINEMATIC_VISCOSITY,
            density: BLOOD_DENSITY,
        }
    }
}

impl SolverConfig {
    fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.newton_tol > 0.0) || self.newton_max_iter == 0 {
            return Err(Error::Config("newton tolerance and iteration cap must be positive".into()));
        }
        if !(self.kinematic_viscosity >= 0.0) || !(self.density > 0.0) {
            return Err(Error::Config("viscosity must be >= 0 and density > 0".into()));
        }
        Ok(())
    }
}

/// Geometry, wall law and one boundary condition per outlet segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model1D {
    pub geometry: Geometry1D,
    pub wall: WallModel,
    /// Keyed by outlet segment index.
    pub bcs: BTreeMap<usize, RcrParams>,
}

/// Solver unknowns. `pc` has one entry per outlet segment in ascending
/// segment order; resistance outlets keep 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverState {
    pub area: Vec<f64>,
    pub flow: Vec<f64>,
    pub pc: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub steps: usize,
    pub newton_iterations: usize,
    /// Largest converged residual norm over all steps.
    pub max_residual: f64,
    /// Largest `|q_parent - sum q_children|` over all junctions and steps (cm^3/s).
    pub max_junction_imbalance: f64,
    /// Largest pressure jump across a junction (barye).
    pub max_junction_pressure_jump: f64,
    /// Largest `|A - A0| / A0`.
    pub max_area_deviation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationOutput {
    pub trajectory: Trajectory,
    pub final_state: SolverState,
    pub report: SimulationReport,
}

struct Layout {
    offsets: Vec<usize>,
    nodes: usize,
    inlet_node: usize,
    outlets: Vec<usize>,
    /// Unknown index of `Pc` per outlet (None for resistance outlets).
    pc_slot: Vec<Option<usize>>,
    unknowns: usize,
}

impl Model1D {
    pub fn new(geometry: Geometry1D, wall: WallModel, bcs: BTreeMap<usize, RcrParams>) -> Result<Self> {
        let m = Self { geometry, wall, bcs };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        for s in &self.geometry.segments {
            for &r in &s.r0 {
                self.wall.validate(r)?;
            }
        }
        let outlets = self.geometry.outlet_segments();
        for o in &outlets {
            let bc = self
                .bcs
                .get(o)
                .ok_or_else(|| Error::Validation(format!("outlet segment {o} has no boundary condition")))?;
            bc.validate()?;
        }
        if self.bcs.keys().any(|k| !outlets.contains(k)) {
            return Err(Error::Validation("boundary condition on a non-outlet segment".into()));
        }
        Ok(())
    }

    fn layout(&self) -> Layout {
        let offsets = self.geometry.node_offsets();
        let nodes = self.geometry.num_nodes();
        let outlets = self.geometry.outlet_segments();
        let mut next = 2 * nodes;
        let pc_slot = outlets
            .iter()
            .map(|o| match self.bcs[o].mode {
                BcMode::Rcr => {
                    next += 1;
                    Some(next - 1)
                }
                BcMode::Resistance => None,
            })
            .collect();
        Layout {
            inlet_node: offsets[self.geometry.inlet_segment()],
            offsets,
            nodes,
            outlets,
            pc_slot,
            unknowns: next,
        }
    }

    /// Global node index of the last node of segment `s`.
    pub fn last_node(&self, s: usize) -> usize {
        self.geometry.node_offsets()[s] + self.geometry.segments[s].len() - 1
    }

    fn node_refs(&self) -> Vec<(f64, f64, f64)> {
        self.geometry
            .segments
            .iter()
            .flat_map(|s| (0..s.len()).map(move |i| (s.a0[i], s.r0[i], s.p0[i])))
            .collect()
    }

    /// Zero-flow state at the reference area, capacitors discharged.
    pub fn rest_state(&self) -> SolverState {
        SolverState {
            area: self.geometry.reference_areas(),
            flow: vec![0.0; self.geometry.num_nodes()],
            pc: vec![0.0; self.geometry.outlet_segments().len()],
        }
    }

    pub fn pressures(&self, state: &SolverState) -> Result<Vec<f64>> {
        self.node_refs()
            .iter()
            .zip(&state.area)
            .map(|(&(a0, r0, p0), &a)| wall_pressure(&self.wall, a, a0, r0, p0))
            .collect()
    }

    /// State reconstructed from nodal pressure and flow; capacitor pressure
    /// follows from the outlet law.
    pub fn state_from_pressure_flow(&self, p: &[f64], q: &[f64]) -> Result<SolverState> {
        let n = self.geometry.num_nodes();
        if p.len() != n || q.len() != n {
            return Err(Error::Dimension {
                expected: n,
                got: p.len().min(q.len()),
            });
        }
        let area = self
            .node_refs()
            .iter()
            .zip(p)
            .map(|(&(a0, r0, p0), &pi)| area_from_pressure(&self.wall, pi, a0, r0, p0))
            .collect::<Result<Vec<_>>>()?;
        let pc = self
            .geometry
            .outlet_segments()
            .iter()
            .map(|o| {
                let bc = &self.bcs[o];
                let g = self.last_node(*o);
                match bc.mode {
                    BcMode::Rcr => p[g] - bc.rp * q[g],
                    BcMode::Resistance => 0.0,
                }
            })
            .collect();
        Ok(SolverState {
            area,
            flow: q.to_vec(),
            pc,
        })
    }

    fn pack(&self, layout: &Layout, s: &SolverState) -> Result<Vec<f64>> {
        if s.area.len() != layout.nodes || s.flow.len() != layout.nodes || s.pc.len() != layout.outlets.len()
        {
            return Err(Error::Dimension {
                expected: layout.nodes,
                got: s.area.len(),
            });
        }
        let mut x = vec![0.0; layout.unknowns];
        for g in 0..layout.nodes {
            x[2 * g] = s.area[g];
            x[2 * g + 1] = s.flow[g];
        }
        for (k, slot) in layout.pc_slot.iter().enumerate() {
            if let Some(j) = slot {
                x[*j] = s.pc[k];
            }
        }
        Ok(x)
    }

    fn unpack(&self, layout: &Layout, x: &[f64]) -> SolverState {
        SolverState {
            area: (0..layout.nodes).map(|g| x[2 * g]).collect(),
            flow: (0..layout.nodes).map(|g| x[2 * g + 1]).collect(),
            pc: layout.pc_slot.iter().map(|s| s.map_or(0.0, |j| x[j])).collect(),
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn residual_into(
        &self,
        layout: &Layout,
        refs: &[(f64, f64, f64)],
        x: &[f64],
        prev: &[f64],
        q_in: f64,
        config: &SolverConfig,
        out: &mut Vec<f64>,
    ) -> Result<()> {
        out.clear();
        let (dt, nu, rho) = (config.dt, config.kinematic_viscosity, config.density);
        let pressure = |g: usize| -> Result<f64> {
            let (a0, r0, p0) = refs[g];
            wall_pressure(&self.wall, x[2 * g], a0, r0, p0)
        };
        for (s, seg) in self.geometry.segments.iter().enumerate() {
            let off = layout.offsets[s];
            for c in 0..seg.len() - 1 {
                let (a, b) = (off + c, off + c + 1);
                let h = seg.z[c + 1] - seg.z[c];
                let (aa, ab, qa, qb) = (x[2 * a], x[2 * b], x[2 * a + 1], x[2 * b + 1]);
                let (aa0, ab0, qa0, qb0) = (prev[2 * a], prev[2 * b], prev[2 * a + 1], prev[2 * b + 1]);
                let (pa, pb) = (pressure(a)?, pressure(b)?);
                let cont = 0.5 * h * ((aa - aa0) + (ab - ab0)) / dt + (qb - qa);
                out.push(cont / Q_REF);
                let flux = |q: f64, area: f64| 4.0 / 3.0 * q * q / area;
                let mom = 0.5 * h * ((qa - qa0) + (qb - qb0)) / dt
                    + (flux(qb, ab) - flux(qa, aa))
                    + 0.5 * h * 8.0 * PI * nu * (qa / aa + qb / ab)
                    + nu * ((ab - ab0) - (aa - aa0)) / dt
                    + 0.5 * (aa + ab) / rho * (pb - pa);
                out.push(mom / (0.5 * (aa + ab) / rho * P_REF));
            }
        }
        out.push((x[2 * layout.inlet_node + 1] - q_in) / Q_REF);
        for j in &self.geometry.junctions {
            let gp = self.last_node(j.parent);
            let mut balance = x[2 * gp + 1];
            for &c in &j.children {
                balance -= x[2 * layout.offsets[c] + 1];
            }
            out.push(balance / Q_REF);
            let pp = pressure(gp)?;
            for &c in &j.children {
                out.push((pp - pressure(layout.offsets[c])?) / P_REF);
            }
        }
        for (k, o) in layout.outlets.iter().enumerate() {
            let bc = &self.bcs[o];
            let g = self.last_node(*o);
            let (p, q) = (pressure(g)?, x[2 * g + 1]);
            match layout.pc_slot[k] {
                Some(j) => {
                    let pc = x[j];
                    out.push((p - pc - bc.rp * q) / P_REF);
                    out.push((bc.c * (pc - prev[j]) / dt - q + pc / bc.rd) * bc.rd / P_REF);
                }
                None => out.push((p - bc.rp * q) / P_REF),
            }
        }
        debug_assert_eq!(out.len(), layout.unknowns);
        if out.iter().any(|r| !r.is_finite()) {
            return Err(Error::Numerical("non-finite residual".into()));
        }
        Ok(())
    }

    /// One implicit step from `prev`; returns the new unknowns, the number of
    /// Newton iterations and the final residual norm.
    #[allow(clippy::too_many_arguments)]
    fn newton_step(
        &self,
        layout: &Layout,
        refs: &[(f64, f64, f64)],
        prev: &[f64],
        q_in: f64,
        config: &SolverConfig,
        step: usize,
    ) -> Result<(Vec<f64>, usize, f64)> {
        let n = layout.unknowns;
        let mut x = prev.to_vec();
        let mut r = Vec::with_capacity(n);
        self.residual_into(layout, refs, &x, prev, q_in, config, &mut r)?;
        let mut norm = inf_norm(&r);
        let mut scratch = Vec::with_capacity(n);
        let mut jac = DMatrix::<f64>::zeros(n, n);
        for it in 0..config.newton_max_iter {
            if norm <= config.newton_tol {
                return Ok((x, it, norm));
            }
            for col in 0..n {
                let scale = if col < 2 * layout.nodes && col % 2 == 0 {
                    refs[col / 2].0
                } else if col < 2 * layout.nodes {
                    1.0
                } else {
                    P_REF
                };
                let h = 1e-7 * x[col].abs().max(scale);
                let saved = x[col];
                x[col] = saved + h;
                let hh = x[col] - saved;
                self.residual_into(layout, refs, &x, prev, q_in, config, &mut scratch)?;
                x[col] = saved;
                for row in 0..n {
                    jac[(row, col)] = (scratch[row] - r[row]) / hh;
                }
            }
            let rhs = DVector::from_iterator(n, r.iter().map(|v| -v));
            let dx = jac
                .clone()
                .lu()
                .solve(&rhs)
                .ok_or_else(|| Error::Numerical(format!("singular Jacobian at step {step}")))?;
            let mut lambda = 1.0;
            let mut trial = vec![0.0; n];
            loop {
                for i in 0..n {
                    trial[i] = x[i] + lambda * dx[i];
                }
                let positive = (0..layout.nodes).all(|g| trial[2 * g] > 0.0);
                if positive
                    && self
                        .residual_into(layout, refs, &trial, prev, q_in, config, &mut scratch)
                        .is_ok()
                {
                    let trial_norm = inf_norm(&scratch);
                    if trial_norm < norm || lambda < 1.0 / 64.0 {
                        break;
                    }
                }
                lambda *= 0.5;
                if lambda < 1e-6 {
                    return Err(Error::Solver {
                        step,
                        residual: norm,
                        iterations: it + 1,
                    });
                }
            }
            core::mem::swap(&mut x, &mut trial);
            core::mem::swap(&mut r, &mut scratch);
            norm = inf_norm(&r);
        }
        if norm <= config.newton_tol {
            return Ok((x, config.newton_max_iter, norm));
        }
        Err(Error::Solver {
            step,
            residual: norm,
            iterations: config.newton_max_iter,
        })
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Scaled residual of one implicit step from `prev` to `state` with inlet
/// flow `q_in` at the new time level.
///
/// Row order: per segment, mass and momentum rows of each cell; then the
/// inlet row; per junction, flow conservation followed by one pressure row
/// per child; per outlet, the outlet-law row and (RCR only) the capacitor row.
pub fn assemble_residual(
    model: &Model1D,
    state: &SolverState,
    prev: &SolverState,
    q_in: f64,
    config: &SolverConfig,
) -> Result<Vec<f64>> {
    let layout = model.layout();
    let x = model.pack(&layout, state)?;
    let xp = model.pack(&layout, prev)?;
    if x.iter().chain(&xp).any(|v| !v.is_finite()) || !q_in.is_finite() {
        return Err(Error::Numerical("non-finite state".into()));
    }
    let mut out = Vec::with_capacity(layout.unknowns);
    model.residual_into(&layout, &model.node_refs(), &x, &xp, q_in, config, &mut out)?;
    Ok(out)
}

fn node_state(model: &Model1D, s: &SolverState, k: usize) -> Result<NodeState> {
    NodeState::new(model.pressures(s)?, s.flow.clone(), false, k)
}

/// Integrates from `initial` over `t_end` seconds. `inflow[k]` is the inlet
/// flow at `t = k dt`; entry 0 is only recorded.
pub fn simulate_from(
    model: &Model1D,
    initial: &SolverState,
    inflow: &[f64],
    t_end: f64,
    config: &SolverConfig,
) -> Result<SimulationOutput> {
    config.validate()?;
    model.validate()?;
    let steps_f = t_end / config.dt;
    let steps = libm::round(steps_f) as usize;
    if !(t_end >= 0.0) || (steps_f - steps as f64).abs() > 1e-6 {
        return Err(Error::Validation(format!(
            "duration {t_end} is not a multiple of dt = {}",
            config.dt
        )));
    }
    if inflow.len() < steps + 1 {
        return Err(Error::Validation(format!(
            "inflow has {} samples, {} required",
            inflow.len(),
            steps + 1
        )));
    }
    let layout = model.layout();
    let refs = model.node_refs();
    let mut x = model.pack(&layout, initial)?;
    let mut states = Vec::with_capacity(steps + 1);
    states.push(node_state(model, initial, 0)?);
    let mut report = SimulationReport {
        steps,
        ..Default::default()
    };
    for k in 1..=steps {
        let (next, iters, res) = model.newton_step(&layout, &refs, &x, inflow[k], config, k)?;
        x = next;
        report.newton_iterations += iters;
        report.max_residual = report.max_residual.max(res);
        let s = model.unpack(&layout, &x);
        let p = model.pressures(&s)?;
        for j in &model.geometry.junctions {
            let gp = model.last_node(j.parent);
            let mut balance = s.flow[gp];
            for &c in &j.children {
                let gc = layout.offsets[c];
                balance -= s.flow[gc];
                report.max_junction_pressure_jump =
                    report.max_junction_pressure_jump.max((p[gp] - p[gc]).abs());
            }
            report.max_junction_imbalance = report.max_junction_imbalance.max(balance.abs());
        }
        for (g, &(a0, _, _)) in refs.iter().enumerate() {
            report.max_area_deviation = report.max_area_deviation.max((s.area[g] - a0).abs() / a0);
        }
        states.push(NodeState::new(p, s.flow, false, k)?);
    }
    let trajectory = Trajectory::new(
        String::new(),
        config.dt,
        states,
        inflow[..=steps].to_vec(),
        0,
    )?;
    Ok(SimulationOutput {
        trajectory,
        final_state: model.unpack(&layout, &x),
        report,
    })
}

/// Integrates from the rest state.
pub fn simulate(model: &Model1D, inflow: &[f64], t_end: f64, config: &SolverConfig) -> Result<SimulationOutput> {
    simulate_from(model, &model.rest_state(), inflow, t_end, config)
}

/// Steady solution under constant inflow `q`, reached by large implicit
/// pseudo-time steps.
pub fn steady_state(model: &Model1D, q: f64, config: &SolverConfig) -> Result<SolverState> {
    let tau = model
        .bcs
        .values()
        .filter(|bc| bc.mode == BcMode::Rcr)
        .map(|bc| bc.rd * bc.c)
        .fold(0.0, f64::max);
    let pseudo = SolverConfig {
        dt: (5.0 * tau).max(1.0),
        ..*config
    };
    let layout = model.layout();
    let refs = model.node_refs();
    let mut x = model.pack(&layout, &model.rest_state())?;
    for k in 1..=40 {
        x = model.newton_step(&layout, &refs, &x, q, &pseudo, k)?.0;
    }
    Ok(model.unpack(&layout, &x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hemo1d::{poiseuille_resistance, Junction1D, Segment1D, BLOOD_VISCOSITY};

    fn tube(length: f64, radius: f64, n: usize, bc: RcrParams) -> Model1D {
        let g = Geometry1D::single(Segment1D::uniform(length, radius, n, 0.0)).unwrap();
        let mut bcs = BTreeMap::new();
        bcs.insert(0, bc);
        Model1D::new(g, WallModel::rigid(), bcs).unwrap()
    }

    fn bifurcation() -> Model1D {
        let g = Geometry1D::new(
            vec![
                Segment1D::tapered(5.0, 1.0, 0.9, 6, 0.0),
                Segment1D::uniform(4.0, 0.6, 5, 0.0),
                Segment1D::uniform(4.0, 0.55, 5, 0.0),
            ],
            vec![Junction1D {
                parent: 0,
                children: vec![1, 2],
            }],
        )
        .unwrap();
        let mut bcs = BTreeMap::new();
        bcs.insert(1, RcrParams::rcr(1600.0, 7e-5, 14400.0).unwrap());
        bcs.insert(2, RcrParams::resistance(18000.0).unwrap());
        Model1D::new(g, WallModel::rigid(), bcs).unwrap()
    }

    #[test]
    fn rest_state_has_zero_residual() {
        let m = tube(10.0, 1.0, 8, RcrParams::resistance(100.0).unwrap());
        let s = m.rest_state();
        let r = assemble_residual(&m, &s, &s, 0.0, &SolverConfig::default()).unwrap();
        assert_eq!(r.len(), 16);
        assert!(r.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn junction_conservation_row() {
        let m = bifurcation();
        let mut s = m.rest_state();
        let (gp, c1, c2) = (m.last_node(0), 6, 11);
        s.flow[gp] = 3.0;
        s.flow[c1] = 1.0;
        s.flow[c2] = 2.0;
        let r = assemble_residual(&m, &s, &s, 0.0, &SolverConfig::default()).unwrap();
        // cells: 5 + 4 + 4 = 13, two rows each, then the inlet row
        let junction_row = 2 * 13 + 1;
        assert_eq!(r[junction_row], 0.0);
        s.flow[c2] = 2.5;
        let r = assemble_residual(&m, &s, &s, 0.0, &SolverConfig::default()).unwrap();
        assert!((r[junction_row] + 0.5).abs() < 1e-15);
    }

    #[test]
    fn steady_poiseuille_profile_zero_momentum_residual() {
        // Linear p0 with A = A0 carries the analytic pressure gradient.
        let (length, radius, n, q) = (10.0, 1.0, 11, 5.0);
        let mut seg = Segment1D::uniform(length, radius, n, 0.0);
        let area = PI * radius * radius;
        let grad = -8.0 * PI * KINEMATIC_VISCOSITY * BLOOD_DENSITY * q / (area * area);
        for i in 0..n {
            seg.p0[i] = 1e5 + grad * seg.z[i];
        }
        let mut bcs = BTreeMap::new();
        bcs.insert(0, RcrParams::resistance(1.0).unwrap());
        let m = Model1D::new(Geometry1D::single(seg).unwrap(), WallModel::rigid(), bcs).unwrap();
        let mut s = m.rest_state();
        s.flow = vec![q; n];
        let r = assemble_residual(&m, &s, &s, q, &SolverConfig::default()).unwrap();
        for c in 0..n - 1 {
            assert!(r[2 * c].abs() < 1e-12);
            assert!(r[2 * c + 1].abs() < 1e-8, "cell {c}: {}", r[2 * c + 1]);
        }
    }

    #[test]
    fn nan_state_rejected() {
        let m = tube(1.0, 1.0, 3, RcrParams::resistance(1.0).unwrap());
        let mut s = m.rest_state();
        s.flow[1] = f64::NAN;
        assert!(matches!(
            assemble_residual(&m, &s, &m.rest_state(), 0.0, &SolverConfig::default()),
            Err(Error::Numerical(_))
        ));
    }

    #[test]
    fn poiseuille_drop() {
        let (length, radius, q) = (10.0, 1.0, 5.0);
        let m = tube(length, radius, 50, RcrParams::resistance(200.0).unwrap());
        let cfg = SolverConfig::default();
        let inflow = vec![q; 501];
        let out = simulate(&m, &inflow, 0.5, &cfg).unwrap();
        let last = out.trajectory.states.last().unwrap();
        let drop = last.p[0] - last.p[49];
        let exact = poiseuille_resistance(BLOOD_VISCOSITY, length, radius).unwrap() * q;
        assert!(((drop - exact) / exact).abs() < 0.01, "drop {drop} vs {exact}");
        assert!(out.report.max_area_deviation < 1e-3);
        assert!(out.report.max_residual <= cfg.newton_tol);
    }

    #[test]
    fn refinement_reduces_tapered_error() {
        // Exact drop: integral of 8 mu q / (pi r(z)^4) with linear r.
        let (length, r_in, r_out, q) = (10.0, 1.0, 0.5, 2.0);
        let exact = 8.0 * BLOOD_VISCOSITY * q / PI * length / (3.0 * (r_out - r_in))
            * (1.0 / (r_in * r_in * r_in) - 1.0 / (r_out * r_out * r_out));
        let error = |n: usize| {
            let g = Geometry1D::single(Segment1D::tapered(length, r_in, r_out, n, 0.0)).unwrap();
            let mut bcs = BTreeMap::new();
            bcs.insert(0, RcrParams::resistance(100.0).unwrap());
            let m = Model1D::new(g, WallModel::rigid(), bcs).unwrap();
            let s = steady_state(&m, q, &SolverConfig::default()).unwrap();
            let p = m.pressures(&s).unwrap();
            // convective pressure recovery from the area change, Bernoulli-like
            let a = |r: f64| PI * r * r;
            let conv = 4.0 / 3.0 * BLOOD_DENSITY * q * q / 2.0 * (1.0 / (a(r_out) * a(r_out)) - 1.0 / (a(r_in) * a(r_in)));
            ((p[0] - p[n - 1]) - exact - conv).abs()
        };
        let (coarse, fine) = (error(6), error(11));
        assert!(fine < coarse, "coarse {coarse}, fine {fine}");
    }

    #[test]
    fn windkessel_step_response() {
        let (rp, c, rd, q) = (100.0, 1e-3, 1000.0, 2.0);
        let m = tube(1.0, 2.0, 3, RcrParams::rcr(rp, c, rd).unwrap());
        let cfg = SolverConfig::default();
        let mut inflow = vec![q; 1001];
        inflow[0] = 0.0;
        let out = simulate(&m, &inflow, 1.0, &cfg).unwrap();
        for (k, s) in out.trajectory.states.iter().enumerate().skip(2) {
            let t = k as f64 * cfg.dt;
            let exact = q * rp + q * rd * (1.0 - libm::exp(-t / (rd * c)));
            assert!(((s.p[2] - exact) / exact).abs() < 0.01, "t={t}: {} vs {exact}", s.p[2]);
        }
    }

    #[test]
    fn bifurcation_conserves_mass() {
        let m = bifurcation();
        let cfg = SolverConfig {
            dt: 0.0025,
            ..Default::default()
        };
        let init = steady_state(&m, 10.0, &cfg).unwrap();
        let inflow: Vec<f64> = (0..=200)
            .map(|k| 10.0 + 5.0 * libm::sin(2.0 * PI * k as f64 * cfg.dt / 0.5))
            .collect();
        let out = simulate_from(&m, &init, &inflow, 0.5, &cfg).unwrap();
        assert!(out.report.max_junction_imbalance < 1e-8);
        assert!(out.report.max_area_deviation < 1e-3);
        assert!(out.report.max_junction_pressure_jump < 1e-3);
        for (s, q) in out.trajectory.states.iter().zip(&inflow).skip(1) {
            assert!((s.q[0] - q).abs() < 1e-8);
        }
        // re-simulating from the reconstructed state reproduces the trajectory
        let st = &out.trajectory.states[0];
        let rebuilt = m.state_from_pressure_flow(&st.p, &st.q).unwrap();
        let again = simulate_from(&m, &rebuilt, &inflow, 0.5, &cfg).unwrap();
        let (a, b) = (out.trajectory.states.last().unwrap(), again.trajectory.states.last().unwrap());
        for i in 0..a.p.len() {
            assert!((a.p[i] - b.p[i]).abs() < 1e-3 * a.p[i].abs().max(1.0));
        }
    }

    #[test]
    fn steady_state_matches_lumped_resistance() {
        let m = bifurcation();
        let cfg = SolverConfig::default();
        let s = steady_state(&m, 12.0, &cfg).unwrap();
        // Pc = Rd q at equilibrium
        let g = m.last_node(1);
        assert!((s.pc[0] - 14400.0 * s.flow[g]).abs() < 1e-6 * s.pc[0]);
        let p = m.pressures(&s).unwrap();
        assert!((p[m.last_node(2)] - 18000.0 * s.flow[m.last_node(2)]).abs() < 1e-3);
    }

    #[test]
    fn newton_failure_reports_step() {
        let m = tube(10.0, 1.0, 10, RcrParams::resistance(100.0).unwrap());
        let cfg = SolverConfig {
            newton_max_iter: 1,
            ..Default::default()
        };
        let inflow = vec![50.0; 11];
        match simulate(&m, &inflow, 0.01, &cfg) {
            Err(Error::Solver { step, iterations, .. }) => {
                assert_eq!(step, 1);
                assert_eq!(iterations, 1);
            }
            other => panic!("expected solver error, got {other:?}"),
        }
    }
}
