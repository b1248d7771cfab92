//! Rollout error metrics, confidence intervals, feature sensitivity and the
//! 1D re-simulation used for model comparison.

use alloc::format;
use alloc::vec::Vec;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::datagen::{GeneratedGeometry, NaturalSpline};
use crate::error::{Error, Result};
use crate::graph::{CenterlineGraph, FeatureGroup, NodeState, NodeType, Trajectory};
use crate::hemo1d::{simulate_from, SolverConfig};
use crate::mgn::{rollout_prepared, GnnModel, InputPerturbation, Schedule};
use crate::nn::Matrix;

/// Relative squared errors `(e_p, e_q)` of `predicted` against `truth` over
/// branch nodes and the cycle steps after the first cycle state.
pub fn trajectory_errors(graph: &CenterlineGraph, truth: &Trajectory, predicted: &Trajectory) -> Result<(f64, f64)> {
    if truth.len() != predicted.len() || truth.num_nodes() != predicted.num_nodes() {
        return Err(Error::Dimension {
            expected: truth.len(),
            got: predicted.len(),
        });
    }
    let branch: Vec<usize> = (0..graph.num_nodes())
        .filter(|&i| graph.node_type(i) == NodeType::Branch)
        .collect();
    let (mut np, mut dp, mut nq, mut dq) = (0.0, 0.0, 0.0, 0.0);
    for k in truth.loading_steps + 1..truth.len() {
        let (t, p) = (&truth.states[k], &predicted.states[k]);
        for &i in &branch {
            np += (t.p[i] - p.p[i]).powi(2);
            dp += t.p[i] * t.p[i];
            nq += (t.q[i] - p.q[i]).powi(2);
            dq += t.q[i] * t.q[i];
        }
    }
    if !(dp > 0.0) || !(dq > 0.0) {
        return Err(Error::Domain("ground truth vanishes on the branch nodes".into()));
    }
    Ok((np / dp, nq / dq))
}

/// Rolls the model out from the first state over the whole trajectory and
/// returns `(e_p, e_q)`.
pub fn rollout_errors(model: &GnnModel, graph: &CenterlineGraph, trajectory: &Trajectory) -> Result<(f64, f64)> {
    let pred = model_rollout(model, graph, trajectory, None)?;
    trajectory_errors(graph, trajectory, &pred)
}

/// Full-length rollout driven by the trajectory's inlet series.
pub fn model_rollout(
    model: &GnnModel,
    graph: &CenterlineGraph,
    trajectory: &Trajectory,
    perturb: Option<&mut dyn InputPerturbation>,
) -> Result<Trajectory> {
    let g = model.prepare(graph)?;
    let m = trajectory.len() - 1;
    rollout_prepared(
        model,
        &g,
        &trajectory.states[0],
        &trajectory.inlet_flow[1..],
        Schedule::of(trajectory),
        m,
        perturb,
    )
}

/// Mean with a normal-approximation 95% interval `mean +- 1.96 s / sqrt(n)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub mean: f64,
    pub low: f64,
    pub high: f64,
    pub n: usize,
}

pub fn confidence_interval(values: &[f64]) -> Result<Interval> {
    let n = values.len();
    if n == 0 {
        return Err(Error::Validation("confidence interval of no values".into()));
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let half = if n > 1 {
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        1.96 * libm::sqrt(var / n as f64)
    } else {
        0.0
    };
    Ok(Interval {
        mean,
        low: mean - half,
        high: mean + half,
        n,
    })
}

impl Interval {
    pub fn overlaps(&self, other: &Interval) -> bool {
        self.low <= other.high && other.low <= self.high
    }
}

/// Gaussian noise on the encoder-input columns of one feature group.
pub struct FeatureNoise<'a, R: Rng + ?Sized> {
    columns: Vec<usize>,
    edge: bool,
    std: f64,
    rng: &'a mut R,
}

impl<'a, R: Rng + ?Sized> FeatureNoise<'a, R> {
    /// Noise with standard deviation `sigma / width` on every channel of
    /// `feature` that the model reads.
    pub fn new(model: &GnnModel, feature: FeatureGroup, sigma: f64, rng: &'a mut R) -> Result<Self> {
        let chans = if feature.is_edge() {
            model.config().edge_channels()
        } else {
            model.config().node_channels()
        };
        let range = feature.channels();
        let columns: Vec<usize> = chans
            .iter()
            .enumerate()
            .filter(|(_, c)| range.contains(c))
            .map(|(k, _)| k)
            .collect();
        if columns.is_empty() {
            return Err(Error::Config(format!(
                "feature `{}` is not an input of this model",
                feature.name()
            )));
        }
        Ok(Self {
            columns,
            edge: feature.is_edge(),
            std: sigma / range.len() as f64,
            rng,
        })
    }

    fn apply(&mut self, x: &mut Matrix) {
        for i in 0..x.rows {
            let row = x.row_mut(i);
            for &c in &self.columns {
                let z: f64 = self.rng.sample(StandardNormal);
                row[c] += self.std * z;
            }
        }
    }
}

impl<R: Rng + ?Sized> InputPerturbation for FeatureNoise<'_, R> {
    fn perturb_nodes(&mut self, x: &mut Matrix) {
        if !self.edge {
            self.apply(x);
        }
    }

    fn perturb_edges(&mut self, w: &mut Matrix) -> bool {
        if self.edge {
            self.apply(w);
        }
        self.edge
    }
}

/// Ratios of the errors with noise on `feature` to the baseline errors
/// `baseline = (e_p, e_q)`.
pub fn sensitivity_factor<R: Rng + ?Sized>(
    model: &GnnModel,
    graph: &CenterlineGraph,
    trajectory: &Trajectory,
    feature: FeatureGroup,
    sigma: f64,
    baseline: (f64, f64),
    rng: &mut R,
) -> Result<(f64, f64)> {
    if !(baseline.0 > 0.0) || !(baseline.1 > 0.0) {
        return Err(Error::Domain("sensitivity factor undefined for a zero baseline error".into()));
    }
    let mut noise = FeatureNoise::new(model, feature, sigma, rng)?;
    let pred = model_rollout(model, graph, trajectory, Some(&mut noise))?;
    let (ep, eq) = trajectory_errors(graph, trajectory, &pred)?;
    Ok((ep / baseline.0, eq / baseline.1))
}

/// Re-simulates the cycle of `trajectory` with the 1D solver from its first
/// cycle state, and returns the prediction on the graph nodes at the
/// trajectory's time step (loading states copied from the ground truth).
pub fn one_d_rollout(
    gen: &GeneratedGeometry,
    graph: &CenterlineGraph,
    trajectory: &Trajectory,
    solver: &SolverConfig,
) -> Result<Trajectory> {
    let model = gen.model_with(&gen.outlet_params(graph)?)?;
    let ls = trajectory.loading_steps;
    let start = &trajectory.states[ls];
    let (p1, q1) = gen.lift(&start.p, &start.q);
    let initial = model.state_from_pressure_flow(&p1, &q1)?;
    let m = trajectory.cycle_steps();
    let ratio_f = trajectory.dt / solver.dt;
    let ratio = libm::round(ratio_f) as usize;
    if ratio == 0 || (ratio_f - ratio as f64).abs() > 1e-6 {
        return Err(Error::Config("trajectory dt must be a multiple of the solver dt".into()));
    }
    let t: Vec<f64> = (0..=m).map(|j| j as f64 * trajectory.dt).collect();
    let spline = NaturalSpline::new(&t, &trajectory.inlet_flow[ls..])?;
    let inflow: Vec<f64> = (0..=m * ratio).map(|k| spline.eval(k as f64 * solver.dt)).collect();
    let out = simulate_from(&model, &initial, &inflow, (m * ratio) as f64 * solver.dt, solver)?;
    let mut states: Vec<NodeState> = trajectory.states[..ls].to_vec();
    for j in 0..=m {
        let s = &out.trajectory.states[j * ratio];
        let mut q = gen.project(&s.q);
        q[graph.inlet()] = trajectory.inlet_flow[ls + j];
        states.push(NodeState::new(gen.project(&s.p), q, false, ls + j)?);
    }
    Trajectory::new(
        trajectory.graph_id.clone(),
        trajectory.dt,
        states,
        trajectory.inlet_flow.clone(),
        ls,
    )
}
