use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::engine::{self, InputPerturbation};
use super::model::{GnnModel, PreparedGraph};
use crate::error::{Error, Result};
use crate::graph::{CenterlineGraph, NodeState, Trajectory};
use crate::nn::Matrix;

/// Node and edge latents after iteration `iteration`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentGraph {
    pub nodes: Matrix,
    pub edges: Matrix,
    pub iteration: usize,
}

fn check_state(g: &PreparedGraph, state: &NodeState) -> Result<()> {
    if state.num_nodes() != g.num_nodes {
        return Err(Error::Dimension {
            expected: g.num_nodes,
            got: state.num_nodes(),
        });
    }
    Ok(())
}

/// Latents at iteration 0 for the given state.
pub fn encode(model: &GnnModel, graph: &CenterlineGraph, state: &NodeState) -> Result<LatentGraph> {
    let g = model.prepare(graph)?;
    check_state(&g, state)?;
    let x = engine::node_inputs(model, &g, &state.p, &state.q, &[state.loading]);
    let (nodes, _) = model.node_encoder().forward(&x)?;
    let (edges, _) = engine::encode_edges(model, &g.edge_inputs)?;
    Ok(LatentGraph {
        nodes,
        edges,
        iteration: 0,
    })
}

/// Message-passing iteration `l` (1-based), applied to latents at `l - 1`.
pub fn process_step(model: &GnnModel, graph: &CenterlineGraph, latents: &LatentGraph, l: usize) -> Result<LatentGraph> {
    let iters = model.config().iterations;
    if l == 0 || l > iters || latents.iteration + 1 != l {
        return Err(Error::Validation(format!(
            "iteration {l} invalid for latents at {} (L = {iters})",
            latents.iteration
        )));
    }
    let g = model.prepare(graph)?;
    if latents.nodes.rows != g.num_nodes || latents.edges.rows != g.num_edges() {
        return Err(Error::Dimension {
            expected: g.num_nodes,
            got: latents.nodes.rows,
        });
    }
    let (nodes, edges, _, _) = engine::process(model, &g, l - 1, &latents.nodes, &latents.edges)?;
    Ok(LatentGraph {
        nodes,
        edges,
        iteration: l,
    })
}

/// Physical increments `(dp, dq)` per node.
pub fn decode(model: &GnnModel, latents: &LatentGraph) -> Result<Vec<[f64; 2]>> {
    let (y, _) = model.decoder().forward(&latents.nodes)?;
    let out = &model.stats().output;
    Ok((0..y.rows)
        .map(|i| [out.inverse_channel(0, y.get(i, 0)), out.inverse_channel(1, y.get(i, 1))])
        .collect())
}

/// Advances one step. `next_loading` is the loading flag of the new state.
pub fn gnn_step(
    model: &GnnModel,
    graph: &CenterlineGraph,
    state: &NodeState,
    next_inlet_flow: f64,
    next_loading: bool,
) -> Result<NodeState> {
    let g = model.prepare(graph)?;
    let (w0, _) = engine::encode_edges(model, &g.edge_inputs)?;
    step_prepared(model, &g, &w0, state, next_inlet_flow, next_loading, None)
}

fn step_prepared(
    model: &GnnModel,
    g: &PreparedGraph,
    w0: &Matrix,
    state: &NodeState,
    next_inlet_flow: f64,
    next_loading: bool,
    perturb: Option<&mut dyn InputPerturbation>,
) -> Result<NodeState> {
    check_state(g, state)?;
    let diverged = |_| Error::RolloutDivergence { step: state.k + 1 };
    let out = engine::step_forward(model, g, w0, &state.p, &state.q, &[state.loading], perturb, false)
        .map_err(diverged)?;
    let mut p = state.p.clone();
    let mut q = state.q.clone();
    for i in 0..p.len() {
        p[i] += out.dp[i];
        q[i] += out.dq[i];
    }
    q[g.inlets[0]] = next_inlet_flow;
    let next = NodeState {
        p,
        q,
        loading: next_loading,
        k: state.k + 1,
    };
    if !next.is_finite() {
        return Err(Error::RolloutDivergence { step: next.k });
    }
    Ok(next)
}

/// Time step and loading-phase length of a rollout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Schedule {
    pub dt: f64,
    /// States with absolute index `k < loading_steps` carry the loading flag.
    pub loading_steps: usize,
}

impl Schedule {
    pub fn of(trajectory: &Trajectory) -> Self {
        Self {
            dt: trajectory.dt,
            loading_steps: trajectory.loading_steps,
        }
    }
}

/// Applies the model `m` times. `inlet_series[j]` is the prescribed inlet
/// flow of the `j + 1`-th new state.
pub fn rollout(
    model: &GnnModel,
    graph: &CenterlineGraph,
    initial: &NodeState,
    inlet_series: &[f64],
    schedule: Schedule,
    m: usize,
) -> Result<Trajectory> {
    let g = model.prepare(graph)?;
    rollout_prepared(model, &g, initial, inlet_series, schedule, m, None)
}

/// [`rollout`] on a prepared graph, with an optional input perturbation.
pub fn rollout_prepared(
    model: &GnnModel,
    g: &PreparedGraph,
    initial: &NodeState,
    inlet_series: &[f64],
    schedule: Schedule,
    m: usize,
    mut perturb: Option<&mut dyn InputPerturbation>,
) -> Result<Trajectory> {
    check_state(g, initial)?;
    if inlet_series.len() < m {
        return Err(Error::Validation(format!(
            "inlet series has {} entries for {m} steps",
            inlet_series.len()
        )));
    }
    let (mut w0, _) = engine::encode_edges(model, &g.edge_inputs)?;
    let mut states = Vec::with_capacity(m + 1);
    states.push(initial.clone());
    for j in 0..m {
        if let Some(h) = perturb.as_mut() {
            let mut e = g.edge_inputs.clone();
            if h.perturb_edges(&mut e) {
                w0 = engine::encode_edges(model, &e)?.0;
            }
        }
        let cur = &states[j];
        let k = cur.k + 1;
        let next = step_prepared(model, g, &w0, cur, inlet_series[j], k < schedule.loading_steps, perturb.as_mut().map(|h| &mut **h as &mut dyn InputPerturbation))?;
        states.push(next);
    }
    let inlet = g.inlets[0];
    let mut inlet_flow = vec![initial.q[inlet]];
    inlet_flow.extend_from_slice(&inlet_series[..m]);
    let loading = states.iter().filter(|s| s.loading).count();
    Trajectory::new(alloc::string::String::new(), schedule.dt, states, inlet_flow, loading)
}
