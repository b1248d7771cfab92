use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;

use super::data::{inject_noise, Example, Sample};
use super::TrainConfig;
use crate::error::{Error, Result};
use crate::graph::{CenterlineGraph, Trajectory};
use crate::mgn::engine::{self, StepCache};
use crate::mgn::{GnnGrads, GnnModel, PreparedGraph};
use crate::nn::Matrix;

/// Samples evaluated together in one forward/backward pass.
const CHUNK: usize = 10;

/// Weight `a_l` of the `l`-th step (1-based) of a stride.
fn step_weight(cfg: &TrainConfig, l: usize) -> f64 {
    if l == 1 {
        1.0
    } else {
        cfg.later_weight
    }
}

/// Node weights `b_i / N` of one graph.
fn node_weights(graph: &CenterlineGraph, boundary_weight: f64) -> Vec<f64> {
    let n = graph.num_nodes() as f64;
    graph
        .node_types()
        .iter()
        .map(|t| if t.is_boundary() { boundary_weight / n } else { 1.0 / n })
        .collect()
}

fn check_start(t: &Trajectory, start: usize, stride: usize) -> Result<()> {
    if stride == 0 || start + stride >= t.len() {
        return Err(Error::Validation(format!(
            "stride {stride} from step {start} exceeds a trajectory of {} states",
            t.len()
        )));
    }
    Ok(())
}

/// Strided loss of one sample with its own noise draw.
pub fn strided_loss<R: Rng + ?Sized>(
    model: &GnnModel,
    graph: &CenterlineGraph,
    trajectory: &Trajectory,
    start: usize,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<f64> {
    let g = model.prepare(graph)?;
    let ex = ExampleView {
        graph,
        trajectory,
        prepared: &g,
    };
    let (loss, _) = chunk_loss(model, &[ex], &[start], cfg, Some(rng), false)?;
    Ok(loss)
}

/// Strided loss and its gradient with respect to every parameter.
pub fn strided_loss_grad<R: Rng + ?Sized>(
    model: &GnnModel,
    graph: &CenterlineGraph,
    trajectory: &Trajectory,
    start: usize,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<(f64, GnnGrads)> {
    let g = model.prepare(graph)?;
    let ex = ExampleView {
        graph,
        trajectory,
        prepared: &g,
    };
    let (loss, grads) = chunk_loss(model, &[ex], &[start], cfg, Some(rng), true)?;
    Ok((loss, grads.expect("gradient requested")))
}

#[derive(Clone, Copy)]
pub(crate) struct ExampleView<'a> {
    pub graph: &'a CenterlineGraph,
    pub trajectory: &'a Trajectory,
    pub prepared: &'a PreparedGraph,
}

/// Mean strided loss over `samples`, with the gradient when `rng` noise and
/// `want_grad` are requested. Chunks are reduced in sample order.
pub(crate) fn batch_loss<R: Rng + ?Sized>(
    model: &GnnModel,
    examples: &[Example],
    prepared: &[PreparedGraph],
    samples: &[Sample],
    cfg: &TrainConfig,
    mut rng: Option<&mut R>,
    want_grad: bool,
) -> Result<(f64, Option<GnnGrads>)> {
    if samples.is_empty() {
        return Err(Error::Validation("empty batch".into()));
    }
    let mut total = 0.0;
    let mut grads = want_grad.then(|| GnnGrads::zeros_like(model));
    for chunk in samples.chunks(CHUNK) {
        let views: Vec<ExampleView> = chunk
            .iter()
            .map(|s| ExampleView {
                graph: &examples[s.example].graph,
                trajectory: &examples[s.example].trajectory,
                prepared: &prepared[s.example],
            })
            .collect();
        let starts: Vec<usize> = chunk.iter().map(|s| s.start).collect();
        let (l, g) = chunk_loss(model, &views, &starts, cfg, rng.as_deref_mut(), want_grad)?;
        total += l * chunk.len() as f64;
        if let (Some(acc), Some(g)) = (grads.as_mut(), g) {
            let mut g = g;
            g.scale(chunk.len() as f64);
            acc.add(&g);
        }
    }
    let inv = 1.0 / samples.len() as f64;
    if let Some(g) = grads.as_mut() {
        g.scale(inv);
    }
    Ok((total * inv, grads))
}

/// Mean loss over a chunk evaluated as one disjoint graph.
fn chunk_loss<R: Rng + ?Sized>(
    model: &GnnModel,
    views: &[ExampleView],
    starts: &[usize],
    cfg: &TrainConfig,
    mut rng: Option<&mut R>,
    want_grad: bool,
) -> Result<(f64, Option<GnnGrads>)> {
    let s = cfg.stride;
    let stats = model.stats();
    for (v, &k) in views.iter().zip(starts) {
        check_start(v.trajectory, k, s)?;
    }
    let g = if views.len() == 1 {
        views[0].prepared.clone()
    } else {
        PreparedGraph::concat(&views.iter().map(|v| v.prepared).collect::<Vec<_>>())
    };
    let n = g.num_nodes;
    let mut p = Vec::with_capacity(n);
    let mut q = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for (v, &k) in views.iter().zip(starts) {
        let s0 = &v.trajectory.states[k];
        let s0 = match rng.as_deref_mut() {
            Some(r) => inject_noise(s0, cfg.noise_std, stats, r),
            None => s0.clone(),
        };
        p.extend_from_slice(&s0.p);
        q.extend_from_slice(&s0.q);
        weights.extend(node_weights(v.graph, cfg.boundary_weight));
    }
    let (sp, sq) = (stats.node.scale(0), stats.node.scale(1));
    let (w0, ecache) = model.edge_encoder().forward(&g.edge_inputs)?;
    let mut caches: Vec<StepCache> = Vec::with_capacity(if want_grad { s } else { 0 });
    let mut direct: Vec<(Vec<f64>, Vec<f64>)> = Vec::with_capacity(s);
    let mut loss = 0.0;
    for l in 1..=s {
        let loading: Vec<bool> = views
            .iter()
            .zip(starts)
            .map(|(v, &k)| v.trajectory.states[k + l - 1].loading)
            .collect();
        let out = engine::step_forward(model, &g, &w0, &p, &q, &loading, None, want_grad)?;
        for i in 0..n {
            p[i] += out.dp[i];
            q[i] += out.dq[i];
        }
        let a = step_weight(cfg, l);
        let mut gp = vec![0.0; n];
        let mut gq = vec![0.0; n];
        for ((v, &k), range) in views.iter().zip(starts).zip(&g.components) {
            let truth = &v.trajectory.states[k + l];
            let inlet = range.start + v.graph.inlet();
            q[inlet] = v.trajectory.inlet_flow[k + l];
            for (local, i) in range.clone().enumerate() {
                let ep = (p[i] - truth.p[local]) / sp;
                let eq = (q[i] - truth.q[local]) / sq;
                let w = a * weights[i];
                loss += w * (ep * ep + eq * eq);
                gp[i] = 2.0 * w * ep / sp;
                gq[i] = 2.0 * w * eq / sq;
            }
        }
        if !loss.is_finite() {
            return Err(Error::Numerical(format!("non-finite loss at stride step {l}")));
        }
        if want_grad {
            caches.push(out.cache.expect("cache retained"));
            direct.push((gp, gq));
        }
    }
    let scale = 1.0 / views.len() as f64;
    loss *= scale;
    if !want_grad {
        return Ok((loss, None));
    }
    let mut grads = GnnGrads::zeros_like(model);
    let mut dw0 = Matrix::zeros(w0.rows, w0.cols);
    let mut gp = vec![0.0; n];
    let mut gq = vec![0.0; n];
    for l in (0..s).rev() {
        let (dp, dq) = &direct[l];
        for i in 0..n {
            gp[i] += dp[i] * scale;
            gq[i] += dq[i] * scale;
        }
        for &i in &g.inlets {
            gq[i] = 0.0;
        }
        if l == 0 {
            // the stride's initial state is data
            engine::step_backward(model, &g, &caches[0], &gp, &gq, &mut grads, &mut dw0)?;
            break;
        }
        let (bp, bq) = engine::step_backward(model, &g, &caches[l], &gp, &gq, &mut grads, &mut dw0)?;
        for i in 0..n {
            gp[i] += bp[i];
            gq[i] += bq[i];
        }
    }
    let ei = 1;
    model.edge_encoder().backward(&ecache, &dw0, &mut grads.blocks[ei])?;
    Ok((loss, Some(grads)))
}
