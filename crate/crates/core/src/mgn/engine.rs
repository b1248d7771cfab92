//! Batched single-step evaluation with reverse-mode gradients.

use alloc::vec::Vec;

use super::model::{GnnGrads, GnnModel, PreparedGraph};
use crate::error::Result;
use crate::graph::EdgeType;
use crate::nn::{Matrix, MlpCache};

/// Intermediates of one forward step.
pub(crate) struct StepCache {
    enc: MlpCache,
    edge: Vec<MlpCache>,
    node: Vec<MlpCache>,
    dec: MlpCache,
}

/// Hook for perturbing normalized inputs, used by the sensitivity study.
pub trait InputPerturbation {
    fn perturb_nodes(&mut self, _x: &mut Matrix) {}
    /// Returns `true` when edge inputs were changed and need re-encoding.
    fn perturb_edges(&mut self, _w: &mut Matrix) -> bool {
        false
    }
}

pub(crate) struct StepOutput {
    pub dp: Vec<f64>,
    pub dq: Vec<f64>,
    pub cache: Option<StepCache>,
}

/// Normalized node inputs for the given state.
pub(crate) fn node_inputs(
    model: &GnnModel,
    g: &PreparedGraph,
    p: &[f64],
    q: &[f64],
    loading: &[bool],
) -> Matrix {
    let norm = &model.stats().node;
    let mut x = g.static_nodes.clone();
    let (lo, hi) = (
        norm.forward_channel(crate::graph::channels::LOADING, 0.0),
        norm.forward_channel(crate::graph::channels::LOADING, 1.0),
    );
    for (c, range) in g.components.iter().enumerate() {
        for i in range.clone() {
            let row = x.row_mut(i);
            row[g.p_col] = norm.forward_channel(0, p[i]);
            row[g.q_col] = norm.forward_channel(1, q[i]);
            if let Some(l) = g.l_col {
                row[l] = if loading[c] { hi } else { lo };
            }
        }
    }
    x
}

/// Edge-processor input `[w_ij, v_i, v_j]`.
fn gather_edges(g: &PreparedGraph, w: &Matrix, v: &Matrix) -> Matrix {
    let nl = w.cols;
    let mut out = Matrix::zeros(w.rows, 3 * nl);
    for e in 0..w.rows {
        let row = out.row_mut(e);
        row[..nl].copy_from_slice(w.row(e));
        row[nl..2 * nl].copy_from_slice(v.row(g.src[e]));
        row[2 * nl..].copy_from_slice(v.row(g.dst[e]));
    }
    out
}

/// Node-processor input `[v_j, sum of incoming w, incoming inlet-type w,
/// incoming outlet-type w]`.
pub(crate) fn gather_nodes(g: &PreparedGraph, v: &Matrix, w: &Matrix) -> Matrix {
    let nl = v.cols;
    let mut out = Matrix::zeros(v.rows, 4 * nl);
    for i in 0..v.rows {
        out.row_mut(i)[..nl].copy_from_slice(v.row(i));
    }
    for e in 0..w.rows {
        let j = g.dst[e];
        let we = w.row(e);
        let row = out.row_mut(j);
        for c in 0..nl {
            row[nl + c] += we[c];
        }
        let extra = match g.kind[e] {
            EdgeType::InletEdge => Some(2 * nl),
            EdgeType::OutletEdge => Some(3 * nl),
            _ => None,
        };
        if let Some(off) = extra {
            for c in 0..nl {
                row[off + c] += we[c];
            }
        }
    }
    out
}

/// Encodes edge inputs (optionally perturbed).
pub(crate) fn encode_edges(model: &GnnModel, inputs: &Matrix) -> Result<(Matrix, MlpCache)> {
    model.edge_encoder().forward(inputs)
}

/// One message-passing iteration; returns the updated latents and caches.
pub(crate) fn process(
    model: &GnnModel,
    g: &PreparedGraph,
    l: usize,
    v: &Matrix,
    w: &Matrix,
) -> Result<(Matrix, Matrix, MlpCache, MlpCache)> {
    let ein = gather_edges(g, w, v);
    let (dw, ec) = model.edge_processor(l).forward(&ein)?;
    let mut w_next = w.clone();
    w_next.add_assign(&dw);
    let nin = gather_nodes(g, v, &w_next);
    let (dv, nc) = model.node_processor(l).forward(&nin)?;
    let mut v_next = v.clone();
    v_next.add_assign(&dv);
    Ok((v_next, w_next, ec, nc))
}

#[allow(clippy::too_many_arguments)]
/// Forward step from state `(p, q)` with edge latents `w0`.
pub(crate) fn step_forward(
    model: &GnnModel,
    g: &PreparedGraph,
    w0: &Matrix,
    p: &[f64],
    q: &[f64],
    loading: &[bool],
    perturb: Option<&mut dyn InputPerturbation>,
    retain: bool,
) -> Result<StepOutput> {
    let mut x = node_inputs(model, g, p, q, loading);
    if let Some(h) = perturb {
        h.perturb_nodes(&mut x);
    }
    let (mut v, enc) = model.node_encoder().forward(&x)?;
    let mut w = w0.clone();
    let iters = model.config().iterations;
    let mut edge = Vec::with_capacity(if retain { iters } else { 0 });
    let mut node = Vec::with_capacity(if retain { iters } else { 0 });
    for l in 0..iters {
        let (vn, wn, ec, nc) = process(model, g, l, &v, &w)?;
        v = vn;
        w = wn;
        if retain {
            edge.push(ec);
            node.push(nc);
        }
    }
    let (y, dec) = model.decoder().forward(&v)?;
    let out = &model.stats().output;
    let dp = (0..g.num_nodes).map(|i| out.inverse_channel(0, y.get(i, 0))).collect();
    let dq = (0..g.num_nodes).map(|i| out.inverse_channel(1, y.get(i, 1))).collect();
    Ok(StepOutput {
        dp,
        dq,
        cache: retain.then_some(StepCache { enc, edge, node, dec }),
    })
}

/// Back-propagates gradients of the increments `(dp, dq)` through one step.
/// Accumulates parameter gradients and the gradient of the initial edge
/// latents; returns the gradient with respect to the input state.
pub(crate) fn step_backward(
    model: &GnnModel,
    g: &PreparedGraph,
    cache: &StepCache,
    grad_dp: &[f64],
    grad_dq: &[f64],
    grads: &mut GnnGrads,
    grad_w0: &mut Matrix,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = g.num_nodes;
    let nl = model.config().latent;
    let out = &model.stats().output;
    let mut dy = Matrix::zeros(n, 2);
    for i in 0..n {
        dy.set(i, 0, grad_dp[i] * out.scale(0));
        dy.set(i, 1, grad_dq[i] * out.scale(1));
    }
    let di = model.decoder_index();
    let mut dv = model.decoder().backward(&cache.dec, &dy, &mut grads.blocks[di])?;
    let mut dw = Matrix::zeros(g.num_edges(), nl);
    for l in (0..model.config().iterations).rev() {
        let ni = model.node_processor_index(l);
        let dnin = model
            .node_processor(l)
            .backward(&cache.node[l], &dv, &mut grads.blocks[ni])?;
        for i in 0..n {
            let src = &dnin.row(i)[..nl];
            for (a, b) in dv.row_mut(i).iter_mut().zip(src) {
                *a += b;
            }
        }
        for e in 0..g.num_edges() {
            let row = dnin.row(g.dst[e]);
            let extra = match g.kind[e] {
                EdgeType::InletEdge => Some(2 * nl),
                EdgeType::OutletEdge => Some(3 * nl),
                _ => None,
            };
            let dst = dw.row_mut(e);
            for c in 0..nl {
                dst[c] += row[nl + c];
            }
            if let Some(off) = extra {
                for c in 0..nl {
                    dst[c] += row[off + c];
                }
            }
        }
        let ei = model.edge_processor_index(l);
        let dein = model
            .edge_processor(l)
            .backward(&cache.edge[l], &dw, &mut grads.blocks[ei])?;
        for e in 0..g.num_edges() {
            let row = dein.row(e);
            for (a, b) in dw.row_mut(e).iter_mut().zip(&row[..nl]) {
                *a += b;
            }
            let (s, t) = (g.src[e], g.dst[e]);
            for c in 0..nl {
                dv.data[s * nl + c] += row[nl + c];
            }
            for c in 0..nl {
                dv.data[t * nl + c] += row[2 * nl + c];
            }
        }
    }
    grad_w0.add_assign(&dw);
    let dx = model
        .node_encoder()
        .backward(&cache.enc, &dv, &mut grads.blocks[0])?;
    let norm = &model.stats().node;
    let (sp, sq) = (norm.scale(0), norm.scale(1));
    let gp = (0..n).map(|i| dx.get(i, g.p_col) / sp).collect();
    let gq = (0..n).map(|i| dx.get(i, g.q_col) / sq).collect();
    Ok((gp, gq))
}
