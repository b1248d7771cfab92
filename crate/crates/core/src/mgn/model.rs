use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::GnnConfig;
use crate::error::{Error, Result};
use crate::graph::{
    channels, edge_feature_table, static_node_features, CenterlineGraph, EdgeType, NormStats,
};
use crate::nn::{Matrix, Mlp, MlpShape};

/// Encoder, processors and decoder together with the normalization
/// statistics they were trained with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GnnModel {
    config: GnnConfig,
    stats: NormStats,
    /// `[node encoder, edge encoder, edge processors.., node processors.., decoder]`
    mlps: Vec<Mlp>,
}

/// Gradient blocks parallel to [`GnnModel::mlps`].
#[derive(Debug, Clone, PartialEq)]
pub struct GnnGrads {
    pub blocks: Vec<Vec<f64>>,
}

impl GnnGrads {
    pub fn zeros_like(model: &GnnModel) -> Self {
        Self {
            blocks: model.mlps.iter().map(|m| vec![0.0; m.num_params()]).collect(),
        }
    }

    pub fn scale(&mut self, s: f64) {
        for b in &mut self.blocks {
            for g in b.iter_mut() {
                *g *= s;
            }
        }
    }

    pub fn add(&mut self, other: &GnnGrads) {
        for (a, b) in self.blocks.iter_mut().zip(&other.blocks) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn flat(&self) -> Vec<f64> {
        self.blocks.iter().flatten().copied().collect()
    }
}

impl GnnModel {
    pub fn new<R: Rng + ?Sized>(config: GnnConfig, stats: NormStats, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let (nl, l) = (config.latent, config.iterations);
        let shape = |input, output, ln| MlpShape {
            input,
            hidden: config.hidden,
            hidden_layers: config.hidden_layers,
            output,
            layer_norm: ln,
        };
        let mut mlps = Vec::with_capacity(3 + 2 * l);
        mlps.push(Mlp::new(shape(config.node_channels().len(), nl, true), rng));
        mlps.push(Mlp::new(shape(config.edge_channels().len(), nl, true), rng));
        for _ in 0..l {
            mlps.push(Mlp::new(shape(3 * nl, nl, true), rng));
        }
        for _ in 0..l {
            mlps.push(Mlp::new(shape(4 * nl, nl, true), rng));
        }
        mlps.push(Mlp::new(shape(nl, 2, false), rng));
        Ok(Self { config, stats, mlps })
    }

    /// Reassembles a model from stored parts, checking every shape.
    pub fn from_parts(config: GnnConfig, stats: NormStats, mlps: Vec<Mlp>) -> Result<Self> {
        config.validate()?;
        let l = config.iterations;
        if mlps.len() != 3 + 2 * l {
            return Err(Error::Dimension {
                expected: 3 + 2 * l,
                got: mlps.len(),
            });
        }
        let nl = config.latent;
        let mut expected = vec![(config.node_channels().len(), nl), (config.edge_channels().len(), nl)];
        expected.extend(core::iter::repeat_n((3 * nl, nl), l));
        expected.extend(core::iter::repeat_n((4 * nl, nl), l));
        expected.push((nl, 2));
        for (m, (i, o)) in mlps.iter().zip(expected) {
            if m.shape().input != i || m.shape().output != o {
                return Err(Error::Dimension {
                    expected: i,
                    got: m.shape().input,
                });
            }
        }
        if stats.node.len() != 17 || stats.edge.len() != 8 || stats.output.len() != 2 {
            return Err(Error::Validation("normalization statistics have the wrong width".into()));
        }
        Ok(Self { config, stats, mlps })
    }

    pub fn config(&self) -> &GnnConfig {
        &self.config
    }

    pub fn stats(&self) -> &NormStats {
        &self.stats
    }

    pub fn mlps(&self) -> &[Mlp] {
        &self.mlps
    }

    pub fn mlps_mut(&mut self) -> &mut [Mlp] {
        &mut self.mlps
    }

    pub fn num_params(&self) -> usize {
        self.mlps.iter().map(|m| m.num_params()).sum()
    }

    pub fn node_encoder(&self) -> &Mlp {
        &self.mlps[0]
    }

    pub fn edge_encoder(&self) -> &Mlp {
        &self.mlps[1]
    }

    pub fn edge_processor(&self, l: usize) -> &Mlp {
        &self.mlps[2 + l]
    }

    pub fn node_processor(&self, l: usize) -> &Mlp {
        &self.mlps[2 + self.config.iterations + l]
    }

    pub fn decoder(&self) -> &Mlp {
        self.mlps.last().expect("model has a decoder")
    }

    pub(crate) fn edge_processor_index(&self, l: usize) -> usize {
        2 + l
    }

    pub(crate) fn node_processor_index(&self, l: usize) -> usize {
        2 + self.config.iterations + l
    }

    pub(crate) fn decoder_index(&self) -> usize {
        self.mlps.len() - 1
    }

    /// Zeroes the output layers of every processor and of the decoder.
    pub fn zero_processors_and_decoder(&mut self) {
        let n = self.mlps.len();
        for m in &mut self.mlps[2..n] {
            m.zero_output();
        }
    }

    /// Precomputes the normalized static inputs and edge features of a graph.
    pub fn prepare(&self, graph: &CenterlineGraph) -> Result<PreparedGraph> {
        let g = if self.config.boundary_edges() {
            alloc::borrow::Cow::Borrowed(graph)
        } else {
            alloc::borrow::Cow::Owned(graph.without_boundary_edges())
        };
        let node_ch = self.config.node_channels();
        let edge_ch = self.config.edge_channels();
        let stat = static_node_features(&g);
        let n = g.num_nodes();
        let mut static_nodes = Matrix::zeros(n, node_ch.len());
        for (i, row) in stat.iter().enumerate() {
            let dst = static_nodes.row_mut(i);
            for (k, &c) in node_ch.iter().enumerate() {
                dst[k] = self.stats.node.forward_channel(c, row[c]);
            }
        }
        let table = edge_feature_table(&g)?;
        let mut edge_inputs = Matrix::zeros(table.len(), edge_ch.len());
        for (e, row) in table.iter().enumerate() {
            let dst = edge_inputs.row_mut(e);
            for (k, &c) in edge_ch.iter().enumerate() {
                dst[k] = self.stats.edge.forward_channel(c, row[c]);
            }
        }
        let edges: Vec<_> = g.edges().copied().collect();
        let col = |c: usize| node_ch.iter().position(|&x| x == c);
        Ok(PreparedGraph {
            num_nodes: n,
            components: core::iter::once(0..n).collect(),
            inlets: vec![g.inlet()],
            src: edges.iter().map(|e| e.src).collect(),
            dst: edges.iter().map(|e| e.dst).collect(),
            kind: edges.iter().map(|e| e.kind).collect(),
            static_nodes,
            edge_inputs,
            p_col: col(channels::PRESSURE).ok_or(Error::Config("pressure channel is required".into()))?,
            q_col: col(channels::FLOW).ok_or(Error::Config("flow channel is required".into()))?,
            l_col: col(channels::LOADING),
        })
    }
}

/// A graph (or disjoint union of graphs) ready for batched evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedGraph {
    pub num_nodes: usize,
    /// Node range of every component.
    pub components: Vec<Range<usize>>,
    /// Inlet node of every component.
    pub inlets: Vec<usize>,
    pub src: Vec<usize>,
    pub dst: Vec<usize>,
    pub kind: Vec<EdgeType>,
    /// Normalized node inputs with the state columns left at zero.
    pub static_nodes: Matrix,
    /// Normalized edge inputs.
    pub edge_inputs: Matrix,
    pub p_col: usize,
    pub q_col: usize,
    pub l_col: Option<usize>,
}

impl PreparedGraph {
    pub fn num_edges(&self) -> usize {
        self.src.len()
    }

    /// Disjoint union; node indices of later parts are shifted.
    pub fn concat(parts: &[&PreparedGraph]) -> PreparedGraph {
        let first = parts.first().expect("concat of at least one graph");
        let n: usize = parts.iter().map(|p| p.num_nodes).sum();
        let e: usize = parts.iter().map(|p| p.num_edges()).sum();
        let mut out = PreparedGraph {
            num_nodes: n,
            components: Vec::new(),
            inlets: Vec::new(),
            src: Vec::with_capacity(e),
            dst: Vec::with_capacity(e),
            kind: Vec::with_capacity(e),
            static_nodes: Matrix::zeros(0, first.static_nodes.cols),
            edge_inputs: Matrix::zeros(0, first.edge_inputs.cols),
            p_col: first.p_col,
            q_col: first.q_col,
            l_col: first.l_col,
        };
        out.static_nodes.data.reserve(n * first.static_nodes.cols);
        out.edge_inputs.data.reserve(e * first.edge_inputs.cols);
        let mut off = 0;
        for p in parts {
            for r in &p.components {
                out.components.push(r.start + off..r.end + off);
            }
            out.inlets.extend(p.inlets.iter().map(|i| i + off));
            out.src.extend(p.src.iter().map(|i| i + off));
            out.dst.extend(p.dst.iter().map(|i| i + off));
            out.kind.extend_from_slice(&p.kind);
            out.static_nodes.data.extend_from_slice(&p.static_nodes.data);
            out.edge_inputs.data.extend_from_slice(&p.edge_inputs.data);
            off += p.num_nodes;
        }
        out.static_nodes.rows = n;
        out.edge_inputs.rows = e;
        out
    }
}
