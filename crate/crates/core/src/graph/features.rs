//! Node and edge feature vectors.
//!
//! Node: `[p, q, A, alpha(4), phi(3), T_cc, p_min, p_max, Rp, C, Rd, l]`.
//! Edge: `[d/|d| (3), z, beta(4)]`.

use alloc::vec::Vec;
use core::ops::Range;
use serde::{Deserialize, Serialize};

use super::{norm3, CenterlineGraph, Edge, NodeState};
use crate::error::{Error, Result};

pub const NODE_FEATURES: usize = 17;
pub const EDGE_FEATURES: usize = 8;

/// Channel indices into the node and edge feature vectors.
pub mod channels {
    use core::ops::Range;

    pub const PRESSURE: usize = 0;
    pub const FLOW: usize = 1;
    pub const AREA: usize = 2;
    pub const NODE_TYPE: Range<usize> = 3..7;
    pub const TANGENT: Range<usize> = 7..10;
    pub const T_CC: usize = 10;
    pub const P_MIN: usize = 11;
    pub const P_MAX: usize = 12;
    pub const RP: usize = 13;
    pub const C: usize = 14;
    pub const RD: usize = 15;
    pub const LOADING: usize = 16;

    pub const DIRECTION: Range<usize> = 0..3;
    pub const PATH_LENGTH: usize = 3;
    pub const EDGE_TYPE: Range<usize> = 4..8;
}

/// Feature groups, as perturbed one at a time by the sensitivity analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureGroup {
    Pressure,
    Flow,
    Area,
    Tangent,
    NodeType,
    CyclePeriod,
    PMin,
    PMax,
    Rcr,
    Loading,
    EdgeDirection,
    PathLength,
    EdgeType,
}

impl FeatureGroup {
    pub const ALL: [FeatureGroup; 13] = [
        FeatureGroup::Pressure,
        FeatureGroup::Flow,
        FeatureGroup::Area,
        FeatureGroup::Tangent,
        FeatureGroup::NodeType,
        FeatureGroup::CyclePeriod,
        FeatureGroup::PMin,
        FeatureGroup::PMax,
        FeatureGroup::Rcr,
        FeatureGroup::Loading,
        FeatureGroup::EdgeDirection,
        FeatureGroup::PathLength,
        FeatureGroup::EdgeType,
    ];

    pub fn is_edge(self) -> bool {
        matches!(
            self,
            FeatureGroup::EdgeDirection | FeatureGroup::PathLength | FeatureGroup::EdgeType
        )
    }

    /// Channels of the node (or edge, see [`Self::is_edge`]) vector.
    pub fn channels(self) -> Range<usize> {
        use channels::*;
        let one = |c: usize| c..c + 1;
        match self {
            FeatureGroup::Pressure => one(PRESSURE),
            FeatureGroup::Flow => one(FLOW),
            FeatureGroup::Area => one(AREA),
            FeatureGroup::Tangent => TANGENT,
            FeatureGroup::NodeType => NODE_TYPE,
            FeatureGroup::CyclePeriod => one(T_CC),
            FeatureGroup::PMin => one(P_MIN),
            FeatureGroup::PMax => one(P_MAX),
            FeatureGroup::Rcr => RP..RD + 1,
            FeatureGroup::Loading => one(LOADING),
            FeatureGroup::EdgeDirection => DIRECTION,
            FeatureGroup::PathLength => one(PATH_LENGTH),
            FeatureGroup::EdgeType => EDGE_TYPE,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FeatureGroup::Pressure => "pressure",
            FeatureGroup::Flow => "flow",
            FeatureGroup::Area => "area",
            FeatureGroup::Tangent => "tangent",
            FeatureGroup::NodeType => "node_type",
            FeatureGroup::CyclePeriod => "cycle_period",
            FeatureGroup::PMin => "p_min",
            FeatureGroup::PMax => "p_max",
            FeatureGroup::Rcr => "rcr",
            FeatureGroup::Loading => "loading",
            FeatureGroup::EdgeDirection => "edge_direction",
            FeatureGroup::PathLength => "path_length",
            FeatureGroup::EdgeType => "edge_type",
        }
    }
}

/// Node features with `p`, `q` and `l` left at zero.
pub fn static_node_features(graph: &CenterlineGraph) -> Vec<[f64; NODE_FEATURES]> {
    (0..graph.num_nodes())
        .map(|i| static_node_features_at(graph, i))
        .collect()
}

pub fn node_features(graph: &CenterlineGraph, state: &NodeState, i: usize) -> [f64; NODE_FEATURES] {
    let mut v = static_node_features_at(graph, i);
    v[channels::PRESSURE] = state.p[i];
    v[channels::FLOW] = state.q[i];
    v[channels::LOADING] = if state.loading { 1.0 } else { 0.0 };
    v
}

fn static_node_features_at(graph: &CenterlineGraph, i: usize) -> [f64; NODE_FEATURES] {
    let s = graph.scalars();
    let mut v = [0.0; NODE_FEATURES];
    v[channels::AREA] = graph.areas()[i];
    v[channels::NODE_TYPE].copy_from_slice(&graph.node_type(i).one_hot());
    v[channels::TANGENT].copy_from_slice(&graph.tangents()[i]);
    v[channels::T_CC] = s.t_cc;
    v[channels::P_MIN] = s.p_min;
    v[channels::P_MAX] = s.p_max;
    if let Some(bc) = graph.outlet_bcs().get(&i) {
        v[channels::RP] = bc.rp;
        v[channels::C] = bc.c;
        v[channels::RD] = bc.rd;
    }
    v
}

fn edge_features_with(graph: &CenterlineGraph, edge: &Edge, z: f64) -> Result<[f64; EDGE_FEATURES]> {
    let (xi, xj) = (&graph.positions()[edge.src], &graph.positions()[edge.dst]);
    let d = [xj[0] - xi[0], xj[1] - xi[1], xj[2] - xi[2]];
    let len = norm3(&d);
    if len == 0.0 {
        return Err(Error::DegenerateEdge(edge.src, edge.dst));
    }
    let mut w = [0.0; EDGE_FEATURES];
    for c in 0..3 {
        w[c] = d[c] / len;
    }
    w[channels::PATH_LENGTH] = z;
    w[channels::EDGE_TYPE].copy_from_slice(&edge.kind.one_hot());
    Ok(w)
}

pub fn edge_features(graph: &CenterlineGraph, edge: &Edge) -> Result<[f64; EDGE_FEATURES]> {
    let n = graph.num_nodes();
    if edge.src >= n || edge.dst >= n {
        return Err(Error::Validation("edge endpoint out of range".into()));
    }
    let z = super::path_length(graph, edge.src, edge.dst)?;
    edge_features_with(graph, edge, z)
}

/// Edge features of every edge in [`CenterlineGraph::edges`] order.
pub fn edge_feature_table(graph: &CenterlineGraph) -> Result<Vec<[f64; EDGE_FEATURES]>> {
    // One traversal per distinct source node.
    let mut cache: alloc::collections::BTreeMap<usize, Vec<f64>> = Default::default();
    let mut out = Vec::with_capacity(graph.num_edges());
    for e in graph.edges() {
        let dist = cache.entry(e.src).or_insert_with(|| graph.distances_from(e.src));
        out.push(edge_features_with(graph, e, dist[e.dst])?);
    }
    Ok(out)
}
