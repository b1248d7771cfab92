//! Centerline graphs: typed nodes, bidirectional physical edges, and the
//! artificial boundary edges linking interior nodes to their closest
//! inlet/outlet node.

mod features;
mod norm;
mod trajectory;

pub use features::{
    edge_feature_table, edge_features, node_features, static_node_features, FeatureGroup,
    EDGE_FEATURES, NODE_FEATURES,
};
pub use features::channels;
pub use norm::{apply_normalization, fit_normalization, ChannelNorm, Direction, NormStats};
pub use trajectory::{NodeState, Trajectory};

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hemo1d::RcrParams;

pub type Vec3 = [f64; 3];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeType {
    Branch,
    Junction,
    Inlet,
    Outlet,
}

impl NodeType {
    pub fn index(self) -> usize {
        match self {
            NodeType::Branch => 0,
            NodeType::Junction => 1,
            NodeType::Inlet => 2,
            NodeType::Outlet => 3,
        }
    }

    pub fn one_hot(self) -> [f64; 4] {
        let mut v = [0.0; 4];
        v[self.index()] = 1.0;
        v
    }

    pub fn is_boundary(self) -> bool {
        matches!(self, NodeType::Inlet | NodeType::Outlet)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeType {
    BranchBranch,
    JunctionJunction,
    InletEdge,
    OutletEdge,
}

impl EdgeType {
    pub fn index(self) -> usize {
        match self {
            EdgeType::BranchBranch => 0,
            EdgeType::JunctionJunction => 1,
            EdgeType::InletEdge => 2,
            EdgeType::OutletEdge => 3,
        }
    }

    pub fn one_hot(self) -> [f64; 4] {
        let mut v = [0.0; 4];
        v[self.index()] = 1.0;
        v
    }

    pub fn is_boundary(self) -> bool {
        matches!(self, EdgeType::InletEdge | EdgeType::OutletEdge)
    }
}

/// Directed edge `src -> dst`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    pub kind: EdgeType,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphScalars {
    /// Cardiac cycle period (s).
    pub t_cc: f64,
    /// Minimum pressure over the cycle (barye).
    pub p_min: f64,
    /// Maximum pressure over the cycle (barye).
    pub p_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CenterlineGraph {
    positions: Vec<Vec3>,
    node_types: Vec<NodeType>,
    areas: Vec<f64>,
    tangents: Vec<Vec3>,
    physical_edges: Vec<Edge>,
    boundary_edges: Vec<Edge>,
    scalars: GraphScalars,
    outlet_bcs: BTreeMap<usize, RcrParams>,
    #[serde(skip)]
    neighbors: Vec<Vec<(usize, f64)>>,
}

fn sub(a: &Vec3, b: &Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn norm3(v: &Vec3) -> f64 {
    libm::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2])
}

fn physical_kind(types: &[NodeType], a: usize, b: usize) -> EdgeType {
    if types[a] == NodeType::Junction && types[b] == NodeType::Junction {
        EdgeType::JunctionJunction
    } else {
        EdgeType::BranchBranch
    }
}

/// Builds a centerline graph from node data and undirected segments.
///
/// Segments must form a connected tree containing exactly one inlet and at
/// least one outlet. Each segment becomes a pair of directed physical edges.
/// Tangents are normalized central differences along the tree oriented from
/// the inlet, one-sided at endpoints and at branching points.
pub fn build_graph(
    positions: &[Vec3],
    segments: &[(usize, usize)],
    node_types: &[NodeType],
    areas: &[f64],
    scalars: GraphScalars,
    outlet_bcs: BTreeMap<usize, RcrParams>,
) -> Result<CenterlineGraph> {
    let n = positions.len();
    if node_types.len() != n {
        return Err(Error::Dimension {
            expected: n,
            got: node_types.len(),
        });
    }
    if areas.len() != n {
        return Err(Error::Dimension {
            expected: n,
            got: areas.len(),
        });
    }
    let mut edges = Vec::with_capacity(2 * segments.len());
    for &(a, b) in segments {
        if a >= n || b >= n || a == b {
            return Err(Error::Topology(format!("invalid segment ({a}, {b})")));
        }
        let kind = physical_kind(node_types, a, b);
        edges.push(Edge { src: a, dst: b, kind });
        edges.push(Edge { src: b, dst: a, kind });
    }
    let mut graph = CenterlineGraph {
        positions: positions.to_vec(),
        node_types: node_types.to_vec(),
        areas: areas.to_vec(),
        tangents: vec![[0.0; 3]; n],
        physical_edges: edges,
        boundary_edges: Vec::new(),
        scalars,
        outlet_bcs,
        neighbors: Vec::new(),
    };
    graph.validate_common()?;
    graph.tangents = graph.compute_tangents()?;
    Ok(graph)
}

impl CenterlineGraph {
    /// Reassembles a graph from stored parts (e.g. a graph file), checking
    /// every invariant.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        positions: Vec<Vec3>,
        node_types: Vec<NodeType>,
        areas: Vec<f64>,
        tangents: Vec<Vec3>,
        physical_edges: Vec<Edge>,
        boundary_edges: Vec<Edge>,
        scalars: GraphScalars,
        outlet_bcs: BTreeMap<usize, RcrParams>,
    ) -> Result<Self> {
        let n = positions.len();
        for (name, len) in [
            ("node_types", node_types.len()),
            ("areas", areas.len()),
            ("tangents", tangents.len()),
        ] {
            if len != n {
                return Err(Error::Validation(format!("{name} has {len} entries, expected {n}")));
            }
        }
        let mut graph = Self {
            positions,
            node_types,
            areas,
            tangents,
            physical_edges,
            boundary_edges,
            scalars,
            outlet_bcs,
            neighbors: Vec::new(),
        };
        graph.validate_common()?;
        for (i, t) in graph.tangents.iter().enumerate() {
            if (norm3(t) - 1.0).abs() > 1e-12 {
                return Err(Error::Validation(format!("tangent at node {i} is not unit length")));
            }
        }
        for e in &graph.boundary_edges {
            if e.src >= n || e.dst >= n || !e.kind.is_boundary() {
                return Err(Error::Topology(format!(
                    "invalid boundary edge ({}, {})",
                    e.src, e.dst
                )));
            }
        }
        Ok(graph)
    }

    fn validate_common(&mut self) -> Result<()> {
        let n = self.positions.len();
        let inlets = self
            .node_types
            .iter()
            .filter(|t| **t == NodeType::Inlet)
            .count();
        if inlets != 1 {
            return Err(Error::Topology(format!("expected exactly one inlet, found {inlets}")));
        }
        if !self.node_types.contains(&NodeType::Outlet) {
            return Err(Error::Topology("graph has no outlet".into()));
        }
        for (i, &a) in self.areas.iter().enumerate() {
            if !(a > 0.0) || !a.is_finite() {
                return Err(Error::Validation(format!("area at node {i} must be positive, got {a}")));
            }
        }
        for (i, p) in self.positions.iter().enumerate() {
            if p.iter().any(|c| !c.is_finite()) {
                return Err(Error::Validation(format!("position of node {i} is not finite")));
            }
        }
        for (&node, bc) in &self.outlet_bcs {
            if node >= n || self.node_types[node] != NodeType::Outlet {
                return Err(Error::Validation(format!(
                    "boundary condition attached to non-outlet node {node}"
                )));
            }
            bc.validate()?;
        }
        for e in &self.physical_edges {
            if e.src >= n || e.dst >= n || e.src == e.dst || e.kind.is_boundary() {
                return Err(Error::Topology(format!("invalid physical edge ({}, {})", e.src, e.dst)));
            }
        }
        // Undirected segment count and connectivity.
        let mut neighbors = vec![Vec::new(); n];
        for e in &self.physical_edges {
            if e.src < e.dst {
                let len = norm3(&sub(&self.positions[e.dst], &self.positions[e.src]));
                neighbors[e.src].push((e.dst, len));
                neighbors[e.dst].push((e.src, len));
            }
        }
        let undirected: usize = neighbors.iter().map(|v| v.len()).sum::<usize>() / 2;
        if 2 * undirected != self.physical_edges.len() {
            return Err(Error::Topology("physical edges are not stored bidirectionally".into()));
        }
        if undirected + 1 != n {
            return Err(Error::Topology(format!(
                "segments do not form a tree: {undirected} segments for {n} nodes"
            )));
        }
        self.neighbors = neighbors;
        let reached = self.distances_from(self.inlet());
        if reached.iter().any(|d| d.is_infinite()) {
            return Err(Error::Topology("segments are disconnected".into()));
        }
        Ok(())
    }

    fn ensure_neighbors(&self) -> alloc::borrow::Cow<'_, [Vec<(usize, f64)>]> {
        if self.neighbors.len() == self.positions.len() {
            alloc::borrow::Cow::Borrowed(&self.neighbors)
        } else {
            let n = self.positions.len();
            let mut neighbors = vec![Vec::new(); n];
            for e in &self.physical_edges {
                let len = norm3(&sub(&self.positions[e.dst], &self.positions[e.src]));
                neighbors[e.src].push((e.dst, len));
            }
            alloc::borrow::Cow::Owned(neighbors)
        }
    }

    fn compute_tangents(&self) -> Result<Vec<Vec3>> {
        let n = self.positions.len();
        let neighbors = self.ensure_neighbors();
        let mut parent = vec![usize::MAX; n];
        let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut visited = vec![false; n];
        let root = self.inlet();
        let mut stack = vec![root];
        visited[root] = true;
        while let Some(u) = stack.pop() {
            for &(v, _) in &neighbors[u] {
                if !visited[v] {
                    visited[v] = true;
                    parent[v] = u;
                    children[u].push(v);
                    stack.push(v);
                }
            }
        }
        let mut tangents = Vec::with_capacity(n);
        for i in 0..n {
            let x = &self.positions[i];
            let has_parent = parent[i] != usize::MAX;
            let d = match (has_parent, children[i].len()) {
                (true, 1) => sub(&self.positions[children[i][0]], &self.positions[parent[i]]),
                (true, _) => sub(x, &self.positions[parent[i]]),
                (false, 0) => [0.0; 3],
                (false, _) => sub(&self.positions[children[i][0]], x),
            };
            let mut len = norm3(&d);
            let mut d = d;
            if len == 0.0 && has_parent {
                d = sub(x, &self.positions[parent[i]]);
                len = norm3(&d);
            }
            if len == 0.0 {
                return Err(Error::Validation(format!("cannot compute tangent at node {i}")));
            }
            tangents.push([d[0] / len, d[1] / len, d[2] / len]);
        }
        Ok(tangents)
    }

    /// Shortest physical-path distances from `src` to every node.
    pub fn distances_from(&self, src: usize) -> Vec<f64> {
        let neighbors = self.ensure_neighbors();
        let n = self.positions.len();
        let mut dist = vec![f64::INFINITY; n];
        dist[src] = 0.0;
        // The physical edges form a tree, so a traversal yields unique paths.
        let mut stack = vec![src];
        while let Some(u) = stack.pop() {
            for &(v, len) in &neighbors[u] {
                if dist[v].is_infinite() {
                    dist[v] = dist[u] + len;
                    stack.push(v);
                }
            }
        }
        dist
    }

    pub fn num_nodes(&self) -> usize {
        self.positions.len()
    }

    pub fn positions(&self) -> &[Vec3] {
        &self.positions
    }

    pub fn node_types(&self) -> &[NodeType] {
        &self.node_types
    }

    pub fn node_type(&self, i: usize) -> NodeType {
        self.node_types[i]
    }

    pub fn areas(&self) -> &[f64] {
        &self.areas
    }

    pub fn tangents(&self) -> &[Vec3] {
        &self.tangents
    }

    pub fn physical_edges(&self) -> &[Edge] {
        &self.physical_edges
    }

    pub fn boundary_edges(&self) -> &[Edge] {
        &self.boundary_edges
    }

    /// Physical edges followed by boundary edges.
    pub fn edges(&self) -> impl Iterator<Item = &Edge> + '_ {
        self.physical_edges.iter().chain(self.boundary_edges.iter())
    }

    pub fn num_edges(&self) -> usize {
        self.physical_edges.len() + self.boundary_edges.len()
    }

    pub fn scalars(&self) -> &GraphScalars {
        &self.scalars
    }

    pub fn set_scalars(&mut self, scalars: GraphScalars) {
        self.scalars = scalars;
    }

    pub fn outlet_bcs(&self) -> &BTreeMap<usize, RcrParams> {
        &self.outlet_bcs
    }

    pub fn set_outlet_bcs(&mut self, bcs: BTreeMap<usize, RcrParams>) -> Result<()> {
        for (&node, bc) in &bcs {
            if node >= self.num_nodes() || self.node_types[node] != NodeType::Outlet {
                return Err(Error::Validation(format!(
                    "boundary condition attached to non-outlet node {node}"
                )));
            }
            bc.validate()?;
        }
        self.outlet_bcs = bcs;
        Ok(())
    }

    pub fn inlet(&self) -> usize {
        self.node_types
            .iter()
            .position(|t| *t == NodeType::Inlet)
            .expect("graph invariant: exactly one inlet")
    }

    pub fn outlets(&self) -> Vec<usize> {
        (0..self.num_nodes())
            .filter(|&i| self.node_types[i] == NodeType::Outlet)
            .collect()
    }

    pub fn is_interior(&self, i: usize) -> bool {
        !self.node_types[i].is_boundary()
    }

    /// Copy of this graph with boundary edges removed.
    pub fn without_boundary_edges(&self) -> Self {
        let mut g = self.clone();
        g.boundary_edges.clear();
        g
    }

    /// Rebuilds cached adjacency after deserialization.
    pub fn reindex(&mut self) -> Result<()> {
        self.validate_common()
    }
}

/// Length of the shortest path between `i` and `j` using only physical
/// edges, with Euclidean edge weights.
pub fn path_length(graph: &CenterlineGraph, i: usize, j: usize) -> Result<f64> {
    let n = graph.num_nodes();
    if i >= n || j >= n {
        return Err(Error::Validation(format!("node index out of range ({i}, {j})")));
    }
    let d = graph.distances_from(i)[j];
    if d.is_infinite() {
        return Err(Error::Topology(format!("nodes {i} and {j} are not connected")));
    }
    Ok(d)
}

/// Connects every interior node to its closest boundary node (ties go to
/// the lowest boundary-node index) with a bidirectional edge pair.
///
/// Any existing boundary edges are replaced.
pub fn add_boundary_edges(graph: &CenterlineGraph) -> CenterlineGraph {
    let mut out = graph.clone();
    out.boundary_edges.clear();
    let boundary: Vec<usize> = (0..graph.num_nodes())
        .filter(|&i| graph.node_types[i].is_boundary())
        .collect();
    let dists: Vec<Vec<f64>> = boundary.iter().map(|&b| graph.distances_from(b)).collect();
    for i in 0..graph.num_nodes() {
        if !graph.is_interior(i) {
            continue;
        }
        let mut best = 0;
        for k in 1..boundary.len() {
            let (dk, db) = (dists[k][i], dists[best][i]);
            let tol = 1e-12 * db.abs().max(dk.abs());
            if dk < db - tol {
                best = k;
            }
        }
        let b = boundary[best];
        let kind = match graph.node_types[b] {
            NodeType::Inlet => EdgeType::InletEdge,
            _ => EdgeType::OutletEdge,
        };
        out.boundary_edges.push(Edge { src: b, dst: i, kind });
        out.boundary_edges.push(Edge { src: i, dst: b, kind });
    }
    out
}


#[cfg(test)]
mod tests {
    use super::test_graphs::*;
    use super::*;

    #[test]
    fn minimal_path_graph() {
        let g = chain(3);
        assert_eq!(g.physical_edges().len(), 4);
        assert!(g.boundary_edges().is_empty());
        for t in g.tangents() {
            assert!((norm3(t) - 1.0).abs() < 1e-12);
            assert_eq!(*t, [1.0, 0.0, 0.0]);
        }
    }

    #[test]
    fn y_tree_types() {
        let g = y_tree();
        let types = g.node_types();
        assert_eq!(types.iter().filter(|t| **t == NodeType::Junction).count(), 3);
        assert_eq!(g.node_type(0).one_hot(), [0.0, 0.0, 1.0, 0.0]);
        assert_eq!(g.node_type(2).one_hot(), [0.0, 1.0, 0.0, 0.0]);
        assert_eq!(g.outlets(), vec![4, 6]);
        // branch-junction edge takes the branch-branch type
        let e12 = g.physical_edges().iter().find(|e| e.src == 1 && e.dst == 2).unwrap();
        assert_eq!(e12.kind, EdgeType::BranchBranch);
        let e23 = g.physical_edges().iter().find(|e| e.src == 2 && e.dst == 3).unwrap();
        assert_eq!(e23.kind, EdgeType::JunctionJunction);
    }

    #[test]
    fn two_inlets_rejected() {
        let positions = vec![[0.0; 3], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]];
        let types = vec![NodeType::Inlet, NodeType::Inlet, NodeType::Outlet];
        let err = build_graph(
            &positions,
            &[(0, 1), (1, 2)],
            &types,
            &[1.0; 3],
            scalars(),
            BTreeMap::new(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Topology(_)));
    }

    #[test]
    fn disconnected_rejected() {
        let positions: Vec<Vec3> = (0..4).map(|i| [i as f64, 0.0, 0.0]).collect();
        let types = vec![NodeType::Inlet, NodeType::Branch, NodeType::Branch, NodeType::Outlet];
        // 3 segments with a cycle among 0-1-2 leaves node 3 isolated
        let err = build_graph(
            &positions,
            &[(0, 1), (1, 2), (2, 0)],
            &types,
            &[1.0; 4],
            scalars(),
            BTreeMap::new(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Topology(_)));
        let err = build_graph(&positions, &[(0, 1), (2, 3)], &types, &[1.0; 4], scalars(), BTreeMap::new())
            .unwrap_err();
        assert!(matches!(err, Error::Topology(_)));
    }

    #[test]
    fn non_positive_area_rejected() {
        let positions: Vec<Vec3> = (0..3).map(|i| [i as f64, 0.0, 0.0]).collect();
        let types = vec![NodeType::Inlet, NodeType::Branch, NodeType::Outlet];
        let err = build_graph(
            &positions,
            &[(0, 1), (1, 2)],
            &types,
            &[1.0, 0.0, 1.0],
            scalars(),
            BTreeMap::new(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    /// Brute force: Floyd-Warshall over the physical edges.
    fn all_pairs(g: &CenterlineGraph) -> Vec<Vec<f64>> {
        let n = g.num_nodes();
        let mut d = vec![vec![f64::INFINITY; n]; n];
        for (i, row) in d.iter_mut().enumerate() {
            row[i] = 0.0;
        }
        for e in g.physical_edges() {
            let len = norm3(&sub(&g.positions()[e.dst], &g.positions()[e.src]));
            d[e.src][e.dst] = d[e.src][e.dst].min(len);
        }
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    if d[i][k] + d[k][j] < d[i][j] {
                        d[i][j] = d[i][k] + d[k][j];
                    }
                }
            }
        }
        d
    }

    #[test]
    fn closest_boundary_on_chain() {
        let g = add_boundary_edges(&chain(5));
        let brute = all_pairs(&g);
        // 0-based: node 1 -> inlet 0, node 3 -> outlet 4, node 2 tied -> inlet
        assert_eq!(brute[2][0], brute[2][4]);
        let target = |i: usize| {
            g.boundary_edges()
                .iter()
                .find(|e| e.dst == i)
                .map(|e| (e.src, e.kind))
                .unwrap()
        };
        assert_eq!(target(1), (0, EdgeType::InletEdge));
        assert_eq!(target(2), (0, EdgeType::InletEdge));
        assert_eq!(target(3), (4, EdgeType::OutletEdge));
        assert_eq!(g.boundary_edges().len(), 6);
    }

    #[test]
    fn two_node_graph_unchanged() {
        let g = chain(2);
        let aug = add_boundary_edges(&g);
        assert_eq!(aug, g);
    }

    #[test]
    fn pair_per_interior_node() {
        let g = add_boundary_edges(&y_tree());
        let interior = (0..g.num_nodes()).filter(|&i| g.is_interior(i)).count();
        assert_eq!(g.boundary_edges().len(), 2 * interior);
        for i in 0..g.num_nodes() {
            if g.is_interior(i) {
                let incident: Vec<_> = g
                    .boundary_edges()
                    .iter()
                    .filter(|e| e.src == i || e.dst == i)
                    .collect();
                assert_eq!(incident.len(), 2);
                assert_eq!(incident[0].src, incident[1].dst);
                assert_eq!(incident[0].dst, incident[1].src);
            }
        }
    }

    #[test]
    fn path_lengths() {
        let g = chain(3);
        assert_eq!(path_length(&g, 0, 1).unwrap(), 1.0);
        assert_eq!(path_length(&g, 0, 2).unwrap(), 2.0);
        let tree = y_tree();
        let aug = add_boundary_edges(&tree);
        let brute = all_pairs(&tree);
        for i in 0..tree.num_nodes() {
            for j in 0..tree.num_nodes() {
                let a = path_length(&aug, i, j).unwrap();
                assert_eq!(a, path_length(&tree, i, j).unwrap());
                assert!((a - brute[i][j]).abs() < 1e-12);
                assert!((a - path_length(&aug, j, i).unwrap()).abs() < 1e-12);
            }
        }
        assert!(path_length(&tree, 0, 99).is_err());
    }
}
