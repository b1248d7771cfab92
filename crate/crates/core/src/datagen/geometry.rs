use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::BoundarySet;
use crate::error::{Error, Result};
use crate::graph::{add_boundary_edges, build_graph, CenterlineGraph, GraphScalars, NodeType};
use crate::hemo1d::{Geometry1D, Junction1D, Model1D, RcrParams, Segment1D, WallModel};

/// Periodic inflow `mean + sum_k a_k cos(2 pi k t / T) + b_k sin(2 pi k t / T)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InflowWaveform {
    /// Cardiac cycle period (s).
    pub period: f64,
    /// cm^3 / s
    pub mean: f64,
    /// `[a_k, b_k]` for `k = 1, 2, ...`
    pub harmonics: Vec<[f64; 2]>,
}

impl InflowWaveform {
    pub fn eval(&self, t: f64) -> f64 {
        let w = 2.0 * core::f64::consts::PI * t / self.period;
        self.mean
            + self
                .harmonics
                .iter()
                .enumerate()
                .map(|(k, [a, b])| {
                    let x = (k + 1) as f64 * w;
                    a * libm::cos(x) + b * libm::sin(x)
                })
                .sum::<f64>()
    }

    /// Samples at `t = k dt`, `k = 0..=steps`.
    pub fn sample(&self, dt: f64, steps: usize) -> Vec<f64> {
        (0..=steps).map(|k| self.eval(k as f64 * dt)).collect()
    }

    pub fn scaled(&self, f: f64) -> Self {
        Self {
            period: self.period,
            mean: self.mean * f,
            harmonics: self.harmonics.iter().map(|[a, b]| [a * f, b * f]).collect(),
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.period > 0.0) || !self.mean.is_finite() {
            return Err(Error::Validation("inflow period must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Template {
    Tube {
        length: f64,
        radius: f64,
    },
    Bifurcation {
        parent_length: f64,
        parent_radius: f64,
        daughter_length: f64,
        daughter_radius: f64,
        /// Half-angle between the daughters (degrees).
        angle: f64,
    },
    /// Symmetric binary tree with `generations` levels of bifurcations.
    Tree {
        generations: usize,
        root_length: f64,
        root_radius: f64,
        length_ratio: f64,
        radius_ratio: f64,
        angle: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometrySpec {
    pub name: String,
    pub template: Template,
    /// Target node spacing along the centerline (cm).
    pub spacing: f64,
    /// Outlet-to-inlet radius ratio of every segment.
    pub taper: f64,
    pub inflow: InflowWaveform,
    /// Outlet parameters of each daughter of a symmetric bifurcation; other
    /// trees split the same total conductance and compliance by outlet area.
    pub outlet_bc: RcrParams,
    pub wall: WallModel,
    /// Reference pressure of the wall law (barye).
    pub p0: f64,
}

impl GeometrySpec {
    /// The synthetic bifurcation used for the desk-scale experiments.
    pub fn bifurcation() -> Self {
        Self {
            name: "bifurcation".into(),
            template: Template::Bifurcation {
                parent_length: 6.0,
                parent_radius: 0.9,
                daughter_length: 5.0,
                daughter_radius: 0.6,
                angle: 30.0,
            },
            spacing: 1.0,
            taper: 1.0,
            inflow: InflowWaveform {
                period: 0.6,
                mean: 15.0,
                harmonics: vec![[4.0, 9.0], [-5.0, 3.0], [-1.5, -2.0], [0.5, -1.0]],
            },
            outlet_bc: RcrParams {
                rp: 1600.0,
                c: 7e-5,
                rd: 14400.0,
                mode: crate::hemo1d::BcMode::Rcr,
            },
            wall: WallModel::rigid(),
            p0: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64, what: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Validation(format!("{what} must be positive, got {v}")))
            }
        };
        pos(self.spacing, "node spacing")?;
        pos(self.taper, "taper factor")?;
        match &self.template {
            Template::Tube { length, radius } => {
                pos(*length, "length")?;
                pos(*radius, "radius")?;
            }
            Template::Bifurcation {
                parent_length,
                parent_radius,
                daughter_length,
                daughter_radius,
                angle,
            } => {
                pos(*parent_length, "parent length")?;
                pos(*parent_radius, "parent radius")?;
                pos(*daughter_length, "daughter length")?;
                pos(*daughter_radius, "daughter radius")?;
                pos(*angle, "branching angle")?;
            }
            Template::Tree {
                generations,
                root_length,
                root_radius,
                length_ratio,
                radius_ratio,
                angle,
            } => {
                if *generations == 0 {
                    return Err(Error::Validation("a tree needs at least one generation".into()));
                }
                pos(*root_length, "root length")?;
                pos(*root_radius, "root radius")?;
                pos(*length_ratio, "length ratio")?;
                pos(*radius_ratio, "radius ratio")?;
                pos(*angle, "branching angle")?;
            }
        }
        self.inflow.validate()?;
        self.outlet_bc.validate()
    }
}

/// A generated geometry: the 1D model geometry, the matching centerline
/// graph and the 1D node behind every graph node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedGeometry {
    pub geometry: Geometry1D,
    pub graph: CenterlineGraph,
    /// `node_map[i]` is the global 1D node of graph node `i`.
    pub node_map: Vec<usize>,
    /// Outlet segments in ascending order; parallel to `base.outlets`.
    pub outlet_segments: Vec<usize>,
    /// Graph node at the end of every outlet segment.
    pub outlet_nodes: Vec<usize>,
    pub base: BoundarySet,
    pub wall: WallModel,
}

struct Vessel {
    start: [f64; 3],
    dir: [f64; 3],
    length: f64,
    radius: f64,
    parent: Option<usize>,
}

fn rotate(d: [f64; 3], deg: f64) -> [f64; 3] {
    let (s, c) = libm::sincos(deg.to_radians());
    [c * d[0] - s * d[1], s * d[0] + c * d[1], d[2]]
}

fn end(v: &Vessel) -> [f64; 3] {
    [
        v.start[0] + v.length * v.dir[0],
        v.start[1] + v.length * v.dir[1],
        v.start[2] + v.length * v.dir[2],
    ]
}

fn vessels(t: &Template) -> Vec<Vessel> {
    let root = |length, radius| Vessel {
        start: [0.0; 3],
        dir: [1.0, 0.0, 0.0],
        length,
        radius,
        parent: None,
    };
    match *t {
        Template::Tube { length, radius } => vec![root(length, radius)],
        Template::Bifurcation {
            parent_length,
            parent_radius,
            daughter_length,
            daughter_radius,
            angle,
        } => {
            let p = root(parent_length, parent_radius);
            let e = end(&p);
            let child = |a| Vessel {
                start: e,
                dir: rotate(p.dir, a),
                length: daughter_length,
                radius: daughter_radius,
                parent: Some(0),
            };
            let (c1, c2) = (child(angle), child(-angle));
            vec![p, c1, c2]
        }
        Template::Tree {
            generations,
            root_length,
            root_radius,
            length_ratio,
            radius_ratio,
            angle,
        } => {
            let mut out = vec![root(root_length, root_radius)];
            let mut level = vec![0usize];
            for g in 0..generations {
                let spread = angle / (1 << g) as f64;
                let mut next = Vec::with_capacity(2 * level.len());
                for &p in &level {
                    let e = end(&out[p]);
                    for a in [spread, -spread] {
                        out.push(Vessel {
                            start: e,
                            dir: rotate(out[p].dir, a),
                            length: out[p].length * length_ratio,
                            radius: out[p].radius * radius_ratio,
                            parent: Some(p),
                        });
                        next.push(out.len() - 1);
                    }
                }
                level = next;
            }
            out
        }
    }
}

/// Builds the 1D geometry and the centerline graph of a template. Child
/// segments share their first 1D node position with the parent's last node,
/// so that node is not repeated in the graph; the parent's last node and the
/// first graph node of every child are labeled as junction nodes.
pub fn generate_geometry(spec: &GeometrySpec) -> Result<GeneratedGeometry> {
    spec.validate()?;
    let vs = vessels(&spec.template);
    let mut segments = Vec::with_capacity(vs.len());
    let mut junctions: Vec<Junction1D> = Vec::new();
    for (i, v) in vs.iter().enumerate() {
        let n = (libm::round(v.length / spec.spacing) as usize).max(1) + 1;
        if v.parent.is_some() && n < 3 {
            return Err(Error::Validation(format!(
                "branch {i} needs at least 3 nodes; reduce the node spacing"
            )));
        }
        segments.push(Segment1D::tapered(v.length, v.radius, v.radius * spec.taper, n, spec.p0));
        if let Some(p) = v.parent {
            match junctions.iter_mut().find(|j| j.parent == p) {
                Some(j) => j.children.push(i),
                None => junctions.push(Junction1D {
                    parent: p,
                    children: vec![i],
                }),
            }
        }
    }
    let geometry = Geometry1D::new(segments, junctions)?;
    let offsets = geometry.node_offsets();
    let outlet_segments = geometry.outlet_segments();

    let mut positions = Vec::new();
    let mut types = Vec::new();
    let mut areas = Vec::new();
    let mut node_map = Vec::new();
    let mut links = Vec::new();
    // graph index of the last node of each segment
    let mut last = vec![0usize; vs.len()];
    for (s, v) in vs.iter().enumerate() {
        let seg = &geometry.segments[s];
        let first = usize::from(v.parent.is_some());
        for i in first..seg.len() {
            let z = seg.z[i];
            positions.push([
                v.start[0] + z * v.dir[0],
                v.start[1] + z * v.dir[1],
                v.start[2] + z * v.dir[2],
            ]);
            areas.push(seg.a0[i]);
            node_map.push(offsets[s] + i);
            let g = positions.len() - 1;
            let kind = if v.parent.is_none() && i == 0 {
                NodeType::Inlet
            } else if i + 1 == seg.len() && outlet_segments.contains(&s) {
                NodeType::Outlet
            } else if i + 1 == seg.len() || (v.parent.is_some() && i == 1) {
                NodeType::Junction
            } else {
                NodeType::Branch
            };
            types.push(kind);
            if i > first {
                links.push((g - 1, g));
            } else if let Some(p) = v.parent {
                links.push((last[p], g));
            }
        }
        last[s] = positions.len() - 1;
    }

    let outlet_area: Vec<f64> = outlet_segments.iter().map(|&s| *geometry.segments[s].a0.last().unwrap()).collect();
    let total: f64 = outlet_area.iter().sum();
    let outlets: Vec<RcrParams> = outlet_area
        .iter()
        .map(|a| {
            let w = a / total;
            let mut bc = spec.outlet_bc;
            bc.rp /= 2.0 * w;
            bc.rd /= 2.0 * w;
            bc.c *= 2.0 * w;
            bc
        })
        .collect();
    let base = BoundarySet {
        inflow: spec.inflow.clone(),
        outlets,
    };
    let bcs: BTreeMap<usize, RcrParams> = outlet_segments
        .iter()
        .zip(&base.outlets)
        .map(|(&s, bc)| (last[s], *bc))
        .collect();
    let scalars = GraphScalars {
        t_cc: spec.inflow.period,
        p_min: spec.p0,
        p_max: spec.p0,
    };
    let graph = build_graph(&positions, &links, &types, &areas, scalars, bcs)?;
    Ok(GeneratedGeometry {
        geometry,
        graph: add_boundary_edges(&graph),
        node_map,
        outlet_nodes: outlet_segments.iter().map(|&s| last[s]).collect(),
        outlet_segments,
        base,
        wall: spec.wall,
    })
}

impl GeneratedGeometry {
    /// 1D model with the given boundary set.
    pub fn model(&self, bcs: &BoundarySet) -> Result<Model1D> {
        self.model_with(&bcs.outlets)
    }

    /// 1D model with one parameter group per outlet segment.
    pub fn model_with(&self, outlets: &[RcrParams]) -> Result<Model1D> {
        if outlets.len() != self.outlet_segments.len() {
            return Err(Error::Dimension {
                expected: self.outlet_segments.len(),
                got: outlets.len(),
            });
        }
        let map = self.outlet_segments.iter().copied().zip(outlets.iter().copied()).collect();
        Model1D::new(self.geometry.clone(), self.wall, map)
    }

    /// Graph carrying the given outlet parameters.
    pub fn graph_with(&self, bcs: &BoundarySet) -> Result<CenterlineGraph> {
        let mut g = self.graph.clone();
        g.set_outlet_bcs(self.outlet_nodes.iter().copied().zip(bcs.outlets.iter().copied()).collect())?;
        Ok(g)
    }

    /// Outlet parameters stored on a graph of this geometry, per outlet segment.
    pub fn outlet_params(&self, graph: &CenterlineGraph) -> Result<Vec<RcrParams>> {
        self.outlet_nodes
            .iter()
            .map(|n| {
                graph
                    .outlet_bcs()
                    .get(n)
                    .copied()
                    .ok_or_else(|| Error::Validation(format!("graph has no outlet parameters at node {n}")))
            })
            .collect()
    }

    /// Restricts 1D nodal values to the graph nodes.
    pub fn project(&self, values: &[f64]) -> Vec<f64> {
        self.node_map.iter().map(|&i| values[i]).collect()
    }

    /// Expands graph nodal values to all 1D nodes. The first node of a child
    /// segment takes the pressure of the junction and the flow of its own
    /// first graph node.
    pub fn lift(&self, p: &[f64], q: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = self.geometry.num_nodes();
        let mut p1 = vec![f64::NAN; n];
        let mut q1 = vec![f64::NAN; n];
        for (g, &i) in self.node_map.iter().enumerate() {
            p1[i] = p[g];
            q1[i] = q[g];
        }
        let offsets = self.geometry.node_offsets();
        for j in &self.geometry.junctions {
            let parent_end = offsets[j.parent] + self.geometry.segments[j.parent].len() - 1;
            for &c in &j.children {
                p1[offsets[c]] = p1[parent_end];
                q1[offsets[c]] = q1[offsets[c] + 1];
            }
        }
        (p1, q1)
    }
}
