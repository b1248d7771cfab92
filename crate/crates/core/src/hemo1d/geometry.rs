use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A single vessel: axial nodes with reference profiles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment1D {
    /// Axial coordinate of each node (cm), strictly increasing.
    pub z: Vec<f64>,
    /// Reference area (cm^2).
    pub a0: Vec<f64>,
    /// Reference radius (cm).
    pub r0: Vec<f64>,
    /// Reference pressure (barye).
    pub p0: Vec<f64>,
}

impl Segment1D {
    /// Uniform tube with `n` nodes; `r0 = sqrt(A0 / pi)`.
    pub fn uniform(length: f64, radius: f64, n: usize, p0: f64) -> Self {
        Self::tapered(length, radius, radius, n, p0)
    }

    /// Linearly tapered tube from `r_in` to `r_out`.
    pub fn tapered(length: f64, r_in: f64, r_out: f64, n: usize, p0: f64) -> Self {
        let denom = (n.max(2) - 1) as f64;
        let z: Vec<f64> = (0..n).map(|i| length * i as f64 / denom).collect();
        let r0: Vec<f64> = (0..n)
            .map(|i| r_in + (r_out - r_in) * i as f64 / denom)
            .collect();
        let a0 = r0.iter().map(|r| core::f64::consts::PI * r * r).collect();
        Self {
            z,
            a0,
            r0,
            p0: vec![p0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    pub fn length(&self) -> f64 {
        self.z.last().copied().unwrap_or(0.0) - self.z.first().copied().unwrap_or(0.0)
    }

    fn validate(&self, index: usize) -> Result<()> {
        let n = self.z.len();
        if n < 2 {
            return Err(Error::Validation(format!("segment {index} needs at least 2 nodes")));
        }
        if self.a0.len() != n || self.r0.len() != n || self.p0.len() != n {
            return Err(Error::Validation(format!("segment {index} profiles differ in length")));
        }
        for w in self.z.windows(2) {
            if !(w[1] - w[0] > 0.0) {
                return Err(Error::Validation(format!(
                    "segment {index} node spacing must be positive"
                )));
            }
        }
        if self.a0.iter().chain(&self.r0).any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::Validation(format!("segment {index} has non-positive A0 or r0")));
        }
        if self.p0.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation(format!("segment {index} has non-finite p0")));
        }
        Ok(())
    }
}

/// Junction coupling the last node of `parent` to the first node of each child.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Junction1D {
    pub parent: usize,
    pub children: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Geometry1D {
    pub segments: Vec<Segment1D>,
    pub junctions: Vec<Junction1D>,
}

impl Geometry1D {
    pub fn new(segments: Vec<Segment1D>, junctions: Vec<Junction1D>) -> Result<Self> {
        let g = Self {
            segments,
            junctions,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn single(segment: Segment1D) -> Result<Self> {
        Self::new(vec![segment], Vec::new())
    }

    pub fn validate(&self) -> Result<()> {
        let s = self.segments.len();
        if s == 0 {
            return Err(Error::Validation("geometry has no segments".into()));
        }
        for (i, seg) in self.segments.iter().enumerate() {
            seg.validate(i)?;
        }
        let mut has_parent = vec![false; s];
        let mut is_parent = vec![false; s];
        for j in &self.junctions {
            if j.parent >= s || j.children.is_empty() {
                return Err(Error::Topology("junction references an invalid parent".into()));
            }
            if is_parent[j.parent] {
                return Err(Error::Topology(format!(
                    "segment {} feeds more than one junction",
                    j.parent
                )));
            }
            is_parent[j.parent] = true;
            for &c in &j.children {
                if c >= s || c == j.parent || has_parent[c] {
                    return Err(Error::Topology(format!("invalid junction child {c}")));
                }
                has_parent[c] = true;
            }
        }
        let roots = has_parent.iter().filter(|h| !**h).count();
        if roots != 1 {
            return Err(Error::Topology(format!(
                "expected exactly one inlet segment, found {roots}"
            )));
        }
        // Reachability from the root rules out cycles given one parent per segment.
        let mut seen = vec![false; s];
        let mut stack = vec![self.inlet_segment()];
        while let Some(u) = stack.pop() {
            if seen[u] {
                return Err(Error::Topology("junction table contains a cycle".into()));
            }
            seen[u] = true;
            if let Some(j) = self.junctions.iter().find(|j| j.parent == u) {
                stack.extend(&j.children);
            }
        }
        if seen.iter().any(|v| !v) {
            return Err(Error::Topology("junction table is not a connected tree".into()));
        }
        Ok(())
    }

    /// The unique segment that is nobody's child.
    pub fn inlet_segment(&self) -> usize {
        (0..self.segments.len())
            .find(|&i| !self.junctions.iter().any(|j| j.children.contains(&i)))
            .unwrap_or(0)
    }

    /// Segments that feed no junction, in ascending order.
    pub fn outlet_segments(&self) -> Vec<usize> {
        (0..self.segments.len())
            .filter(|&i| !self.junctions.iter().any(|j| j.parent == i))
            .collect()
    }

    /// Global index of the first node of every segment.
    pub fn node_offsets(&self) -> Vec<usize> {
        let mut off = Vec::with_capacity(self.segments.len());
        let mut acc = 0;
        for s in &self.segments {
            off.push(acc);
            acc += s.len();
        }
        off
    }

    pub fn num_nodes(&self) -> usize {
        self.segments.iter().map(|s| s.len()).sum()
    }

    /// Reference profiles flattened in global node order.
    pub fn reference_areas(&self) -> Vec<f64> {
        self.segments.iter().flat_map(|s| s.a0.iter().copied()).collect()
    }
}
