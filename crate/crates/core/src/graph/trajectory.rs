use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pressure (barye) and flow rate (cm^3/s) at every node at one time index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeState {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub loading: bool,
    pub k: usize,
}

impl NodeState {
    pub fn new(p: Vec<f64>, q: Vec<f64>, loading: bool, k: usize) -> Result<Self> {
        if p.len() != q.len() {
            return Err(Error::Dimension {
                expected: p.len(),
                got: q.len(),
            });
        }
        Ok(Self { p, q, loading, k })
    }

    /// Constant state `p = p_rest`, `q = 0`.
    pub fn rest(num_nodes: usize, p_rest: f64, loading: bool, k: usize) -> Self {
        Self {
            p: alloc::vec![p_rest; num_nodes],
            q: alloc::vec![0.0; num_nodes],
            loading,
            k,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.p.len()
    }

    pub fn is_finite(&self) -> bool {
        self.p.iter().chain(self.q.iter()).all(|v| v.is_finite())
    }
}

/// Time series of node states at a constant time step.
///
/// The first `loading_steps` states belong to the loading ramp; the cardiac
/// cycle starts at index `loading_steps`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub graph_id: String,
    pub dt: f64,
    pub states: Vec<NodeState>,
    /// Prescribed inlet flow at each time index.
    pub inlet_flow: Vec<f64>,
    pub loading_steps: usize,
}

impl Trajectory {
    pub fn new(
        graph_id: String,
        dt: f64,
        states: Vec<NodeState>,
        inlet_flow: Vec<f64>,
        loading_steps: usize,
    ) -> Result<Self> {
        let t = Self {
            graph_id,
            dt,
            states,
            inlet_flow,
            loading_steps,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) {
            return Err(Error::Validation(format!("dt must be positive, got {}", self.dt)));
        }
        let Some(first) = self.states.first() else {
            return Err(Error::Validation("trajectory has no states".into()));
        };
        let n = first.num_nodes();
        let k0 = first.k;
        for (offset, s) in self.states.iter().enumerate() {
            if s.num_nodes() != n || s.q.len() != n {
                return Err(Error::Validation(format!(
                    "state {offset} has {} nodes, expected {n}",
                    s.num_nodes()
                )));
            }
            if s.k != k0 + offset {
                return Err(Error::Validation(format!(
                    "time indices are not consecutive at position {offset}"
                )));
            }
        }
        if self.inlet_flow.len() != self.states.len() {
            return Err(Error::Validation(format!(
                "inlet flow has {} samples for {} states",
                self.inlet_flow.len(),
                self.states.len()
            )));
        }
        if self.loading_steps > self.states.len() {
            return Err(Error::Validation("loading phase longer than trajectory".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn num_nodes(&self) -> usize {
        self.states.first().map_or(0, |s| s.num_nodes())
    }

    /// Number of cycle steps `M` (states after the loading ramp, minus one).
    pub fn cycle_steps(&self) -> usize {
        self.states.len().saturating_sub(self.loading_steps + 1)
    }

    /// Loading flag for absolute time index `k` of this trajectory.
    pub fn loading_at(&self, k: usize) -> bool {
        k < self.loading_steps
    }
}
