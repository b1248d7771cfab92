use alloc::format;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::channels;

/// Model variants used by the ablation study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    #[default]
    Baseline,
    /// Drops area, tangent, cycle period, pressure bounds, outlet
    /// parameters, loading flag and edge type.
    NoTau,
    NoBoundaryEdges,
    /// Drops the three outlet-parameter channels.
    NoRcr,
}

impl Ablation {
    pub const ALL: [Ablation; 4] = [
        Ablation::Baseline,
        Ablation::NoTau,
        Ablation::NoBoundaryEdges,
        Ablation::NoRcr,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Ablation::Baseline => "baseline",
            Ablation::NoTau => "no_tau",
            Ablation::NoBoundaryEdges => "no_boundary_edges",
            Ablation::NoRcr => "no_rcr",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown variant `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GnnConfig {
    /// Latent width shared by node and edge paths.
    pub latent: usize,
    /// Message-passing iterations.
    pub iterations: usize,
    pub hidden: usize,
    pub hidden_layers: usize,
    pub ablation: Ablation,
}

impl Default for GnnConfig {
    fn default() -> Self {
        Self {
            latent: 16,
            iterations: 5,
            hidden: 64,
            hidden_layers: 2,
            ablation: Ablation::Baseline,
        }
    }
}

impl GnnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.latent == 0 || self.iterations == 0 || self.hidden == 0 {
            return Err(Error::Config("latent width, iterations and hidden width must be positive".into()));
        }
        Ok(())
    }

    /// Node feature channels fed to the encoder, in order.
    pub fn node_channels(&self) -> Vec<usize> {
        use channels::*;
        match self.ablation {
            Ablation::Baseline | Ablation::NoBoundaryEdges => (0..17).collect(),
            Ablation::NoTau => [PRESSURE, FLOW].into_iter().chain(NODE_TYPE).collect(),
            Ablation::NoRcr => (0..17).filter(|c| !(RP..=RD).contains(c)).collect(),
        }
    }

    pub fn edge_channels(&self) -> Vec<usize> {
        use channels::*;
        match self.ablation {
            Ablation::NoTau => DIRECTION.chain([PATH_LENGTH]).collect(),
            _ => (0..8).collect(),
        }
    }

    pub fn boundary_edges(&self) -> bool {
        self.ablation != Ablation::NoBoundaryEdges
    }
}
