//! Graph-network surrogate: encode, process with residual message passing,
//! decode to per-node pressure and flow increments.

mod config;
pub(crate) mod engine;
mod model;
mod rollout;

pub use config::{Ablation, GnnConfig};
pub use engine::InputPerturbation;
pub use model::{GnnGrads, GnnModel, PreparedGraph};
pub use rollout::{
    decode, encode, gnn_step, process_step, rollout, rollout_prepared, LatentGraph, Schedule,
};

#[cfg(test)]
mod tests;
