//! Trained models on disk.
//!
//! A checkpoint stores the run that produced it together with a SHA-256 of
//! that run's canonical JSON. Loading recomputes the hash, and callers that
//! want to reuse a checkpoint for a particular run compare hashes with
//! [`Checkpoint::expect_run`].

use std::path::Path;

use serde::{Deserialize, Serialize};
use vesselgnn_core::mgn::{GnnConfig, GnnModel};
use vesselgnn_core::training::{EpochRecord, Fold, TrainConfig};

use crate::error::{Error, Result};
use crate::io::{read_json, sha256_hex, write_json};

pub const CHECKPOINT_VERSION: u32 = 1;

/// Everything that determines a trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub dataset: String,
    pub gnn: GnnConfig,
    pub train: TrainConfig,
    pub fold_index: Option<usize>,
    pub fold: Fold,
}

impl RunSpec {
    pub fn hash(&self) -> String {
        sha256_hex(&serde_json::to_vec(self).expect("in-memory JSON serialization cannot fail"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub config_hash: String,
    pub run: RunSpec,
    pub model: GnnModel,
    pub history: Vec<EpochRecord>,
}

impl Checkpoint {
    pub fn new(run: RunSpec, model: GnnModel, history: Vec<EpochRecord>) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            config_hash: run.hash(),
            run,
            model,
            history,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    /// Reads a checkpoint and checks its version, hash and model config.
    pub fn load(path: &Path) -> Result<Self> {
        let ck: Checkpoint = read_json(path)?;
        let fail = |reason: String| Error::Checkpoint {
            path: path.into(),
            reason,
        };
        if ck.version != CHECKPOINT_VERSION {
            return Err(fail(format!("unsupported version {}", ck.version)));
        }
        let actual = ck.run.hash();
        if actual != ck.config_hash {
            return Err(fail(format!("config hash {} does not match its run ({actual})", ck.config_hash)));
        }
        if *ck.model.config() != ck.run.gnn {
            return Err(fail("model architecture differs from the recorded run".into()));
        }
        Ok(ck)
    }

    /// Fails unless this checkpoint was trained by exactly `run`.
    pub fn expect_run(&self, run: &RunSpec) -> Result<()> {
        if self.config_hash != run.hash() {
            return Err(Error::Invalid(format!(
                "checkpoint was trained with config {} (variant {}), requested {} (variant {})",
                self.config_hash,
                self.run.gnn.ablation.name(),
                run.hash(),
                run.gnn.ablation.name()
            )));
        }
        Ok(())
    }
}
