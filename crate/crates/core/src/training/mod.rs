//! Strided-loss training with noise injection, augmentation and k-fold
//! cross-validation.

mod data;
mod loss;
mod train;

pub use data::{augment_offsets, batch_iterator, inject_noise, kfold_split, Example, Fold, FoldPlan, Sample};
pub use loss::{strided_loss, strided_loss_grad};
pub use train::{samples_of, train, EpochRecord, TrainOutcome};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub stride: usize,
    /// Noise std in normalized units.
    pub noise_std: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub lr0: f64,
    pub lr_final: f64,
    pub boundary_weight: f64,
    pub later_weight: f64,
    pub seed: u64,
    /// Stride starts drawn per trajectory and epoch; all starts when `None`.
    #[serde(default)]
    pub samples_per_trajectory: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            stride: 5,
            noise_std: 5e-2,
            batch_size: 100,
            epochs: 100,
            lr0: 1e-3,
            lr_final: 1e-6,
            boundary_weight: 100.0,
            later_weight: 0.5,
            seed: 0,
            samples_per_trajectory: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.stride == 0 {
            return Err(Error::Config("stride must be at least 1".into()));
        }
        if !(self.noise_std >= 0.0) {
            return Err(Error::Config("noise std must be non-negative".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if self.samples_per_trajectory == Some(0) {
            return Err(Error::Config("samples per trajectory must be positive".into()));
        }
        if !(self.lr0 > 0.0 && self.lr_final > 0.0) {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        Ok(())
    }
}
