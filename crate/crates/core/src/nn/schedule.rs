use alloc::format;

use crate::error::{Error, Result};

/// Cosine annealing from `lr0` at epoch 0 to `lr_final` at `total_epochs`.
pub fn cosine_lr(epoch: usize, total_epochs: usize, lr0: f64, lr_final: f64) -> Result<f64> {
    if epoch > total_epochs {
        return Err(Error::Domain(format!(
            "epoch {epoch} outside [0, {total_epochs}]"
        )));
    }
    if epoch == 0 {
        return Ok(lr0);
    }
    if epoch == total_epochs {
        return Ok(lr_final);
    }
    let x = core::f64::consts::PI * epoch as f64 / total_epochs as f64;
    Ok(lr_final + 0.5 * (lr0 - lr_final) * (1.0 + libm::cos(x)))
}
