use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::data::{batch_iterator, Example, Fold, Sample};
use super::loss::batch_loss;
use super::TrainConfig;
use crate::error::{Error, Result};
use crate::graph::fit_normalization;
use crate::mgn::{GnnConfig, GnnModel, PreparedGraph};
use crate::nn::{cosine_lr, AdamState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    /// Noise-free strided loss on the held-out examples.
    pub test_loss: Option<f64>,
    pub lr: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: GnnModel,
    pub history: Vec<EpochRecord>,
}

/// Every valid stride start of the given examples.
pub fn samples_of(examples: &[Example], indices: &[usize], stride: usize) -> Vec<Sample> {
    indices
        .iter()
        .flat_map(|&e| {
            let len = examples[e].trajectory.len();
            (0..len.saturating_sub(stride)).map(move |start| Sample { example: e, start })
        })
        .collect()
}

/// `n` evenly spaced starts per example.
fn spaced_samples(examples: &[Example], indices: &[usize], stride: usize, n: usize) -> Vec<Sample> {
    indices
        .iter()
        .flat_map(|&e| {
            let valid = examples[e].trajectory.len().saturating_sub(stride);
            let n = n.min(valid);
            (0..n).map(move |j| Sample {
                example: e,
                start: j * valid / n,
            })
        })
        .collect()
}

fn resolve(examples: &[Example], ids: &[String]) -> Result<Vec<usize>> {
    let by_id: BTreeMap<&str, usize> = examples.iter().enumerate().map(|(i, e)| (e.id.as_str(), i)).collect();
    ids.iter()
        .map(|id| {
            by_id
                .get(id.as_str())
                .copied()
                .ok_or_else(|| Error::Validation(format!("unknown example `{id}`")))
        })
        .collect()
}

/// Fits normalization on the training examples of `fold`, initializes a
/// model from `cfg.seed` and runs the epoch loop.
pub fn train(examples: &[Example], fold: &Fold, gnn: GnnConfig, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let train_idx = resolve(examples, &fold.train)?;
    let test_idx = resolve(examples, &fold.test)?;
    if train_idx.is_empty() {
        return Err(Error::Validation("fold has no training examples".into()));
    }
    let pairs: Vec<_> = train_idx
        .iter()
        .map(|&i| (&examples[i].graph, &examples[i].trajectory))
        .collect();
    let stats = fit_normalization(&pairs)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = GnnModel::new(gnn, stats, &mut rng)?;
    let prepared: Vec<PreparedGraph> = examples.iter().map(|e| model.prepare(&e.graph)).collect::<Result<_>>()?;
    let test_samples = match cfg.samples_per_trajectory {
        Some(n) => spaced_samples(examples, &test_idx, cfg.stride, n),
        None => samples_of(examples, &test_idx, cfg.stride),
    };
    let mut adam = AdamState::new(model.num_params());
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let lr = cosine_lr(epoch, cfg.epochs, cfg.lr0, cfg.lr_final)?;
        let samples = match cfg.samples_per_trajectory {
            None => samples_of(examples, &train_idx, cfg.stride),
            Some(n) => train_idx
                .iter()
                .flat_map(|&e| {
                    let valid = examples[e].trajectory.len().saturating_sub(cfg.stride);
                    let mut picks = index::sample(&mut rng, valid, n.min(valid)).into_vec();
                    picks.sort_unstable();
                    picks.into_iter().map(move |start| Sample { example: e, start })
                })
                .collect(),
        };
        if samples.is_empty() {
            return Err(Error::Validation("training trajectories are shorter than the stride".into()));
        }
        let batches = batch_iterator(&samples, cfg.batch_size, &mut rng)?;
        let mut sum = 0.0;
        for (b, batch) in batches.iter().enumerate() {
            let diverged = || Error::TrainingDivergence { epoch, batch: b };
            let (loss, grads) = batch_loss(&model, examples, &prepared, batch, cfg, Some(&mut rng), true)
                .map_err(|e| match e {
                    Error::Numerical(_) => diverged(),
                    other => other,
                })?;
            if !loss.is_finite() {
                return Err(diverged());
            }
            let grads = grads.expect("gradient requested");
            let mut blocks: Vec<(&mut [f64], &[f64])> = model
                .mlps_mut()
                .iter_mut()
                .zip(&grads.blocks)
                .map(|(m, g)| (m.params_mut(), g.as_slice()))
                .collect();
            adam.step_blocks(&mut blocks, lr).map_err(|_| diverged())?;
            sum += loss * batch.len() as f64;
        }
        let train_loss = sum / samples.len() as f64;
        let test_loss = if test_samples.is_empty() {
            None
        } else {
            Some(batch_loss::<ChaCha8Rng>(&model, examples, &prepared, &test_samples, cfg, None, false)?.0)
        };
        history.push(EpochRecord {
            epoch,
            train_loss,
            test_loss,
            lr,
        });
    }
    Ok(TrainOutcome { model, history })
}
