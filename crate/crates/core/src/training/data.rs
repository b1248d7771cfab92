use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::datagen::{loading_ramp, ramp_value};
use crate::error::{Error, Result};
use crate::graph::{CenterlineGraph, NodeState, NormStats, Trajectory};

/// A ground-truth trajectory on its graph. `source` groups augmented
/// variants with the simulation they came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub id: String,
    pub source: String,
    pub graph: CenterlineGraph,
    pub trajectory: Trajectory,
}

/// Start of one strided-loss evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Sample {
    pub example: usize,
    pub start: usize,
}

/// Adds `N(0, sigma^2)` noise in normalized units to pressure and flow.
pub fn inject_noise<R: Rng + ?Sized>(state: &NodeState, sigma: f64, stats: &NormStats, rng: &mut R) -> NodeState {
    let mut out = state.clone();
    if sigma == 0.0 {
        return out;
    }
    let (sp, sq) = (stats.node.scale(0), stats.node.scale(1));
    for p in &mut out.p {
        let z: f64 = rng.sample(StandardNormal);
        *p += sigma * sp * z;
    }
    for q in &mut out.q {
        let z: f64 = rng.sample(StandardNormal);
        *q += sigma * sq * z;
    }
    out
}

/// Rotates the periodic cycle by `i * M / n_offsets` steps for every `i` and
/// regenerates the loading ramp from the rest pressure `p_rest`.
pub fn augment_offsets(trajectory: &Trajectory, n_offsets: usize, p_rest: f64) -> Result<Vec<Trajectory>> {
    let ls = trajectory.loading_steps;
    let m = trajectory.cycle_steps();
    if n_offsets == 0 {
        return Err(Error::Validation("at least one offset is required".into()));
    }
    if m < n_offsets.max(2) {
        return Err(Error::Validation(format!(
            "trajectory has {m} cycle steps, too short for {n_offsets} offsets"
        )));
    }
    let cycle = &trajectory.states[ls..];
    let inflow = &trajectory.inlet_flow[ls..];
    (0..n_offsets)
        .map(|i| {
            let r = i * m / n_offsets;
            let idx = |j: usize| if j + r <= m { j + r } else { j + r - m };
            let first = &cycle[idx(0)];
            let mut states = loading_ramp(first, p_rest, ls);
            let mut flow: Vec<f64> = (0..ls).map(|j| ramp_value(0.0, inflow[idx(0)], j, ls)).collect();
            for j in 0..=m {
                let mut s = cycle[idx(j)].clone();
                s.loading = false;
                s.k = ls + j;
                states.push(s);
                flow.push(inflow[idx(j)]);
            }
            Trajectory::new(trajectory.graph_id.clone(), trajectory.dt, states, flow, ls)
        })
        .collect()
}

/// Train and test example ids of one fold.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Vec<String>,
    pub test: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub folds: Vec<Fold>,
}

/// Groups `(id, source)` pairs by source and deals the shuffled sources into
/// `k` test folds of near-equal size.
pub fn kfold_split(ids: &[(String, String)], k: usize, seed: u64) -> Result<FoldPlan> {
    use rand::SeedableRng;
    let sources: Vec<&String> = {
        let set: BTreeSet<&String> = ids.iter().map(|(_, s)| s).collect();
        set.into_iter().collect()
    };
    if k < 2 {
        return Err(Error::Config("k-fold split needs k >= 2".into()));
    }
    if k > sources.len() {
        return Err(Error::Config(format!("k = {k} exceeds the {} sources", sources.len())));
    }
    let mut order = sources;
    order.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
    let n = order.len();
    let folds = (0..k)
        .map(|f| {
            let test_sources: BTreeSet<&String> = order[f * n / k..(f + 1) * n / k].iter().copied().collect();
            let (test, train): (Vec<_>, Vec<_>) = ids.iter().partition(|(_, s)| test_sources.contains(s));
            Fold {
                train: train.into_iter().map(|(id, _)| id.clone()).collect(),
                test: test.into_iter().map(|(id, _)| id.clone()).collect(),
            }
        })
        .collect();
    Ok(FoldPlan { k, folds })
}

/// Shuffles the samples and cuts them into batches of at most `batch_size`.
pub fn batch_iterator<R: Rng + ?Sized>(samples: &[Sample], batch_size: usize, rng: &mut R) -> Result<Vec<Vec<Sample>>> {
    if batch_size == 0 {
        return Err(Error::Config("batch size must be positive".into()));
    }
    let mut order = samples.to_vec();
    order.shuffle(rng);
    Ok(order.chunks(batch_size).map(|c| c.to_vec()).collect())
}
