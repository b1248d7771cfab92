//! Cross-validated training, ablations, sensitivity analysis, convergence
//! studies and the comparison against re-simulation with the 1D solver.

use std::collections::BTreeSet;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use vesselgnn_core::datagen::{Dataset, GeneratedGeometry};
use vesselgnn_core::eval::{
    confidence_interval, model_rollout, one_d_rollout, rollout_errors, sensitivity_factor, trajectory_errors,
};
use vesselgnn_core::graph::FeatureGroup;
use vesselgnn_core::hemo1d::SolverConfig;
use vesselgnn_core::mgn::{Ablation, GnnConfig, GnnModel};
use vesselgnn_core::training::{kfold_split, train, Example, Fold, TrainConfig};

use crate::checkpoint::{Checkpoint, RunSpec};
use crate::error::{Error, Result};
use crate::report::{
    error_report, ComparisonReport, ComparisonRow, ConvergencePoint, ErrorReport, ErrorRow, FeatureSensitivity,
    SensitivityReport, SCHEMA_VERSION,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub gnn: GnnConfig,
    pub train: TrainConfig,
    pub folds: usize,
    /// Seed of the source-level fold assignment.
    pub split_seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            gnn: GnnConfig::default(),
            train: TrainConfig::default(),
            folds: 4,
            split_seed: 0,
        }
    }
}

pub fn examples_by_id<'a>(dataset: &'a Dataset, ids: &[String]) -> Result<Vec<&'a Example>> {
    ids.iter()
        .map(|id| {
            dataset
                .examples
                .iter()
                .find(|e| &e.id == id)
                .ok_or_else(|| Error::Invalid(format!("dataset has no example `{id}`")))
        })
        .collect()
}

/// Generated geometry that an example was simulated on.
pub fn geometry_of<'a>(dataset: &'a Dataset, example: &Example) -> Result<&'a GeneratedGeometry> {
    let entry = dataset
        .manifest
        .entries
        .iter()
        .find(|e| e.source == example.source)
        .ok_or_else(|| Error::Invalid(format!("no manifest entry for source `{}`", example.source)))?;
    dataset
        .manifest
        .specs
        .iter()
        .position(|s| s.name == entry.geometry)
        .map(|i| &dataset.geometries[i])
        .ok_or_else(|| Error::Invalid(format!("no geometry `{}`", entry.geometry)))
}

/// Rollout errors and rollout wall-clock time of every example.
pub fn evaluate(model: &GnnModel, examples: &[&Example], fold: Option<usize>) -> Result<Vec<ErrorRow>> {
    let variant = model.config().ablation.name();
    examples
        .par_iter()
        .map(|e| {
            let t0 = Instant::now();
            let pred = model_rollout(model, &e.graph, &e.trajectory, None)?;
            let runtime_s = t0.elapsed().as_secs_f64();
            let (e_p, e_q) = trajectory_errors(&e.graph, &e.trajectory, &pred)?;
            Ok(ErrorRow {
                trajectory: e.id.clone(),
                fold,
                e_p,
                e_q,
                runtime_s,
                variant: variant.into(),
            })
        })
        .collect()
}

pub fn train_run(dataset: &Dataset, run: RunSpec) -> Result<Checkpoint> {
    let out = train(&dataset.examples, &run.fold, run.gnn, &run.train)?;
    Ok(Checkpoint::new(run, out.model, out.history))
}

pub struct CrossValidation {
    pub report: ErrorReport,
    pub checkpoints: Vec<Checkpoint>,
}

fn fold_checkpoint_path(dir: &Path, variant: Ablation, f: usize) -> std::path::PathBuf {
    dir.join(format!("{}_fold{f}.ckpt", variant.name()))
}

/// Trains one model per fold and evaluates it on the fold's held-out
/// trajectories. With `checkpoint_dir`, existing checkpoints are reused
/// only if they were trained by the identical run; new ones are saved.
pub fn cross_validate(dataset: &Dataset, cfg: &ExperimentConfig, checkpoint_dir: Option<&Path>) -> Result<CrossValidation> {
    cfg.train.validate()?;
    cfg.gnn.validate()?;
    let plan = kfold_split(&dataset.ids(), cfg.folds, cfg.split_seed)?;
    let mut rows = Vec::new();
    let mut checkpoints = Vec::with_capacity(plan.folds.len());
    for (f, fold) in plan.folds.iter().enumerate() {
        let run = RunSpec {
            dataset: dataset.manifest.id.clone(),
            gnn: cfg.gnn,
            train: cfg.train.clone(),
            fold_index: Some(f),
            fold: fold.clone(),
        };
        let path = checkpoint_dir.map(|d| fold_checkpoint_path(d, cfg.gnn.ablation, f));
        let ck = match &path {
            Some(p) if p.exists() => {
                let ck = Checkpoint::load(p)?;
                ck.expect_run(&run)?;
                ck
            }
            _ => {
                let ck = train_run(dataset, run)?;
                if let Some(p) = &path {
                    ck.save(p)?;
                }
                ck
            }
        };
        let test = examples_by_id(dataset, &fold.test)?;
        rows.extend(evaluate(&ck.model, &test, Some(f))?);
        checkpoints.push(ck);
    }
    Ok(CrossValidation {
        report: error_report(rows)?,
        checkpoints,
    })
}

/// Cross-validates the named variant (`baseline`, `no_tau`,
/// `no_boundary_edges` or `no_rcr`).
pub fn ablation_run(dataset: &Dataset, variant: &str, cfg: &ExperimentConfig, checkpoint_dir: Option<&Path>) -> Result<CrossValidation> {
    let mut cfg = cfg.clone();
    cfg.gnn.ablation = Ablation::parse(variant)?;
    cross_validate(dataset, &cfg, checkpoint_dir)
}

/// GNN rollouts against re-simulation with the 1D solver from the ground
/// truth's first cycle state. Solver failures are recorded and skipped.
pub fn compare_models(dataset: &Dataset, model: &GnnModel, ids: &[String], solver: &SolverConfig) -> Result<ComparisonReport> {
    let examples = examples_by_id(dataset, ids)?;
    let mut rows = Vec::with_capacity(2 * examples.len());
    for e in examples {
        let t0 = Instant::now();
        let pred = model_rollout(model, &e.graph, &e.trajectory, None)?;
        let runtime_s = t0.elapsed().as_secs_f64();
        let (ep, eq) = trajectory_errors(&e.graph, &e.trajectory, &pred)?;
        rows.push(ComparisonRow {
            trajectory: e.id.clone(),
            family: "gnn".into(),
            e_p: Some(ep),
            e_q: Some(eq),
            runtime_s,
            failure: None,
        });
        let gen = geometry_of(dataset, e)?;
        let t0 = Instant::now();
        let sim = one_d_rollout(gen, &e.graph, &e.trajectory, solver);
        let runtime_s = t0.elapsed().as_secs_f64();
        let row = match sim.and_then(|p| trajectory_errors(&e.graph, &e.trajectory, &p)) {
            Ok((ep, eq)) => ComparisonRow {
                trajectory: e.id.clone(),
                family: "1d".into(),
                e_p: Some(ep),
                e_q: Some(eq),
                runtime_s,
                failure: None,
            },
            Err(err) => ComparisonRow {
                trajectory: e.id.clone(),
                family: "1d".into(),
                e_p: None,
                e_q: None,
                runtime_s,
                failure: Some(err.to_string()),
            },
        };
        rows.push(row);
    }
    Ok(ComparisonReport {
        schema_version: SCHEMA_VERSION,
        rows,
    })
}

/// Sensitivity factors of every feature group the models read, averaged
/// over each model's held-out trajectories and then over models.
pub fn sensitivity(models: &[Checkpoint], dataset: &Dataset, sigma: f64, seed: u64) -> Result<SensitivityReport> {
    if models.is_empty() {
        return Err(Error::Invalid("sensitivity analysis needs at least one model".into()));
    }
    let groups: Vec<FeatureGroup> = FeatureGroup::ALL
        .into_iter()
        .filter(|&g| models.iter().all(|m| feature_is_input(&m.model, g)))
        .collect();
    let mut per_feature = vec![Vec::with_capacity(models.len()); groups.len()];
    let (mut base_p, mut base_q, mut n_base) = (0.0, 0.0, 0usize);
    for (m, ck) in models.iter().enumerate() {
        let test = examples_by_id(dataset, &ck.run.fold.test)?;
        if test.is_empty() {
            return Err(Error::Invalid(format!("model {m} has no held-out trajectories")));
        }
        let baselines = test
            .iter()
            .map(|e| rollout_errors(&ck.model, &e.graph, &e.trajectory))
            .collect::<vesselgnn_core::Result<Vec<_>>>()?;
        for b in &baselines {
            base_p += b.0;
            base_q += b.1;
            n_base += 1;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(m as u64));
        for (g, &group) in groups.iter().enumerate() {
            let (mut fp, mut fq) = (0.0, 0.0);
            for (e, &b) in test.iter().zip(&baselines) {
                let (a, c) = sensitivity_factor(&ck.model, &e.graph, &e.trajectory, group, sigma, b, &mut rng)?;
                fp += a;
                fq += c;
            }
            per_feature[g].push((fp / test.len() as f64, fq / test.len() as f64));
        }
    }
    let features = groups
        .iter()
        .zip(per_feature)
        .map(|(g, per_model)| FeatureSensitivity {
            feature: g.name().into(),
            factor_p: per_model.iter().map(|f| f.0).sum::<f64>() / per_model.len() as f64,
            factor_q: per_model.iter().map(|f| f.1).sum::<f64>() / per_model.len() as f64,
            per_model,
        })
        .collect();
    Ok(SensitivityReport {
        schema_version: SCHEMA_VERSION,
        sigma,
        models: models.len(),
        baseline: (base_p / n_base as f64, base_q / n_base as f64),
        features,
    })
}

fn feature_is_input(model: &GnnModel, g: FeatureGroup) -> bool {
    let chans = if g.is_edge() {
        model.config().edge_channels()
    } else {
        model.config().node_channels()
    };
    chans.iter().any(|c| g.channels().contains(c))
}

/// Test error as a function of the number of training trajectories. The
/// test set is the first fold's held-out sources; each repetition draws
/// its training trajectories from the remaining ones and trains with its
/// own seed.
pub fn convergence(dataset: &Dataset, sizes: &[usize], seeds: &[u64], cfg: &ExperimentConfig) -> Result<Vec<ConvergencePoint>> {
    if seeds.is_empty() {
        return Err(Error::Invalid("convergence study needs at least one seed".into()));
    }
    let plan = kfold_split(&dataset.ids(), cfg.folds, cfg.split_seed)?;
    let held_out = &plan.folds[0];
    let pool: Vec<String> = held_out.train.clone();
    if let Some(&n) = sizes.iter().find(|&&n| n == 0 || n > pool.len()) {
        return Err(Error::Invalid(format!(
            "training set size {n} outside 1..={}",
            pool.len()
        )));
    }
    let test = examples_by_id(dataset, &held_out.test)?;
    let mut points = Vec::with_capacity(sizes.len());
    for &n in sizes {
        let (mut ep, mut eq) = (Vec::new(), Vec::new());
        for &seed in seeds {
            let mut ids = pool.clone();
            ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            ids.truncate(n);
            let chosen: BTreeSet<&String> = ids.iter().collect();
            let fold = Fold {
                train: pool.iter().filter(|id| chosen.contains(id)).cloned().collect(),
                test: held_out.test.clone(),
            };
            let run = RunSpec {
                dataset: dataset.manifest.id.clone(),
                gnn: cfg.gnn,
                train: TrainConfig {
                    seed,
                    ..cfg.train.clone()
                },
                fold_index: None,
                fold,
            };
            let ck = train_run(dataset, run)?;
            let rows = evaluate(&ck.model, &test, None)?;
            ep.push(rows.iter().map(|r| r.e_p).sum::<f64>() / rows.len() as f64);
            eq.push(rows.iter().map(|r| r.e_q).sum::<f64>() / rows.len() as f64);
        }
        points.push(ConvergencePoint {
            train_trajectories: n,
            e_p_interval: confidence_interval(&ep)?,
            e_q_interval: confidence_interval(&eq)?,
            e_p: ep,
            e_q: eq,
        });
    }
    Ok(points)
}
