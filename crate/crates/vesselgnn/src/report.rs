//! Report rows and summaries written by the experiment drivers.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use vesselgnn_core::eval::{confidence_interval, Interval};

use crate::error::{Error, Result};

/// Version of the JSON summary layout.
pub const SCHEMA_VERSION: u32 = 1;

/// One rollout of one trajectory. Field order is the CSV column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRow {
    pub trajectory: String,
    pub fold: Option<usize>,
    pub e_p: f64,
    pub e_q: f64,
    pub runtime_s: f64,
    pub variant: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorSummary {
    pub schema_version: u32,
    pub variant: String,
    pub trajectories: usize,
    /// Mean and interval over trajectories.
    pub e_p: Interval,
    pub e_q: Interval,
    /// Mean and interval over per-fold means, when rows carry folds.
    pub fold_e_p: Option<Interval>,
    pub fold_e_q: Option<Interval>,
    pub mean_runtime_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub summary: ErrorSummary,
    pub rows: Vec<ErrorRow>,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Summarizes rows of a single variant.
pub fn summarize(rows: &[ErrorRow]) -> Result<ErrorSummary> {
    let first = rows.first().ok_or_else(|| Error::Invalid("no rows to summarize".into()))?;
    if rows.iter().any(|r| r.variant != first.variant) {
        return Err(Error::Invalid("rows of several variants in one summary".into()));
    }
    let ep: Vec<f64> = rows.iter().map(|r| r.e_p).collect();
    let eq: Vec<f64> = rows.iter().map(|r| r.e_q).collect();
    let mut folds: BTreeMap<usize, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for r in rows {
        if let Some(f) = r.fold {
            let e = folds.entry(f).or_default();
            e.0.push(r.e_p);
            e.1.push(r.e_q);
        }
    }
    let (fold_e_p, fold_e_q) = if folds.is_empty() {
        (None, None)
    } else {
        let fp: Vec<f64> = folds.values().map(|v| mean(&v.0)).collect();
        let fq: Vec<f64> = folds.values().map(|v| mean(&v.1)).collect();
        (Some(confidence_interval(&fp)?), Some(confidence_interval(&fq)?))
    };
    Ok(ErrorSummary {
        schema_version: SCHEMA_VERSION,
        variant: first.variant.clone(),
        trajectories: rows.len(),
        e_p: confidence_interval(&ep)?,
        e_q: confidence_interval(&eq)?,
        fold_e_p,
        fold_e_q,
        mean_runtime_s: mean(&rows.iter().map(|r| r.runtime_s).collect::<Vec<_>>()),
    })
}

pub fn error_report(rows: Vec<ErrorRow>) -> Result<ErrorReport> {
    Ok(ErrorReport {
        summary: summarize(&rows)?,
        rows,
    })
}

/// Splits rows by variant, in order of first appearance, and summarizes each.
pub fn summarize_by_variant(rows: &[ErrorRow]) -> Result<Vec<ErrorSummary>> {
    let mut order: Vec<&str> = Vec::new();
    for r in rows {
        if !order.contains(&r.variant.as_str()) {
            order.push(&r.variant);
        }
    }
    order
        .into_iter()
        .map(|v| {
            let group: Vec<ErrorRow> = rows.iter().filter(|r| r.variant == v).cloned().collect();
            summarize(&group)
        })
        .collect()
}

/// Flat CSV form of a summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub variant: String,
    pub trajectories: usize,
    pub e_p_mean: f64,
    pub e_p_low: f64,
    pub e_p_high: f64,
    pub e_q_mean: f64,
    pub e_q_low: f64,
    pub e_q_high: f64,
    pub mean_runtime_s: f64,
}

impl From<&ErrorSummary> for SummaryRow {
    fn from(s: &ErrorSummary) -> Self {
        let (p, q) = (s.fold_e_p.unwrap_or(s.e_p), s.fold_e_q.unwrap_or(s.e_q));
        Self {
            variant: s.variant.clone(),
            trajectories: s.trajectories,
            e_p_mean: p.mean,
            e_p_low: p.low,
            e_p_high: p.high,
            e_q_mean: q.mean,
            e_q_low: q.low,
            e_q_high: q.high,
            mean_runtime_s: s.mean_runtime_s,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSensitivity {
    pub feature: String,
    pub factor_p: f64,
    pub factor_q: f64,
    /// `(factor_p, factor_q)` of every model.
    pub per_model: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub schema_version: u32,
    pub sigma: f64,
    pub models: usize,
    /// Mean unperturbed `(e_p, e_q)` over models and their test trajectories.
    pub baseline: (f64, f64),
    pub features: Vec<FeatureSensitivity>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub trajectory: String,
    pub family: String,
    pub e_p: Option<f64>,
    pub e_q: Option<f64>,
    pub runtime_s: f64,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub schema_version: u32,
    pub rows: Vec<ComparisonRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergencePoint {
    pub train_trajectories: usize,
    /// Per-seed mean test errors.
    pub e_p: Vec<f64>,
    pub e_q: Vec<f64>,
    pub e_p_interval: Interval,
    pub e_q_interval: Interval,
}

/// True when every mean is at most the previous one, or the two intervals
/// overlap.
pub fn non_increasing_within_ci(points: &[Interval]) -> bool {
    points.windows(2).all(|w| w[1].mean <= w[0].mean || w[1].overlaps(&w[0]))
}
