//! JSON and CSV file formats.
//!
//! A dataset directory holds
//!
//! ```text
//! manifest.json
//! norm_stats.json
//! geometries/<spec name>.json
//! graphs/<source>.json
//! trajectories/<example id>.json
//! ```
//!
//! JSON is written pretty-printed with a trailing newline so that identical
//! values always produce identical bytes.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};
use vesselgnn_core::datagen::{Dataset, DatasetManifest, EntryStatus, GeneratedGeometry};
use vesselgnn_core::graph::{CenterlineGraph, NormStats, Trajectory};
use vesselgnn_core::training::Example;

use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn to_json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("in-memory JSON serialization cannot fail");
    bytes.push(b'\n');
    bytes
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_bytes(path, &to_json_bytes(value))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(Error::io(path))?;
    serde_json::from_slice(&bytes).map_err(|source| Error::Json {
        path: path.into(),
        source,
    })
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(Error::io(dir))?;
        }
    }
    fs::write(path, bytes).map_err(Error::io(path))
}

/// Serializes `rows` as CSV with a header line.
pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |source| Error::Csv {
        path: path.into(),
        source,
    };
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Invalid(format!("{}: {e}", path.display())))?;
    write_bytes(path, &bytes)
}

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(|source| Error::Csv {
        path: path.into(),
        source,
    })?;
    r.deserialize()
        .collect::<std::result::Result<Vec<T>, _>>()
        .map_err(|source| Error::Csv {
            path: path.into(),
            source,
        })
}

pub fn write_graph(path: &Path, graph: &CenterlineGraph) -> Result<()> {
    write_json(path, graph)
}

/// Reads a graph and rebuilds its adjacency.
pub fn read_graph(path: &Path) -> Result<CenterlineGraph> {
    let mut g: CenterlineGraph = read_json(path)?;
    g.reindex()?;
    Ok(g)
}

pub fn read_trajectory(path: &Path) -> Result<Trajectory> {
    let t: Trajectory = read_json(path)?;
    t.validate()?;
    Ok(t)
}

/// Writes every file of a dataset below `dir`.
pub fn write_dataset(dir: &Path, dataset: &Dataset) -> Result<()> {
    let m = &dataset.manifest;
    write_json(&dir.join(MANIFEST_FILE), m)?;
    write_json(&dir.join(&m.norm_stats_file), &dataset.stats)?;
    let by_name: BTreeMap<&str, &GeneratedGeometry> = m
        .specs
        .iter()
        .map(|s| s.name.as_str())
        .zip(&dataset.geometries)
        .collect();
    let examples: BTreeMap<&str, &Example> = dataset.examples.iter().map(|e| (e.id.as_str(), e)).collect();
    for entry in &m.entries {
        if let Some(g) = by_name.get(entry.geometry.as_str()) {
            write_json(&dir.join(&entry.geometry_file), g)?;
        }
        for (k, (id, file)) in entry.trajectories.iter().enumerate() {
            let ex = examples
                .get(id.as_str())
                .ok_or_else(|| Error::Invalid(format!("manifest lists unknown example `{id}`")))?;
            if k == 0 {
                write_graph(&dir.join(&entry.graph_file), &ex.graph)?;
            }
            write_json(&dir.join(file), &ex.trajectory)?;
        }
    }
    Ok(())
}

/// Loads a dataset directory written by [`write_dataset`].
pub fn read_dataset(dir: &Path) -> Result<Dataset> {
    let manifest: DatasetManifest = read_json(&dir.join(MANIFEST_FILE))?;
    let stats: NormStats = read_json(&dir.join(&manifest.norm_stats_file))?;
    let mut geometries = Vec::with_capacity(manifest.specs.len());
    for spec in &manifest.specs {
        let path = dir.join("geometries").join(format!("{}.json", spec.name));
        let mut g: GeneratedGeometry = read_json(&path)?;
        g.graph.reindex()?;
        geometries.push(g);
    }
    let mut examples = Vec::new();
    for entry in &manifest.entries {
        if matches!(entry.status, EntryStatus::Failed { .. }) {
            continue;
        }
        let graph = read_graph(&dir.join(&entry.graph_file))?;
        for (id, file) in &entry.trajectories {
            examples.push(Example {
                id: id.clone(),
                source: entry.source.clone(),
                graph: graph.clone(),
                trajectory: read_trajectory(&dir.join(file))?,
            });
        }
    }
    Ok(Dataset {
        manifest,
        geometries,
        examples,
        stats,
    })
}

fn files_below(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in fs::read_dir(dir).map_err(Error::io(dir))? {
        let path = entry.map_err(Error::io(dir))?.path();
        if path.is_dir() {
            files_below(&path, out)?;
        } else {
            out.push(path);
        }
    }
    Ok(())
}

/// SHA-256 over the sorted relative paths and contents of every file below
/// `dir`, as lowercase hex.
pub fn directory_checksum(dir: &Path) -> Result<String> {
    let mut files = Vec::new();
    files_below(dir, &mut files)?;
    files.sort();
    let mut h = Sha256::new();
    for f in &files {
        let rel = f.strip_prefix(dir).unwrap_or(f);
        h.update(rel.to_string_lossy().as_bytes());
        h.update([0u8]);
        h.update(fs::read(f).map_err(Error::io(f))?);
    }
    Ok(hex(&h.finalize()))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// One row per node and time step, for plotting.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct CurveRow {
    pub step: usize,
    pub t: f64,
    pub node: usize,
    pub loading: bool,
    pub p: f64,
    pub q: f64,
    pub p_true: Option<f64>,
    pub q_true: Option<f64>,
}

pub fn curve_rows(pred: &Trajectory, truth: Option<&Trajectory>) -> Vec<CurveRow> {
    let mut rows = Vec::with_capacity(pred.len() * pred.num_nodes());
    for (k, s) in pred.states.iter().enumerate() {
        let t = truth.and_then(|t| t.states.get(k));
        for i in 0..s.num_nodes() {
            rows.push(CurveRow {
                step: k,
                t: k as f64 * pred.dt,
                node: i,
                loading: s.loading,
                p: s.p[i],
                q: s.q[i],
                p_true: t.map(|t| t.p[i]),
                q_true: t.map(|t| t.q[i]),
            });
        }
    }
    rows
}
