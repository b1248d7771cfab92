use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::geometry::{generate_geometry, GeneratedGeometry, GeometrySpec};
use super::spline::resample_trajectory;
use super::{perturb_bcs, prepend_loading, BcFactors, BoundarySet};
use crate::error::{Error, Result};
use crate::graph::{fit_normalization, CenterlineGraph, GraphScalars, NodeState, NormStats, Trajectory};
use crate::hemo1d::{simulate_from, steady_state, SimulationReport, SolverConfig};
use crate::training::{augment_offsets, Example};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildConfig {
    /// Time step of the packaged trajectories (s).
    pub dt: f64,
    /// Time step of the 1D solver (s).
    pub dt_sim: f64,
    /// Loading-phase duration (s).
    pub loading_time: f64,
    /// Simulated cardiac cycles; only the last one is kept.
    pub cycles: usize,
    pub n_offsets: usize,
    pub seed: u64,
    pub solver: SolverConfig,
}

impl Default for BuildConfig {
    fn default() -> Self {
        Self {
            dt: 0.01,
            dt_sim: 0.0025,
            loading_time: 0.1,
            cycles: 2,
            n_offsets: 4,
            seed: 0,
            solver: SolverConfig {
                dt: 0.0025,
                ..SolverConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum EntryStatus {
    Ok {
        max_junction_imbalance: f64,
        max_area_deviation: f64,
        newton_iterations: usize,
    },
    Failed {
        reason: String,
    },
}

/// One simulation of the dataset and the files it produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub source: String,
    pub geometry: String,
    pub geometry_file: String,
    pub graph_file: String,
    pub factors: BcFactors,
    /// `(example id, trajectory file)` for every augmented variant.
    pub trajectories: Vec<(String, String)>,
    #[serde(flatten)]
    pub status: EntryStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub id: String,
    pub dt: f64,
    pub loading_steps: usize,
    pub seed: u64,
    pub config: BuildConfig,
    pub specs: Vec<GeometrySpec>,
    pub entries: Vec<ManifestEntry>,
    pub norm_stats_file: String,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub geometries: Vec<GeneratedGeometry>,
    pub examples: Vec<Example>,
    /// Statistics over every example.
    pub stats: NormStats,
}

impl Dataset {
    pub fn ids(&self) -> Vec<(String, String)> {
        self.examples.iter().map(|e| (e.id.clone(), e.source.clone())).collect()
    }
}

struct Simulated {
    graph: CenterlineGraph,
    cycle: Trajectory,
    report: SimulationReport,
}

fn whole_steps(t: f64, dt: f64, what: &str) -> Result<usize> {
    let f = t / dt;
    let n = libm::round(f) as usize;
    if (f - n as f64).abs() > 1e-6 || n == 0 {
        return Err(Error::Config(format!("{what} {t} is not a multiple of dt = {dt}")));
    }
    Ok(n)
}

/// Runs the configured number of cycles and returns the last one on the
/// graph nodes, resampled onto `cfg.dt`.
fn simulate_cycle(gen: &GeneratedGeometry, bcs: &BoundarySet, cfg: &BuildConfig) -> Result<Simulated> {
    let model = gen.model(bcs)?;
    let solver = SolverConfig {
        dt: cfg.dt_sim,
        ..cfg.solver
    };
    let period = bcs.inflow.period;
    let per_cycle = whole_steps(period, cfg.dt_sim, "cycle period")?;
    let total = per_cycle * cfg.cycles;
    let start = steady_state(&model, bcs.inflow.mean, &solver)?;
    let inflow = bcs.inflow.sample(cfg.dt_sim, total);
    let out = simulate_from(&model, &start, &inflow, total as f64 * cfg.dt_sim, &solver)?;
    let first = total - per_cycle;
    let states = out.trajectory.states[first..]
        .iter()
        .enumerate()
        .map(|(k, s)| NodeState::new(gen.project(&s.p), gen.project(&s.q), false, k))
        .collect::<Result<Vec<_>>>()?;
    let raw = Trajectory::new(String::new(), cfg.dt_sim, states, inflow[first..].to_vec(), 0)?;
    let cycle = resample_trajectory(&raw, cfg.dt)?;
    let (lo, hi) = cycle
        .states
        .iter()
        .flat_map(|s| s.p.iter())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &p| (lo.min(p), hi.max(p)));
    let mut graph = gen.graph_with(bcs)?;
    graph.set_scalars(GraphScalars {
        t_cc: period,
        p_min: lo,
        p_max: hi,
    });
    Ok(Simulated {
        graph,
        cycle,
        report: out.report,
    })
}

/// Simulates `n_perturbations` perturbed boundary sets per spec and packages
/// loading phase, resampling and augmentation. Failed simulations are
/// recorded in the manifest and skipped.
pub fn build_dataset(id: &str, specs: &[GeometrySpec], n_perturbations: usize, cfg: &BuildConfig) -> Result<Dataset> {
    let loading_steps = whole_steps(cfg.loading_time, cfg.dt, "loading time").or_else(|e| {
        if cfg.loading_time == 0.0 {
            Ok(0)
        } else {
            Err(e)
        }
    })?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut geometries = Vec::with_capacity(specs.len());
    let mut entries = Vec::new();
    let mut examples = Vec::new();
    for spec in specs {
        let gen = generate_geometry(spec)?;
        for j in 0..n_perturbations {
            let source = format!("{}_{j:03}", spec.name);
            let (bcs, factors) = perturb_bcs(&gen.base, &mut rng)?;
            let mut entry = ManifestEntry {
                source: source.clone(),
                geometry: spec.name.clone(),
                geometry_file: format!("geometries/{}.json", spec.name),
                graph_file: format!("graphs/{source}.json"),
                factors,
                trajectories: Vec::new(),
                status: EntryStatus::Failed {
                    reason: String::new(),
                },
            };
            let packaged = simulate_cycle(&gen, &bcs, cfg).and_then(|sim| {
                let p_min = sim.graph.scalars().p_min;
                let mut full = prepend_loading(&sim.cycle, p_min, cfg.loading_time)?;
                full.graph_id = source.clone();
                let variants = augment_offsets(&full, cfg.n_offsets, p_min)?;
                Ok((sim, variants))
            });
            match packaged {
                Ok((sim, variants)) => {
                    for (o, t) in variants.into_iter().enumerate() {
                        let id = format!("{source}_o{o}");
                        entry.trajectories.push((id.clone(), format!("trajectories/{id}.json")));
                        examples.push(Example {
                            id,
                            source: source.clone(),
                            graph: sim.graph.clone(),
                            trajectory: t,
                        });
                    }
                    entry.status = EntryStatus::Ok {
                        max_junction_imbalance: sim.report.max_junction_imbalance,
                        max_area_deviation: sim.report.max_area_deviation,
                        newton_iterations: sim.report.newton_iterations,
                    };
                }
                Err(e) => {
                    entry.status = EntryStatus::Failed { reason: e.to_string() };
                }
            }
            entries.push(entry);
        }
        geometries.push(gen);
    }
    if examples.is_empty() {
        return Err(Error::Validation("every simulation of the dataset failed".into()));
    }
    let pairs: Vec<_> = examples.iter().map(|e| (&e.graph, &e.trajectory)).collect();
    let stats = fit_normalization(&pairs)?;
    Ok(Dataset {
        manifest: DatasetManifest {
            id: id.into(),
            dt: cfg.dt,
            loading_steps,
            seed: cfg.seed,
            config: cfg.clone(),
            specs: specs.to_vec(),
            entries,
            norm_stats_file: "norm_stats.json".into(),
        },
        geometries,
        examples,
        stats,
    })
}
