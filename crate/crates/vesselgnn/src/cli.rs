//! The `vesselgnn` command line.
//!
//! Exit status is 0 on success, 1 when a command fails and 2 on usage
//! errors.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use vesselgnn_core::datagen::{build_dataset, BuildConfig, GeometrySpec};
use vesselgnn_core::eval::{model_rollout, trajectory_errors};
use vesselgnn_core::graph::NodeState;
use vesselgnn_core::hemo1d::SolverConfig;
use vesselgnn_core::mgn::{rollout, Ablation, Schedule};
use vesselgnn_core::training::{kfold_split, Fold};

use crate::checkpoint::{Checkpoint, RunSpec};
use crate::error::{Error, Result};
use crate::experiments::{
    ablation_run, compare_models, evaluate, examples_by_id, sensitivity, train_run, ExperimentConfig,
};
use crate::io::{
    curve_rows, directory_checksum, read_csv, read_dataset, read_graph, read_json, read_trajectory, write_csv,
    write_dataset, write_json,
};
use crate::report::{error_report, summarize_by_variant, ErrorRow, SummaryRow};

#[derive(Debug, Parser)]
#[command(name = "vesselgnn", version, about = "Graph-network surrogate for 1D blood flow")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Seed of the command's random draws.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Time step (s): dataset step for `gen`, solver step for `compare`,
    /// rollout step for `rollout` without a trajectory.
    #[arg(long, global = true)]
    pub dt: Option<f64>,
    /// JSON configuration of the command.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a dataset of perturbed boundary conditions.
    Gen {
        /// Built-in geometry name (`bifurcation`) or a JSON file with one
        /// spec or a list of specs.
        #[arg(long)]
        spec: String,
        /// Perturbed simulations per geometry.
        #[arg(long, default_value_t = 32)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one model on one fold of a dataset.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Held-out fold; all trajectories are used for training without it.
        #[arg(long)]
        fold: Option<usize>,
        #[arg(long, default_value = "baseline")]
        variant: String,
        #[command(flatten)]
        overrides: TrainOverrides,
        /// Per-epoch losses as CSV.
        #[arg(long)]
        history: Option<PathBuf>,
    },
    /// Roll a trained model out on a graph.
    Rollout {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        graph: PathBuf,
        /// Supplies the initial state, inlet flow and loading phase.
        #[arg(long)]
        trajectory: Option<PathBuf>,
        #[arg(long)]
        steps: Option<usize>,
        /// Constant inlet flow (cm^3/s) when no trajectory is given.
        #[arg(long, default_value_t = 0.0)]
        inflow: f64,
        #[arg(long)]
        out: PathBuf,
        /// Per-node curves as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Rollout errors of a model on a dataset.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Evaluate every trajectory instead of the model's held-out ones.
        #[arg(long)]
        all: bool,
    },
    /// Feature sensitivity factors averaged over models.
    Sensitivity {
        #[arg(long = "model", required = true)]
        models: Vec<PathBuf>,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.05)]
        sigma: f64,
    },
    /// Cross-validate model variants.
    Ablate {
        #[arg(long)]
        dataset: PathBuf,
        /// Any of baseline, no_tau, no_boundary_edges, no_rcr.
        #[arg(long = "variant", default_values_t = ["baseline".to_string(), "no_boundary_edges".to_string()])]
        variants: Vec<String>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        overrides: TrainOverrides,
    },
    /// Compare a model against re-simulation with the 1D solver.
    Compare {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        all: bool,
    },
    /// Summaries with confidence intervals from error CSV files.
    Report {
        #[arg(long = "input", required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct TrainOverrides {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub samples_per_trajectory: Option<usize>,
}

/// Parses `argv` (program name first), runs the command and returns the
/// exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn load_specs(spec: &str) -> Result<Vec<GeometrySpec>> {
    if spec == "bifurcation" {
        return Ok(vec![GeometrySpec::bifurcation()]);
    }
    let path = Path::new(spec);
    if !path.exists() {
        return Err(Error::Invalid(format!("`{spec}` is neither a built-in geometry nor a file")));
    }
    let value: serde_json::Value = read_json(path)?;
    let parsed = if value.is_array() {
        serde_json::from_value(value)
    } else {
        serde_json::from_value(value).map(|s| vec![s])
    };
    parsed.map_err(|source| Error::Json {
        path: path.into(),
        source,
    })
}

fn experiment_config(global: &GlobalArgs, o: &TrainOverrides) -> Result<ExperimentConfig> {
    let mut cfg: ExperimentConfig = match &global.config {
        Some(p) => read_json(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = global.seed {
        cfg.train.seed = s;
    }
    if let Some(e) = o.epochs {
        cfg.train.epochs = e;
    }
    if let Some(f) = o.folds {
        cfg.folds = f;
    }
    if let Some(s) = o.samples_per_trajectory {
        cfg.train.samples_per_trajectory = Some(s);
    }
    Ok(cfg)
}

fn execute(cli: &Cli) -> Result<()> {
    let g = &cli.global;
    match &cli.command {
        Command::Gen { spec, n, out } => {
            let mut cfg: BuildConfig = match &g.config {
                Some(p) => read_json(p)?,
                None => BuildConfig::default(),
            };
            if let Some(s) = g.seed {
                cfg.seed = s;
            }
            if let Some(dt) = g.dt {
                cfg.dt = dt;
            }
            let specs = load_specs(spec)?;
            let names: Vec<&str> = specs.iter().map(|s| s.name.as_str()).collect();
            let id = format!("{}_n{n}_s{}", names.join("+"), cfg.seed);
            let d = build_dataset(&id, &specs, *n, &cfg)?;
            write_dataset(out, &d)?;
            println!("{} {} examples sha256 {}", out.display(), d.examples.len(), directory_checksum(out)?);
        }
        Command::Train {
            dataset,
            out,
            fold,
            variant,
            overrides,
            history,
        } => {
            let mut cfg = experiment_config(g, overrides)?;
            cfg.gnn.ablation = Ablation::parse(variant)?;
            let d = read_dataset(dataset)?;
            let chosen = match fold {
                Some(f) => {
                    let plan = kfold_split(&d.ids(), cfg.folds, cfg.split_seed)?;
                    plan.folds
                        .get(*f)
                        .cloned()
                        .ok_or_else(|| Error::Invalid(format!("fold {f} outside 0..{}", cfg.folds)))?
                }
                None => Fold {
                    train: d.examples.iter().map(|e| e.id.clone()).collect(),
                    test: Vec::new(),
                },
            };
            let run = RunSpec {
                dataset: d.manifest.id.clone(),
                gnn: cfg.gnn,
                train: cfg.train.clone(),
                fold_index: *fold,
                fold: chosen,
            };
            let ck = train_run(&d, run)?;
            ck.save(out)?;
            if let Some(h) = history {
                write_csv(h, &ck.history)?;
            }
            let last = ck.history.last().map(|r| r.train_loss).unwrap_or(f64::NAN);
            println!("{} final train loss {last:.6e}", out.display());
        }
        Command::Rollout {
            model,
            graph,
            trajectory,
            steps,
            inflow,
            out,
            csv,
        } => {
            let ck = Checkpoint::load(model)?;
            let graph = read_graph(graph)?;
            let truth = trajectory.as_deref().map(read_trajectory).transpose()?;
            let pred = match &truth {
                Some(t) => {
                    let m = steps.unwrap_or(t.len() - 1);
                    if m >= t.len() {
                        return Err(Error::Invalid(format!(
                            "{m} steps requested from a trajectory of {} states",
                            t.len()
                        )));
                    }
                    if m + 1 == t.len() {
                        model_rollout(&ck.model, &graph, t, None)?
                    } else {
                        rollout(&ck.model, &graph, &t.states[0], &t.inlet_flow[1..], Schedule::of(t), m)?
                    }
                }
                None => {
                    let m = steps.ok_or_else(|| Error::Invalid("--steps is required without --trajectory".into()))?;
                    let p_rest = graph.scalars().p_min;
                    let mut initial = NodeState::rest(graph.num_nodes(), p_rest, false, 0);
                    initial.q[graph.inlet()] = *inflow;
                    let schedule = Schedule {
                        dt: g.dt.unwrap_or(0.01),
                        loading_steps: 0,
                    };
                    rollout(&ck.model, &graph, &initial, &vec![*inflow; m], schedule, m)?
                }
            };
            write_json(out, &pred)?;
            if let Some(c) = csv {
                let truth = truth.as_ref().filter(|t| t.len() == pred.len());
                write_csv(c, &curve_rows(&pred, truth))?;
            }
            if let Some(t) = truth.as_ref().filter(|t| t.len() == pred.len()) {
                let (ep, eq) = trajectory_errors(&graph, t, &pred)?;
                println!("{} {} states e_p {ep:.6e} e_q {eq:.6e}", out.display(), pred.len());
            } else {
                println!("{} {} states", out.display(), pred.len());
            }
        }
        Command::Eval {
            model,
            dataset,
            out,
            all,
        } => {
            let ck = Checkpoint::load(model)?;
            let d = read_dataset(dataset)?;
            let ids = eval_ids(&ck, &d, *all);
            let rows = evaluate(&ck.model, &examples_by_id(&d, &ids)?, ck.run.fold_index)?;
            let report = error_report(rows)?;
            write_csv(&out.join("errors.csv"), &report.rows)?;
            write_json(&out.join("summary.json"), &report.summary)?;
            let s = &report.summary;
            println!(
                "{} trajectories e_p {:.4e} [{:.4e}, {:.4e}] e_q {:.4e} [{:.4e}, {:.4e}]",
                s.trajectories, s.e_p.mean, s.e_p.low, s.e_p.high, s.e_q.mean, s.e_q.low, s.e_q.high
            );
        }
        Command::Sensitivity {
            models,
            dataset,
            out,
            sigma,
        } => {
            let cks = models.iter().map(|p| Checkpoint::load(p)).collect::<Result<Vec<_>>>()?;
            let d = read_dataset(dataset)?;
            let r = sensitivity(&cks, &d, *sigma, g.seed.unwrap_or(0))?;
            #[derive(serde::Serialize)]
            struct Row<'a> {
                feature: &'a str,
                factor_p: f64,
                factor_q: f64,
            }
            let rows: Vec<Row> = r
                .features
                .iter()
                .map(|f| Row {
                    feature: &f.feature,
                    factor_p: f.factor_p,
                    factor_q: f.factor_q,
                })
                .collect();
            write_csv(&out.join("sensitivity.csv"), &rows)?;
            write_json(&out.join("sensitivity.json"), &r)?;
            for f in &r.features {
                println!("{:<16} {:>10.4} {:>10.4}", f.feature, f.factor_p, f.factor_q);
            }
        }
        Command::Ablate {
            dataset,
            variants,
            out,
            overrides,
        } => {
            let cfg = experiment_config(g, overrides)?;
            let d = read_dataset(dataset)?;
            let variants: Vec<Ablation> = variants.iter().map(|v| Ablation::parse(v)).collect::<std::result::Result<_, _>>()?;
            let mut rows = Vec::new();
            for v in variants {
                let cv = ablation_run(&d, v.name(), &cfg, Some(&out.join("checkpoints")))?;
                rows.extend(cv.report.rows);
            }
            write_report(out, &rows)?;
        }
        Command::Compare {
            model,
            dataset,
            out,
            all,
        } => {
            let ck = Checkpoint::load(model)?;
            let d = read_dataset(dataset)?;
            let mut solver = match &g.config {
                Some(p) => read_json(p)?,
                None => d.manifest.config.solver,
            };
            if let Some(dt) = g.dt {
                solver = SolverConfig { dt, ..solver };
            }
            let ids = eval_ids(&ck, &d, *all);
            let r = compare_models(&d, &ck.model, &ids, &solver)?;
            write_csv(&out.join("comparison.csv"), &r.rows)?;
            write_json(&out.join("comparison.json"), &r)?;
            for fam in ["gnn", "1d"] {
                let ok: Vec<_> = r.rows.iter().filter(|x| x.family == fam && x.failure.is_none()).collect();
                let n = ok.len().max(1) as f64;
                println!(
                    "{fam:<4} {} ok e_p {:.4e} e_q {:.4e} runtime {:.4} s",
                    ok.len(),
                    ok.iter().filter_map(|x| x.e_p).sum::<f64>() / n,
                    ok.iter().filter_map(|x| x.e_q).sum::<f64>() / n,
                    ok.iter().map(|x| x.runtime_s).sum::<f64>() / n,
                );
            }
        }
        Command::Report { inputs, out } => {
            let mut rows: Vec<ErrorRow> = Vec::new();
            for p in inputs {
                rows.extend(read_csv::<ErrorRow>(p)?);
            }
            write_report(out, &rows)?;
        }
    }
    Ok(())
}

fn eval_ids(ck: &Checkpoint, d: &vesselgnn_core::datagen::Dataset, all: bool) -> Vec<String> {
    if all || ck.run.fold.test.is_empty() {
        d.examples.iter().map(|e| e.id.clone()).collect()
    } else {
        ck.run.fold.test.clone()
    }
}

fn write_report(out: &Path, rows: &[ErrorRow]) -> Result<()> {
    let summaries = summarize_by_variant(rows)?;
    write_csv(&out.join("errors.csv"), rows)?;
    write_json(&out.join("summary.json"), &summaries)?;
    let table: Vec<SummaryRow> = summaries.iter().map(SummaryRow::from).collect();
    write_csv(&out.join("summary.csv"), &table)?;
    for s in &table {
        println!(
            "{:<18} e_p {:.4e} [{:.4e}, {:.4e}] e_q {:.4e} [{:.4e}, {:.4e}]",
            s.variant, s.e_p_mean, s.e_p_low, s.e_p_high, s.e_q_mean, s.e_q_low, s.e_q_high
        );
    }
    Ok(())
}
