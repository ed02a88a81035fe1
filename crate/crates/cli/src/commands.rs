use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context as _};
use serde::Serialize;

use hydy_core::datasets::{make_point_dataset, make_trajectory_dataset, Dataset, HypergraphSource, InitLaw, Scenario};
use hydy_core::decomposition::{
    family_deviation, kuramoto_pair_kernel, kuramoto_sine_of_sums, log_full, log_pair_kernel, verify_decomposition,
};
use hydy_core::dynamics::{integrate_euler, trajectory_to_csv, Family, TrajectoryHeader, UpdateFamily};
use hydy_core::evaluation::{assign_folds, pointwise_mae, rollout_predict, study_orders, EvalReport};
use hydy_core::hypergraph::{generate_er, load_hyperedge_file, to_hyperedge_list, LoadOptions};
use hydy_core::model::{search_lambda, train, HyDyModel, TrainConfig};
use hydy_core::seed::{self, stream};
use hydy_core::Hypergraph;

use crate::config::{config_error, Config};
use crate::output::{replace_dir, write_atomic, write_run_record};

pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const PREDICTION_FILE: &str = "prediction.csv";
pub const DATASET_DIR: &str = "dataset";
pub const GRAPH_DIR: &str = "graphs";
pub const BUNDLE_FILE: &str = "model.bundle";
pub const LOSS_FILE: &str = "loss_curve.csv";
pub const REPORT_CSV: &str = "report.csv";
pub const REPORT_JSON: &str = "report.json";
pub const PLOT_FILE: &str = "plot.csv";
pub const DECOMPOSITION_FILE: &str = "decomposition.csv";

/// Stream tag separating per-case dataset seeds in `evaluate`.
const CASE_STREAM: u64 = 7;

#[derive(Serialize)]
struct GraphSummary {
    name: String,
    n_nodes: usize,
    edges_by_size: BTreeMap<usize, usize>,
}

fn graph_summary(name: &str, h: &Hypergraph) -> GraphSummary {
    GraphSummary {
        name: name.to_string(),
        n_nodes: h.n_nodes(),
        edges_by_size: h.sizes().map(|d| (d, h.edges(d).len())).collect(),
    }
}

/// The `index`-th hypergraph of the configured source, named as in dataset directories.
fn source_graph(cfg: &Config, index: usize) -> anyhow::Result<(String, Hypergraph)> {
    match cfg.source()? {
        HypergraphSource::Fixed { name, hypergraph } => Ok((name, hypergraph)),
        HypergraphSource::ErdosRenyi { n_nodes, probs, .. } => {
            let h = generate_er(n_nodes, &probs, seed::derive(cfg.seed(), stream::HYPERGRAPH, index as u64))?;
            Ok((format!("er-{index:05}"), h))
        }
    }
}

fn init_law(cfg: &Config, family: Family) -> InitLaw {
    cfg.dynamics.init.unwrap_or_else(|| InitLaw::for_family(family))
}

pub fn gen_hypergraph(cfg: &Config, out: &Path) -> anyhow::Result<()> {
    let count = match cfg.source()? {
        HypergraphSource::Fixed { .. } => 1,
        HypergraphSource::ErdosRenyi { n_graphs, .. } => n_graphs.unwrap_or(1),
    };
    let graphs: Vec<(String, Hypergraph)> = (0..count).map(|g| source_graph(cfg, g)).collect::<anyhow::Result<_>>()?;
    replace_dir(&out.join(GRAPH_DIR), |dir| {
        for (name, h) in &graphs {
            std::fs::write(dir.join(format!("{name}.hg")), to_hyperedge_list(h))?;
        }
        Ok(())
    })?;
    let summary: Vec<GraphSummary> = graphs.iter().map(|(n, h)| graph_summary(n, h)).collect();
    for s in &summary {
        println!("{}: {} nodes, edges by size {:?}", s.name, s.n_nodes, s.edges_by_size);
    }
    write_run_record(out, "gen-hypergraph", cfg, summary)
}

pub fn simulate(cfg: &Config, out: &Path) -> anyhow::Result<()> {
    let dynamics = cfg.dynamics()?;
    let (name, h) = source_graph(cfg, 0)?;
    let x0 = init_law(cfg, dynamics.family).sample(h.n_nodes(), seed::derive(cfg.seed(), stream::STATE, 0));
    let traj = integrate_euler(&dynamics, &h, &x0, cfg.simulate.steps, cfg.simulate.dt)?;
    let header = TrajectoryHeader {
        hypergraph: format!("{name}.hg"),
        family: dynamics.family.name().into(),
        p: dynamics.order,
        dt: cfg.simulate.dt,
        steps: cfg.simulate.steps,
        seed: cfg.seed(),
    };
    write_atomic(&out.join(format!("{name}.hg")), to_hyperedge_list(&h).as_bytes())?;
    write_atomic(&out.join(TRAJECTORY_FILE), trajectory_to_csv(&header, &traj).as_bytes())?;
    println!("simulated {} steps of {} p={} on {name}", traj.steps(), dynamics.family, dynamics.order);
    write_run_record(out, "simulate", cfg, graph_summary(&name, &h))
}

fn generate_dataset(cfg: &Config, dynamics: UpdateFamily, data_seed: u64) -> anyhow::Result<Dataset> {
    let spec = cfg.generation(dynamics, data_seed)?;
    let d = &cfg.dataset;
    Ok(match d.scenario {
        Scenario::Point => make_point_dataset(&spec, d.count)?,
        Scenario::Trajectory => make_trajectory_dataset(&spec, d.n_traj, d.steps, d.dt)?,
    })
}

#[derive(Serialize)]
struct DatasetSummary {
    count: usize,
    n_graphs: usize,
    dropped_trajectories: Vec<usize>,
    fingerprint: String,
}

pub fn make_dataset(cfg: &Config, out: &Path) -> anyhow::Result<()> {
    let data = generate_dataset(cfg, cfg.dynamics()?, cfg.seed())?;
    replace_dir(&out.join(DATASET_DIR), |dir| Ok(data.write_dir(dir)?))?;
    let summary = DatasetSummary {
        count: data.manifest.count,
        n_graphs: data.manifest.n_graphs,
        dropped_trajectories: data.manifest.dropped_trajectories.clone(),
        fingerprint: data.fingerprint(),
    };
    println!("dataset: {} samples on {} hypergraphs, fingerprint {}", summary.count, summary.n_graphs, summary.fingerprint);
    if !summary.dropped_trajectories.is_empty() {
        eprintln!("dropped non-finite trajectories: {:?}", summary.dropped_trajectories);
    }
    write_run_record(out, "make-dataset", cfg, summary)
}

#[derive(Serialize)]
struct TrainSummary {
    p_model: usize,
    lambda: f64,
    lambda_scores: Vec<(f64, f64)>,
    final_loss: f64,
    train_mae: f64,
    dataset_fingerprint: String,
}

pub fn train_model(cfg: &Config, data_dir: Option<&Path>, out: &Path) -> anyhow::Result<()> {
    let data = match data_dir.map(Path::to_path_buf).or_else(|| cfg.dataset.path.clone()) {
        Some(dir) => Dataset::read_dir(&dir).with_context(|| format!("reading dataset {}", dir.display()))?,
        None => generate_dataset(cfg, cfg.dynamics()?, cfg.seed())?,
    };
    let p_model = cfg.model.p_model;
    let arch = cfg.model.architecture();
    let model = HyDyModel::new(p_model, data.sizes(), &arch, seed::derive(cfg.seed(), stream::INIT, 0))?;
    let mut train_cfg: TrainConfig = cfg.train.clone();
    let mut lambda_scores = Vec::new();
    if cfg.model.search_lambda {
        let folds = assign_folds(&data.groups(), 5, cfg.seed())?;
        let fit: Vec<usize> = folds[1..].concat();
        let search = search_lambda(&model, &data.observations_of(&fit), &data.observations_of(&folds[0]), &train_cfg)?;
        println!("lambda search: best {} of {:?}", search.best, search.scores);
        train_cfg.lambda = search.best;
        lambda_scores = search.scores;
    }
    let outcome = train(model, &data.observations(), &train_cfg)?;
    let mut model = outcome.model;
    let fingerprint = data.fingerprint();
    model.dataset_fingerprint = Some(fingerprint.clone());
    let train_mae = pointwise_mae(&model, &data.observations())?;
    write_atomic(&out.join(BUNDLE_FILE), model.to_bundle().as_bytes())?;
    let mut curve = String::from("epoch,loss\n");
    for (e, l) in outcome.epoch_losses.iter().enumerate() {
        let _ = writeln!(curve, "{e},{l:.16e}");
    }
    write_atomic(&out.join(LOSS_FILE), curve.as_bytes())?;
    let summary = TrainSummary {
        p_model,
        lambda: train_cfg.lambda,
        lambda_scores,
        final_loss: outcome.epoch_losses.last().copied().unwrap_or(f64::NAN),
        train_mae,
        dataset_fingerprint: fingerprint,
    };
    println!("trained p_model={p_model}: final loss {:.6e}, training MAE {:.6e}", summary.final_loss, train_mae);
    write_run_record(out, "train", cfg, summary)
}

pub fn evaluate(cfg: &Config, out: &Path) -> anyhow::Result<()> {
    let mut report = EvalReport { metadata: serde_json::to_value(cfg)?, ..EvalReport::default() };
    let arch = cfg.model.architecture();
    let cv = cfg.cv();
    for (i, case) in cfg.evaluate.cases.iter().enumerate() {
        let dynamics = UpdateFamily::new(case.family.parse()?, case.p)?;
        let data = generate_dataset(cfg, dynamics, seed::derive(cfg.seed(), CASE_STREAM, i as u64))?;
        let (entries, summary) = study_orders(
            &data,
            &cfg.evaluate.model_orders,
            &arch,
            &cfg.train,
            &cv,
            cfg.evaluate.complexity_weight,
        )?;
        println!(
            "{} p={}: mean MAE {}; selected p_min = {}",
            summary.dynamics,
            summary.p,
            entries.iter().map(|e| format!("{}:{:.4e}", e.p_model, e.mean_mae)).collect::<Vec<_>>().join(" "),
            summary.selected
        );
        report.entries.extend(entries);
        report.summaries.push(summary);
    }
    write_atomic(&out.join(REPORT_CSV), report.to_csv().as_bytes())?;
    write_atomic(&out.join(REPORT_JSON), report.to_json().as_bytes())?;
    write_atomic(&out.join(PLOT_FILE), report.plot_table().as_bytes())?;
    let selected: Vec<(String, usize, usize)> =
        report.summaries.iter().map(|s| (s.dynamics.clone(), s.p, s.selected)).collect();
    write_run_record(out, "evaluate", cfg, selected)
}

pub fn select_order(report_path: &Path) -> anyhow::Result<()> {
    let text = std::fs::read_to_string(report_path)
        .with_context(|| format!("reading report {}", report_path.display()))?;
    let report = EvalReport::from_json(&text)?;
    if report.summaries.is_empty() {
        bail!("report {} holds no order summaries", report_path.display());
    }
    for s in &report.summaries {
        println!("{} p={}: p_min = {}", s.dynamics, s.p, s.selected);
        println!("{}", serde_json::to_string(s)?);
    }
    Ok(())
}

#[derive(Serialize)]
struct CheckSummary {
    max_family_deviation: f64,
    log_deviation: f64,
    sine_of_sums_pairwise_gap: f64,
}

pub fn check_decomposition(cfg: &Config, out: &Path) -> anyhow::Result<()> {
    let c = &cfg.check;
    if c.max_size < 2 {
        return Err(config_error("check.max_size must be at least 2"));
    }
    let mut table = String::from("family,p,d,max_deviation\n");
    let mut worst = 0.0_f64;
    for family in Family::ALL {
        for p in 2..=c.max_size {
            let dynamics = UpdateFamily::new(family, p)?;
            for d in p..=c.max_size {
                let dev = family_deviation(&dynamics, d, c.trials, seed::derive(cfg.seed(), p as u64, d as u64));
                worst = worst.max(dev);
                let _ = writeln!(table, "{family},{p},{d},{dev:.6e}");
            }
        }
    }
    let log_dev = (2..=c.max_size)
        .map(|d| verify_decomposition(log_full, log_pair_kernel(d), 2, d, c.trials, cfg.seed(), (0.1, 3.0)))
        .fold(0.0, f64::max);
    let sine_gap = (3..=c.max_size.max(3))
        .map(|d| {
            verify_decomposition(kuramoto_sine_of_sums, kuramoto_pair_kernel, 2, d, c.trials, cfg.seed(), (-3.14, 3.14))
        })
        .fold(f64::INFINITY, f64::min);
    let _ = writeln!(table, "log,2,all,{log_dev:.6e}");
    let _ = writeln!(table, "sine_of_sums_pairwise,2,all,{sine_gap:.6e}");
    write_atomic(&out.join(DECOMPOSITION_FILE), table.as_bytes())?;
    println!("max subset-sum deviation {worst:.3e}; log {log_dev:.3e}; sine-of-sums pairwise gap {sine_gap:.3e}");
    write_run_record(
        out,
        "check-decomposition",
        cfg,
        CheckSummary { max_family_deviation: worst, log_deviation: log_dev, sine_of_sums_pairwise_gap: sine_gap },
    )?;
    if worst > c.tolerance || log_dev > c.tolerance {
        bail!("decomposition deviation {} exceeds tolerance {}", worst.max(log_dev), c.tolerance);
    }
    Ok(())
}

pub struct PredictArgs {
    pub model: PathBuf,
    pub graph: Option<PathBuf>,
    pub x0: Option<PathBuf>,
    pub steps: Option<usize>,
    pub dt: Option<f64>,
}

fn read_state(path: &Path) -> anyhow::Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .filter(|l| !l.trim_start().starts_with('#'))
        .flat_map(|l| l.split(|c: char| c == ',' || c.is_whitespace()))
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().with_context(|| format!("bad number `{t}` in {}", path.display())))
        .collect()
}

pub fn predict(cfg: &Config, args: &PredictArgs, out: &Path) -> anyhow::Result<()> {
    let bundle = std::fs::read_to_string(&args.model).with_context(|| format!("reading {}", args.model.display()))?;
    let model = HyDyModel::from_bundle(&bundle)?;
    let (name, h) = match &args.graph {
        Some(path) => {
            let loaded = load_hyperedge_file(path, LoadOptions::default())?;
            let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("hypergraph").to_string();
            (name, loaded.hypergraph)
        }
        None => source_graph(cfg, 0)?,
    };
    let x0 = match &args.x0 {
        Some(path) => read_state(path)?,
        None => {
            let family = cfg.dynamics()?.family;
            init_law(cfg, family).sample(h.n_nodes(), seed::derive(cfg.seed(), stream::STATE, 0))
        }
    };
    if x0.len() != h.n_nodes() {
        return Err(config_error(format!("initial state has {} values but the hypergraph has {} nodes", x0.len(), h.n_nodes())));
    }
    let steps = args.steps.unwrap_or(cfg.predict.steps);
    let dt = args.dt.unwrap_or(cfg.predict.dt);
    if steps == 0 || !(dt > 0.0) {
        return Err(config_error("predict needs steps >= 1 and dt > 0"));
    }
    let traj = rollout_predict(&model, &h, &x0, steps, dt)?;
    let header = TrajectoryHeader {
        hypergraph: format!("{name}.hg"),
        family: "hydy-gnn".into(),
        p: model.p_model(),
        dt,
        steps,
        seed: cfg.seed(),
    };
    write_atomic(&out.join(PREDICTION_FILE), trajectory_to_csv(&header, &traj).as_bytes())?;
    println!("predicted {} steps on {name} ({} states)", steps, traj.states.len());
    write_run_record(out, "predict", cfg, graph_summary(&name, &h))
}
