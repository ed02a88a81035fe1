//! Error measures, cross-validation and effective-order selection.
//!
//! The model-corrected performance score of a model of order `p` is
//! `exp(−L_p / L_max) · exp(−w · p / k)` with `L_max` the largest loss among the compared
//! models, `k` the topological order and `w = 1` by default. Among several orders, the one with
//! the highest score is selected.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datasets::{Dataset, Scenario};
use crate::dynamics::{integrate_euler, Trajectory, UpdateFamily, VectorField};
use crate::hypergraph::Hypergraph;
use crate::model::{train, Architecture, HyDyModel, Observation, TrainConfig};
use crate::seed::{self, stream};
use crate::{Error, Result};

/// Mean over samples and nodes of `|field(x)_i − ẋ_i|`.
pub fn pointwise_mae<F: VectorField + ?Sized>(field: &F, data: &[Observation<'_>]) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::invalid("MAE of an empty set"));
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for o in data {
        let pred = field.rhs(o.hypergraph, o.state)?;
        if o.derivative.len() != pred.len() {
            return Err(Error::DimensionMismatch { expected: pred.len(), got: o.derivative.len() });
        }
        total += pred.iter().zip(o.derivative).map(|(a, b)| (a - b).abs()).sum::<f64>();
        count += pred.len();
    }
    Ok(if count == 0 { 0.0 } else { total / count as f64 })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMae {
    pub value: f64,
    /// The learned rollout left the finite range; `value` is then infinite.
    pub diverged: bool,
}

/// Rolls out `model` and the ground truth from `x0` with forward Euler and averages
/// `|x̂_t − x_t|` over nodes and the `steps` predicted states `t = 1..=steps`.
pub fn trajectory_mae<F: VectorField + ?Sized>(
    model: &F,
    h: &Hypergraph,
    x0: &[f64],
    steps: usize,
    dt: f64,
    truth: &UpdateFamily,
) -> Result<TrajectoryMae> {
    let reference = integrate_euler(truth, h, x0, steps, dt)?;
    let predicted = match integrate_euler(model, h, x0, steps, dt) {
        Ok(t) => t,
        Err(Error::NonFinite { .. }) => return Ok(TrajectoryMae { value: f64::INFINITY, diverged: true }),
        Err(e) => return Err(e),
    };
    let n = x0.len().max(1);
    let total: f64 = predicted.states[1..]
        .iter()
        .zip(&reference.states[1..])
        .map(|(a, b)| a.iter().zip(b).map(|(u, v)| (u - v).abs()).sum::<f64>())
        .sum();
    Ok(TrajectoryMae { value: total / (n * steps) as f64, diverged: false })
}

/// Euler rollout under a learned (or any) vector field.
pub fn rollout_predict<F: VectorField + ?Sized>(
    model: &F,
    h: &Hypergraph,
    x0: &[f64],
    steps: usize,
    dt: f64,
) -> Result<Trajectory> {
    integrate_euler(model, h, x0, steps, dt)
}

/// Splits sample indices into `k_folds` test folds. Samples sharing a group id always land in
/// the same fold; groups are shuffled by `rng_seed` and dealt out round-robin.
pub fn assign_folds(groups: &[usize], k_folds: usize, rng_seed: u64) -> Result<Vec<Vec<usize>>> {
    if k_folds < 2 {
        return Err(Error::invalid(format!("need at least 2 folds, got {k_folds}")));
    }
    let mut ids: Vec<usize> = groups.to_vec();
    ids.sort_unstable();
    ids.dedup();
    if ids.len() < k_folds {
        return Err(Error::invalid(format!(
            "{} groups cannot fill {k_folds} folds without an empty fold",
            ids.len()
        )));
    }
    let mut rng = seed::rng(seed::derive(rng_seed, stream::FOLDS, 0));
    ids.shuffle(&mut rng);
    let fold_of: BTreeMap<usize, usize> = ids.iter().enumerate().map(|(i, &g)| (g, i % k_folds)).collect();
    let mut folds = vec![Vec::new(); k_folds];
    for (i, g) in groups.iter().enumerate() {
        folds[fold_of[g]].push(i);
    }
    Ok(folds)
}

/// Runs `run(fold, train, test)` for every fold and collects the results in fold order.
pub fn for_each_fold<T, F>(groups: &[usize], k_folds: usize, rng_seed: u64, run: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize, &[usize], &[usize]) -> Result<T> + Sync,
{
    let folds = assign_folds(groups, k_folds, rng_seed)?;
    (0..k_folds)
        .into_par_iter()
        .map(|f| {
            let train_idx: Vec<usize> =
                folds.iter().enumerate().filter(|&(g, _)| g != f).flat_map(|(_, v)| v.iter().copied()).collect();
            run(f, &train_idx, &folds[f])
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CvConfig {
    pub folds: usize,
    pub seed: u64,
    /// Held-out initial conditions rolled out per fold for trajectory data.
    pub holdout_initial_conditions: usize,
    pub rollout_steps: usize,
    pub rollout_dt: f64,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self { folds: 10, seed: 0, holdout_initial_conditions: 10, rollout_steps: 200, rollout_dt: 0.01 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub test_samples: usize,
    pub mae: f64,
    /// Mean trajectory MAE over the held-out bank (trajectory data only).
    pub trajectory_mae: Option<f64>,
    pub final_train_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub p_model: usize,
    pub folds: Vec<FoldResult>,
}

impl CvResult {
    pub fn fold_maes(&self) -> Vec<f64> {
        self.folds.iter().map(|f| f.mae).collect()
    }

    pub fn mean_mae(&self) -> f64 {
        mean(&self.fold_maes())
    }

    pub fn std_mae(&self) -> f64 {
        std_dev(&self.fold_maes())
    }

    pub fn mean_trajectory_mae(&self) -> Option<f64> {
        let v: Option<Vec<f64>> = self.folds.iter().map(|f| f.trajectory_mae).collect();
        v.map(|v| mean(&v))
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.iter().sum::<f64>() / v.len() as f64
}

fn std_dev(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

/// k-fold cross-validation of a HyDy-GNN of order `p_model`. Trajectory data is split by
/// trajectory. Each fold trains a fresh model on the remaining folds and reports the pointwise
/// test MAE; for trajectory data it also rolls out a bank of held-out initial conditions on the
/// test fold's hypergraphs and reports the mean trajectory MAE.
pub fn kfold_cv(
    dataset: &Dataset,
    p_model: usize,
    arch: &Architecture,
    train_cfg: &TrainConfig,
    cv: &CvConfig,
) -> Result<CvResult> {
    let sizes = dataset.sizes();
    let truth = dataset.manifest.dynamics()?;
    let folds = for_each_fold(&dataset.groups(), cv.folds, cv.seed, |fold, train_idx, test_idx| {
        let model_seed = seed::derive(cv.seed, 0x4d4f_44, (p_model * 1000 + fold) as u64);
        let model = HyDyModel::new(p_model, sizes.iter().copied(), arch, model_seed)?;
        let cfg = TrainConfig { seed: seed::derive(train_cfg.seed, fold as u64, p_model as u64), ..train_cfg.clone() };
        let outcome = train(model, &dataset.observations_of(train_idx), &cfg)?;
        let mae = pointwise_mae(&outcome.model, &dataset.observations_of(test_idx))?;
        let trajectory_mae = if dataset.manifest.scenario == Scenario::Trajectory {
            Some(holdout_trajectory_mae(&outcome.model, dataset, test_idx, fold, &truth, cv)?)
        } else {
            None
        };
        Ok(FoldResult {
            fold,
            test_samples: test_idx.len(),
            mae,
            trajectory_mae,
            final_train_loss: outcome.epoch_losses.last().copied().unwrap_or(f64::NAN),
        })
    })?;
    Ok(CvResult { p_model, folds })
}

fn holdout_trajectory_mae(
    model: &HyDyModel,
    dataset: &Dataset,
    test_idx: &[usize],
    fold: usize,
    truth: &UpdateFamily,
    cv: &CvConfig,
) -> Result<f64> {
    let mut graphs: Vec<usize> = test_idx.iter().map(|&i| dataset.samples[i].graph).collect();
    graphs.sort_unstable();
    graphs.dedup();
    let bank = cv.holdout_initial_conditions.max(1);
    let mut total = 0.0;
    for j in 0..bank {
        let h = &dataset.graphs[graphs[j % graphs.len()]].hypergraph;
        let s = seed::derive(cv.seed, stream::HOLDOUT, (fold * 1_000_003 + j) as u64);
        let x0 = dataset.manifest.init.sample(h.n_nodes(), s);
        total += trajectory_mae(model, h, &x0, cv.rollout_steps, cv.rollout_dt, truth)?.value;
    }
    Ok(total / bank as f64)
}

/// Model-corrected performance `exp(−L/L_max)·exp(−w·p/k)` for each model order `p`.
/// When every loss is zero the accuracy factor is taken as 1.
pub fn mc_perf(losses: &BTreeMap<usize, f64>, k: usize, complexity_weight: f64) -> Result<BTreeMap<usize, f64>> {
    if losses.is_empty() {
        return Err(Error::invalid("MC-perf needs at least one loss"));
    }
    if k == 0 {
        return Err(Error::invalid("topological order must be positive"));
    }
    if losses.values().any(|l| !(*l >= 0.0)) {
        return Err(Error::invalid("losses must be non-negative"));
    }
    let l_max = losses.values().copied().fold(0.0, f64::max);
    Ok(losses
        .iter()
        .map(|(&p, &l)| {
            let accuracy = if l_max > 0.0 { (-l / l_max).exp() } else { 1.0 };
            let complexity = (-complexity_weight * p as f64 / k as f64).exp();
            (p, accuracy * complexity)
        })
        .collect())
}

/// Order with the highest score; ties go to the smaller order.
pub fn select_effective_order(scores: &BTreeMap<usize, f64>) -> Option<usize> {
    scores
        .iter()
        .fold(None::<(usize, f64)>, |best, (&p, &s)| match best {
            Some((_, bs)) if bs >= s || s.is_nan() => best,
            _ => Some((p, s)),
        })
        .map(|(p, _)| p)
}

/// One cross-validated model order of one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportEntry {
    pub dynamics: String,
    pub p: usize,
    pub p_model: usize,
    pub fold_mae: Vec<f64>,
    pub mean_mae: f64,
    pub std_mae: f64,
    pub fold_trajectory_mae: Option<Vec<f64>>,
    pub mean_trajectory_mae: Option<f64>,
}

/// Score summary and selected order for one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderSummary {
    pub dynamics: String,
    pub p: usize,
    pub k: usize,
    /// Which loss fed MC-perf: `"mae"` or `"trajectory_mae"`.
    pub loss: String,
    pub l_max: f64,
    pub mc_perf: BTreeMap<usize, f64>,
    pub selected: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub entries: Vec<ReportEntry>,
    pub summaries: Vec<OrderSummary>,
    /// Free-form provenance (resolved configuration, seeds).
    pub metadata: serde_json::Value,
}

/// Cross-validates every order in `model_orders` on `dataset` and scores them.
pub fn study_orders(
    dataset: &Dataset,
    model_orders: &[usize],
    arch: &Architecture,
    train_cfg: &TrainConfig,
    cv: &CvConfig,
    complexity_weight: f64,
) -> Result<(Vec<ReportEntry>, OrderSummary)> {
    let results: Vec<CvResult> = model_orders
        .par_iter()
        .map(|&p_model| kfold_cv(dataset, p_model, arch, train_cfg, cv))
        .collect::<Result<_>>()?;
    summarise(dataset, &results, complexity_weight)
}

/// Builds report entries and the order summary from finished cross-validation runs.
pub fn summarise(
    dataset: &Dataset,
    results: &[CvResult],
    complexity_weight: f64,
) -> Result<(Vec<ReportEntry>, OrderSummary)> {
    let name = dataset.manifest.family.name().to_string();
    let p = dataset.manifest.p;
    let entries: Vec<ReportEntry> = results
        .iter()
        .map(|r| ReportEntry {
            dynamics: name.clone(),
            p,
            p_model: r.p_model,
            fold_mae: r.fold_maes(),
            mean_mae: r.mean_mae(),
            std_mae: r.std_mae(),
            fold_trajectory_mae: r.folds.iter().map(|f| f.trajectory_mae).collect(),
            mean_trajectory_mae: r.mean_trajectory_mae(),
        })
        .collect();
    let use_traj = entries.iter().all(|e| e.mean_trajectory_mae.is_some());
    let losses: BTreeMap<usize, f64> = entries
        .iter()
        .map(|e| (e.p_model, if use_traj { e.mean_trajectory_mae.unwrap_or(f64::NAN) } else { e.mean_mae }))
        .collect();
    let k = dataset.order().max(results.iter().map(|r| r.p_model).max().unwrap_or(0));
    let scores = mc_perf(&losses, k, complexity_weight)?;
    let selected = select_effective_order(&scores).ok_or_else(|| Error::invalid("no model orders"))?;
    Ok((
        entries,
        OrderSummary {
            dynamics: name,
            p,
            k,
            loss: if use_traj { "trajectory_mae" } else { "mae" }.into(),
            l_max: losses.values().copied().fold(0.0, f64::max),
            mc_perf: scores,
            selected,
        },
    ))
}

impl EvalReport {
    /// One row per (dynamics, p, p_model, fold).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("dynamics,p,p_model,fold,mae,trajectory_mae\n");
        for e in &self.entries {
            for (f, mae) in e.fold_mae.iter().enumerate() {
                let traj = e
                    .fold_trajectory_mae
                    .as_ref()
                    .map(|v| crate::text::fmt_f64(v[f]))
                    .unwrap_or_default();
                out.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    e.dynamics,
                    e.p,
                    e.p_model,
                    f,
                    crate::text::fmt_f64(*mae),
                    traj
                ));
            }
        }
        out
    }

    /// Long-format table `dynamics,p,p_model,metric,value` for plotting.
    pub fn plot_table(&self) -> String {
        let mut out = String::from("dynamics,p,p_model,metric,value\n");
        for e in &self.entries {
            out.push_str(&format!("{},{},{},mean_mae,{}\n", e.dynamics, e.p, e.p_model, e.mean_mae));
            out.push_str(&format!("{},{},{},std_mae,{}\n", e.dynamics, e.p, e.p_model, e.std_mae));
            if let Some(t) = e.mean_trajectory_mae {
                out.push_str(&format!("{},{},{},mean_trajectory_mae,{}\n", e.dynamics, e.p, e.p_model, t));
            }
        }
        for s in &self.summaries {
            for (p_model, score) in &s.mc_perf {
                out.push_str(&format!("{},{},{},mc_perf,{}\n", s.dynamics, s.p, p_model, score));
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }

    pub fn from_json(src: &str) -> Result<Self> {
        serde_json::from_str(src).map_err(|e| Error::Parse { path: "<report>".into(), line: e.line(), msg: e.to_string() })
    }
}
