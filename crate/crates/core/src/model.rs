//! HyDy-GNN: hypergraph dynamics with learned, permutation-averaged edge updates.
//!
//! A model of order `p_model` owns one network per hyperedge size `d`. For `d ≤ p_model` the
//! network takes all `d` values of the edge (center first); for `d > p_model` it takes
//! `p_model` values and the edge update is the sum over all `(p_model − 1)`-subsets of the
//! non-center members. Each network call is averaged over every ordering of its non-center
//! inputs, which makes the learned update exactly symmetric in them.

use std::collections::BTreeMap;

use itertools::Itertools;
use ndarray::ArrayView2;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dynamics::VectorField;
use crate::hypergraph::{Hypergraph, DEFAULT_MAX_ARITY};
use crate::mlp::{Activation, Adam, MlpParams, MlpSpec, Tape};
use crate::{seed, Error, Result};

/// One training pair `(x, ẋ)` on its hypergraph.
#[derive(Debug, Clone, Copy)]
pub struct Observation<'a> {
    pub hypergraph: &'a Hypergraph,
    pub state: &'a [f64],
    pub derivative: &'a [f64],
}

/// How `‖θ‖` enters the loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Penalty {
    /// `λ‖θ‖₂`
    Norm,
    /// `λ‖θ‖₂²`
    SquaredNorm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lambda: f64,
    pub penalty: Penalty,
    pub learning_rate: f64,
    /// Learning rate reached at the last epoch by cosine annealing. Equal to `learning_rate`
    /// for a constant schedule.
    pub final_learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub lambda_grid: Vec<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda: 1e-6,
            penalty: Penalty::Norm,
            learning_rate: 1e-3,
            final_learning_rate: 1e-3,
            epochs: 500,
            batch_size: 32,
            seed: 0,
            lambda_grid: vec![1e-6, 1e-5, 1e-4, 1e-3, 1e-2],
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) {
            return Err(Error::invalid(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        if !(self.learning_rate > 0.0 && self.final_learning_rate > 0.0) {
            return Err(Error::invalid("learning rates must be positive"));
        }
        Ok(())
    }

    fn learning_rate_at(&self, epoch: usize) -> f64 {
        if self.epochs <= 1 {
            return self.learning_rate;
        }
        let progress = epoch as f64 / (self.epochs - 1) as f64;
        let cosine = 0.5 * (1.0 + (std::f64::consts::PI * progress).cos());
        self.final_learning_rate + (self.learning_rate - self.final_learning_rate) * cosine
    }
}

/// Hidden-layer layout shared by every network in a model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub hidden: Vec<usize>,
    pub activation: Activation,
}

impl Default for Architecture {
    fn default() -> Self {
        Self { hidden: vec![32, 32], activation: Activation::Tanh }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HyDyModel {
    p_model: usize,
    nets: BTreeMap<usize, MlpParams>,
    /// Configuration of the run that produced the current weights.
    pub train_config: Option<TrainConfig>,
    pub dataset_fingerprint: Option<String>,
}

impl HyDyModel {
    /// Fresh model with one randomly initialised network per size in `sizes`.
    pub fn new(
        p_model: usize,
        sizes: impl IntoIterator<Item = usize>,
        arch: &Architecture,
        rng_seed: u64,
    ) -> Result<Self> {
        if p_model < 2 {
            return Err(Error::invalid(format!("model order must be at least 2, got {p_model}")));
        }
        let mut nets = BTreeMap::new();
        for d in sizes {
            if !(2..=DEFAULT_MAX_ARITY).contains(&d) {
                return Err(Error::ArityTooLarge { size: d, max: DEFAULT_MAX_ARITY });
            }
            let spec = MlpSpec::new(d.min(p_model), arch.hidden.clone(), arch.activation)?;
            nets.insert(d, MlpParams::init(spec, seed::derive(rng_seed, 0x4e45_54, d as u64)));
        }
        Ok(Self { p_model, nets, train_config: None, dataset_fingerprint: None })
    }

    /// Assembles a model from existing networks; each arity must be `min(d, p_model)`.
    pub fn from_networks(p_model: usize, nets: BTreeMap<usize, MlpParams>) -> Result<Self> {
        if p_model < 2 {
            return Err(Error::invalid(format!("model order must be at least 2, got {p_model}")));
        }
        for (&d, net) in &nets {
            if net.arity() != d.min(p_model) {
                return Err(Error::invalid(format!(
                    "network for size {d} has arity {}, expected {}",
                    net.arity(),
                    d.min(p_model)
                )));
            }
        }
        Ok(Self { p_model, nets, train_config: None, dataset_fingerprint: None })
    }

    pub fn p_model(&self) -> usize {
        self.p_model
    }

    /// Largest edge size the model covers.
    pub fn order(&self) -> usize {
        self.nets.keys().next_back().copied().unwrap_or(0)
    }

    pub fn sizes(&self) -> impl Iterator<Item = usize> + '_ {
        self.nets.keys().copied()
    }

    pub fn network(&self, d: usize) -> Option<&MlpParams> {
        self.nets.get(&d)
    }

    pub fn network_mut(&mut self, d: usize) -> Option<&mut MlpParams> {
        self.nets.get_mut(&d)
    }

    pub fn param_count(&self) -> usize {
        self.nets.values().map(MlpParams::len).sum()
    }

    /// `‖θ‖₂` over every parameter of every network.
    pub fn theta_norm(&self) -> f64 {
        self.nets.values().flat_map(|n| n.as_slice()).map(|v| v * v).sum::<f64>().sqrt()
    }

    fn penalty_value(&self, lambda: f64, penalty: Penalty) -> f64 {
        match penalty {
            Penalty::Norm => lambda * self.theta_norm(),
            Penalty::SquaredNorm => lambda * self.theta_norm().powi(2),
        }
    }

    fn net_for(&self, d: usize) -> Result<&MlpParams> {
        if d > DEFAULT_MAX_ARITY {
            return Err(Error::ArityTooLarge { size: d, max: DEFAULT_MAX_ARITY });
        }
        self.nets.get(&d).ok_or(Error::MissingNetwork(d))
    }

    /// Learned `f̂_d(x_edge[center], rest)`.
    pub fn edge_update(&self, x_edge: &[f64], center: usize) -> Result<f64> {
        let d = x_edge.len();
        if center >= d {
            return Err(Error::DimensionMismatch { expected: d, got: center });
        }
        let net = self.net_for(d)?;
        let pattern = RowPattern::new(d, self.p_model);
        let mut total = 0.0;
        let mut row = Vec::with_capacity(pattern.arity);
        for ordering in pattern.for_center(center) {
            row.clear();
            row.push(x_edge[center]);
            row.extend(ordering.iter().map(|&j| x_edge[j]));
            total += net.forward(&row)?;
        }
        Ok(total * pattern.weight)
    }

    /// `M̂(x)_i = Σ_d Σ_{E ∋ i} f̂_d(x_i, {x_j : j ∈ E, j ≠ i})`.
    pub fn predict_rhs(&self, h: &Hypergraph, x: &[f64]) -> Result<Vec<f64>> {
        let compiled = Compiled::new(self, &[(h, x)])?;
        Ok(compiled.forward(self, &[0]).predictions)
    }

    pub fn to_bundle(&self) -> String {
        let manifest = BundleManifest {
            p_model: self.p_model,
            k: self.order(),
            sizes: self.sizes().collect(),
            train_config: self.train_config.clone(),
            dataset_fingerprint: self.dataset_fingerprint.clone(),
        };
        let mut out = String::from("# hydy model bundle\n");
        out.push_str("manifest ");
        out.push_str(&serde_json::to_string(&manifest).expect("manifest serialises"));
        out.push('\n');
        for (d, net) in &self.nets {
            out.push_str(&format!("net {d}\n"));
            net.write_text(&mut out);
        }
        out
    }

    pub fn from_bundle(src: &str) -> Result<Self> {
        let bad = |line: usize, msg: String| Error::Parse { path: "<bundle>".into(), line, msg };
        let mut lines = src.lines().enumerate().map(|(i, l)| (i + 1, l)).peekable();
        let mut manifest: Option<BundleManifest> = None;
        let mut nets = BTreeMap::new();
        while let Some((n, line)) = lines.next() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(json) = line.strip_prefix("manifest ") {
                manifest = Some(serde_json::from_str(json).map_err(|e| bad(n, e.to_string()))?);
            } else if let Some(d) = line.strip_prefix("net ") {
                let d: usize = d.trim().parse().map_err(|e| bad(n, format!("bad size: {e}")))?;
                let net = MlpParams::read_text(&mut lines).map_err(|(l, m)| bad(l, m))?;
                nets.insert(d, net);
            } else {
                return Err(bad(n, format!("unexpected line `{line}`")));
            }
        }
        let manifest = manifest.ok_or_else(|| bad(0, "missing manifest".into()))?;
        if manifest.sizes != nets.keys().copied().collect::<Vec<_>>() {
            return Err(bad(0, "manifest sizes do not match the stored networks".into()));
        }
        let mut model = Self::from_networks(manifest.p_model, nets)?;
        model.train_config = manifest.train_config;
        model.dataset_fingerprint = manifest.dataset_fingerprint;
        Ok(model)
    }
}

impl VectorField for HyDyModel {
    fn rhs(&self, h: &Hypergraph, x: &[f64]) -> Result<Vec<f64>> {
        self.predict_rhs(h, x)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleManifest {
    pub p_model: usize,
    pub k: usize,
    pub sizes: Vec<usize>,
    pub train_config: Option<TrainConfig>,
    pub dataset_fingerprint: Option<String>,
}

/// Which edge positions feed each network call on an edge of size `d`.
#[derive(Debug, Clone)]
struct RowPattern {
    arity: usize,
    /// `1 / (arity − 1)!`, the averaging weight over orderings.
    weight: f64,
    /// Per center position: the ordered non-center positions of every call.
    per_center: Vec<Vec<Vec<usize>>>,
}

impl RowPattern {
    fn new(d: usize, p_model: usize) -> Self {
        let arity = d.min(p_model);
        let k = arity - 1;
        let per_center = (0..d)
            .map(|c| {
                let others: Vec<usize> = (0..d).filter(|&j| j != c).collect();
                others
                    .into_iter()
                    .combinations(k)
                    .flat_map(|subset| subset.into_iter().permutations(k))
                    .collect()
            })
            .collect();
        let orderings: usize = (1..=k).product();
        Self { arity, weight: 1.0 / orderings as f64, per_center }
    }

    fn for_center(&self, c: usize) -> &[Vec<usize>] {
        &self.per_center[c]
    }
}

/// Network inputs for a set of states, laid out per edge size so that a batch of samples turns
/// into one matrix product per network.
struct Compiled {
    sizes: Vec<usize>,
    weights: Vec<f64>,
    arities: Vec<usize>,
    /// Per size: flattened `rows × arity` inputs over all samples.
    inputs: Vec<Vec<f64>>,
    /// Per size: target node of each row.
    targets: Vec<Vec<u32>>,
    /// Per sample, per size: row range.
    ranges: Vec<Vec<(usize, usize)>>,
    n_nodes: Vec<usize>,
}

struct Forward {
    predictions: Vec<f64>,
    tapes: Vec<Option<(Tape, Vec<usize>)>>,
}

impl Compiled {
    fn new(model: &HyDyModel, items: &[(&Hypergraph, &[f64])]) -> Result<Self> {
        let sizes: Vec<usize> = model.sizes().collect();
        let patterns: Vec<RowPattern> = sizes.iter().map(|&d| RowPattern::new(d, model.p_model)).collect();
        let mut inputs = vec![Vec::new(); sizes.len()];
        let mut targets = vec![Vec::new(); sizes.len()];
        let mut ranges = Vec::with_capacity(items.len());
        let mut n_nodes = Vec::with_capacity(items.len());
        for &(h, x) in items {
            if x.len() != h.n_nodes() {
                return Err(Error::DimensionMismatch { expected: h.n_nodes(), got: x.len() });
            }
            for d in h.sizes() {
                model.net_for(d)?;
            }
            let mut sample_ranges = Vec::with_capacity(sizes.len());
            for (s, &d) in sizes.iter().enumerate() {
                let start = targets[s].len();
                let pattern = &patterns[s];
                for edge in h.edges(d) {
                    for (c, &center) in edge.iter().enumerate() {
                        for ordering in pattern.for_center(c) {
                            inputs[s].push(x[center]);
                            inputs[s].extend(ordering.iter().map(|&j| x[edge[j]]));
                            targets[s].push(center as u32);
                        }
                    }
                }
                sample_ranges.push((start, targets[s].len()));
            }
            ranges.push(sample_ranges);
            n_nodes.push(h.n_nodes());
        }
        Ok(Self {
            weights: patterns.iter().map(|p| p.weight).collect(),
            arities: patterns.iter().map(|p| p.arity).collect(),
            sizes,
            inputs,
            targets,
            ranges,
            n_nodes,
        })
    }

    /// Predictions for `batch` (sample indices), concatenated in batch order.
    fn forward(&self, model: &HyDyModel, batch: &[usize]) -> Forward {
        let offsets: Vec<usize> = batch
            .iter()
            .scan(0, |acc, &i| {
                let off = *acc;
                *acc += self.n_nodes[i];
                Some(off)
            })
            .collect();
        let total: usize = batch.iter().map(|&i| self.n_nodes[i]).sum();
        let mut predictions = vec![0.0; total];
        let mut tapes = Vec::with_capacity(self.sizes.len());
        for (s, &d) in self.sizes.iter().enumerate() {
            let arity = self.arities[s];
            let mut rows = Vec::new();
            let mut row_targets = Vec::new();
            for (b, &i) in batch.iter().enumerate() {
                let (start, end) = self.ranges[i][s];
                rows.extend_from_slice(&self.inputs[s][start * arity..end * arity]);
                row_targets.extend(self.targets[s][start..end].iter().map(|&t| offsets[b] + t as usize));
            }
            if row_targets.is_empty() {
                tapes.push(None);
                continue;
            }
            let net = &model.nets[&d];
            let view = ArrayView2::from_shape((row_targets.len(), arity), &rows).expect("row layout");
            let tape = net.forward_batch(view);
            let w = self.weights[s];
            for (out, &t) in tape.output().iter().zip(&row_targets) {
                predictions[t] += w * out;
            }
            tapes.push(Some((tape, row_targets)));
        }
        Forward { predictions, tapes }
    }
}

/// Parameter gradient, one flat buffer per edge size.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub per_size: BTreeMap<usize, Vec<f64>>,
}

/// `Σ_i ‖M̂(x⁽ⁱ⁾) − ẋ⁽ⁱ⁾‖₁ + λ‖θ‖₂` (or `λ‖θ‖₂²` with [`Penalty::SquaredNorm`]).
pub fn loss(model: &HyDyModel, batch: &[Observation<'_>], lambda: f64, penalty: Penalty) -> Result<f64> {
    Ok(loss_and_gradient(model, batch, lambda, penalty)?.0)
}

/// Loss together with its exact gradient. The L1 term uses `sign(0) = 0`.
pub fn loss_and_gradient(
    model: &HyDyModel,
    batch: &[Observation<'_>],
    lambda: f64,
    penalty: Penalty,
) -> Result<(f64, Gradient)> {
    if batch.is_empty() {
        return Err(Error::invalid("loss needs at least one observation"));
    }
    let items: Vec<(&Hypergraph, &[f64])> = batch.iter().map(|o| (o.hypergraph, o.state)).collect();
    let compiled = Compiled::new(model, &items)?;
    let labels: Vec<f64> = batch.iter().flat_map(|o| o.derivative.iter().copied()).collect();
    for o in batch {
        if o.derivative.len() != o.state.len() {
            return Err(Error::DimensionMismatch { expected: o.state.len(), got: o.derivative.len() });
        }
    }
    let all: Vec<usize> = (0..batch.len()).collect();
    let mut grads: BTreeMap<usize, Vec<f64>> =
        model.nets.iter().map(|(&d, n)| (d, vec![0.0; n.len()])).collect();
    let data = accumulate(model, &compiled, &all, &labels, &mut grads);
    let reg = add_penalty_gradient(model, lambda, penalty, &mut grads);
    Ok((data + reg, Gradient { per_size: grads }))
}

/// Adds the data-term gradient for `batch` to `grads` and returns the data term.
fn accumulate(
    model: &HyDyModel,
    compiled: &Compiled,
    batch: &[usize],
    labels: &[f64],
    grads: &mut BTreeMap<usize, Vec<f64>>,
) -> f64 {
    let fwd = compiled.forward(model, batch);
    let mut data = 0.0;
    let signs: Vec<f64> = fwd
        .predictions
        .iter()
        .zip(labels)
        .map(|(p, y)| {
            let r = p - y;
            data += r.abs();
            if r > 0.0 {
                1.0
            } else if r < 0.0 {
                -1.0
            } else {
                0.0
            }
        })
        .collect();
    for (s, tape) in fwd.tapes.iter().enumerate() {
        let Some((tape, targets)) = tape else { continue };
        let d = compiled.sizes[s];
        let w = compiled.weights[s];
        let upstream: Vec<f64> = targets.iter().map(|&t| w * signs[t]).collect();
        let g = grads.get_mut(&d).expect("gradient buffer per size");
        model.nets[&d].backward_batch(tape, &upstream, g, false);
    }
    data
}

/// Adds the penalty gradient and returns the penalty value.
fn add_penalty_gradient(
    model: &HyDyModel,
    lambda: f64,
    penalty: Penalty,
    grads: &mut BTreeMap<usize, Vec<f64>>,
) -> f64 {
    if lambda == 0.0 {
        return 0.0;
    }
    let norm = model.theta_norm();
    let scale = match penalty {
        Penalty::Norm if norm < 1e-12 => 0.0,
        Penalty::Norm => lambda / norm,
        Penalty::SquaredNorm => 2.0 * lambda,
    };
    for (d, net) in &model.nets {
        for (g, &t) in grads.get_mut(d).expect("buffer").iter_mut().zip(net.as_slice()) {
            *g += scale * t;
        }
    }
    model.penalty_value(lambda, penalty)
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: HyDyModel,
    /// Objective accumulated over each epoch's minibatches (the full loss when the batch covers
    /// the whole set).
    pub epoch_losses: Vec<f64>,
}

/// Minibatch Adam on the regularised L1 loss. Each minibatch `B` carries a `|B|/S` share of the
/// penalty so that one epoch sums to the full objective.
pub fn train(
    mut model: HyDyModel,
    data: &[Observation<'_>],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    let items: Vec<(&Hypergraph, &[f64])> = data.iter().map(|o| (o.hypergraph, o.state)).collect();
    let compiled = Compiled::new(&model, &items)?;
    for o in data {
        if o.derivative.len() != o.state.len() {
            return Err(Error::DimensionMismatch { expected: o.state.len(), got: o.derivative.len() });
        }
    }
    let mut optimizers: BTreeMap<usize, Adam> =
        model.nets.iter().map(|(&d, n)| (d, Adam::new(n.len(), cfg.learning_rate))).collect();
    let mut grads: BTreeMap<usize, Vec<f64>> =
        model.nets.iter().map(|(&d, n)| (d, vec![0.0; n.len()])).collect();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut rng = seed::rng(seed::derive(cfg.seed, seed::stream::SHUFFLE, 0));
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let total = data.len() as f64;
    let mut labels = Vec::new();

    for epoch in 0..cfg.epochs {
        let lr = cfg.learning_rate_at(epoch);
        for opt in optimizers.values_mut() {
            opt.lr = lr;
        }
        if cfg.batch_size < data.len() {
            order.shuffle(&mut rng);
        }
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            labels.clear();
            labels.extend(batch.iter().flat_map(|&i| data[i].derivative.iter().copied()));
            grads.values_mut().for_each(|g| g.iter_mut().for_each(|v| *v = 0.0));
            let mut batch_loss = accumulate(&model, &compiled, batch, &labels, &mut grads);
            let share = cfg.lambda * batch.len() as f64 / total;
            batch_loss += add_penalty_gradient(&model, share, cfg.penalty, &mut grads);
            if !batch_loss.is_finite() {
                return Err(Error::Diverged { epoch, loss: batch_loss });
            }
            epoch_loss += batch_loss;
            for (d, opt) in optimizers.iter_mut() {
                let net = model.nets.get_mut(d).expect("network");
                opt.step(net.as_mut_slice(), &grads[d]);
            }
        }
        if model.nets.values().any(|n| n.as_slice().iter().any(|v| !v.is_finite())) {
            return Err(Error::Diverged { epoch, loss: f64::NAN });
        }
        epoch_losses.push(epoch_loss);
    }
    model.train_config = Some(cfg.clone());
    Ok(TrainOutcome { model, epoch_losses })
}

/// Result of a regularisation search.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaSearch {
    pub best: f64,
    /// `(λ, validation error)` for every grid value, ascending in λ.
    pub scores: Vec<(f64, f64)>,
}

/// Evaluates `score` on the deduplicated grid and returns the minimiser; ties go to the smaller λ.
pub fn select_lambda<F>(grid: &[f64], mut score: F) -> Result<LambdaSearch>
where
    F: FnMut(f64) -> Result<f64>,
{
    let mut grid: Vec<f64> = grid.to_vec();
    if grid.is_empty() {
        return Err(Error::invalid("lambda grid is empty"));
    }
    if grid.iter().any(|l| !(*l >= 0.0)) {
        return Err(Error::invalid("lambda grid values must be >= 0"));
    }
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let mut scores = Vec::with_capacity(grid.len());
    for &l in &grid {
        scores.push((l, score(l)?));
    }
    let best = scores
        .iter()
        .fold(None::<(f64, f64)>, |best, &(l, s)| match best {
            Some((_, bs)) if bs <= s || s.is_nan() => best,
            _ => Some((l, s)),
        })
        .map(|(l, _)| l)
        .unwrap_or(grid[0]);
    Ok(LambdaSearch { best, scores })
}

/// Trains one copy of `template` per grid value on `train` and scores it by mean absolute error
/// on `validation`.
pub fn search_lambda(
    template: &HyDyModel,
    train_set: &[Observation<'_>],
    validation: &[Observation<'_>],
    cfg: &TrainConfig,
) -> Result<LambdaSearch> {
    select_lambda(&cfg.lambda_grid, |lambda| {
        let run = TrainConfig { lambda, ..cfg.clone() };
        let trained = train(template.clone(), train_set, &run)?;
        crate::evaluation::pointwise_mae(&trained.model, validation)
    })
}
