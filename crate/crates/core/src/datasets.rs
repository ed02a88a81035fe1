//! Training data: point-based samples `(x, ẋ)` with exact derivatives, and trajectory-based
//! samples with forward-difference labels taken from Euler trajectories.
//!
//! Every random item (hypergraph, initial state) draws from its own seed derived from the master
//! seed, see [`crate::seed`], so generation order does not matter and datasets are reproducible
//! bit for bit.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dynamics::{evaluate_rhs, integrate_euler, Family, UpdateFamily};
use crate::hypergraph::{self, generate_er, Hypergraph, LoadOptions};
use crate::model::Observation;
use crate::seed::{self, stream};
use crate::text;
use crate::{Error, Result};

pub const DATASET_FILE: &str = "dataset.csv";
pub const GRAPH_DIR: &str = "graphs";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    Point,
    Trajectory,
}

/// Law of the i.i.d. initial node states.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum InitLaw {
    Uniform { low: f64, high: f64 },
    /// `u^exponent` with `u ~ U[0, 1]`; exponents above 1 skew towards 0.
    Power { exponent: f64 },
}

impl InitLaw {
    /// Kuramoto: U[−π, π]; SI: U[0, 1]; MCM: u² (skewed, support [0, 1]); diffusion: U[−1, 1].
    pub fn for_family(family: Family) -> Self {
        use std::f64::consts::PI;
        match family {
            Family::Kuramoto => InitLaw::Uniform { low: -PI, high: PI },
            Family::Si => InitLaw::Uniform { low: 0.0, high: 1.0 },
            Family::Mcm => InitLaw::Power { exponent: 2.0 },
            Family::Diffusion => InitLaw::Uniform { low: -1.0, high: 1.0 },
        }
    }

    pub fn sample(&self, n_nodes: usize, rng_seed: u64) -> Vec<f64> {
        let mut rng = seed::rng(rng_seed);
        (0..n_nodes)
            .map(|_| {
                let u: f64 = rng.random();
                match *self {
                    InitLaw::Uniform { low, high } => low + (high - low) * u,
                    InitLaw::Power { exponent } => u.powf(exponent),
                }
            })
            .collect()
    }
}

pub fn sample_initial_state(family: Family, n_nodes: usize, rng_seed: u64) -> Vec<f64> {
    InitLaw::for_family(family).sample(n_nodes, rng_seed)
}

/// Where the hypergraphs of a dataset come from.
#[derive(Debug, Clone)]
pub enum HypergraphSource {
    /// One fixed topology shared by all samples.
    Fixed { name: String, hypergraph: Hypergraph },
    /// Random hypergraphs. Point datasets spread samples round-robin over `n_graphs` graphs
    /// (one per sample when `None`); trajectory datasets draw one graph per trajectory.
    ErdosRenyi { n_nodes: usize, probs: BTreeMap<usize, f64>, n_graphs: Option<usize> },
}

impl HypergraphSource {
    pub fn default_er() -> Self {
        HypergraphSource::ErdosRenyi { n_nodes: 20, probs: hypergraph::default_er_probs(), n_graphs: None }
    }

    fn descriptor(&self) -> SourceDescriptor {
        match self {
            HypergraphSource::Fixed { name, .. } => SourceDescriptor::Fixed { name: name.clone() },
            HypergraphSource::ErdosRenyi { n_nodes, probs, n_graphs } => SourceDescriptor::ErdosRenyi {
                n_nodes: *n_nodes,
                probs: probs.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
                n_graphs: *n_graphs,
            },
        }
    }

    fn graph(&self, master_seed: u64, index: usize) -> Result<GraphEntry> {
        match self {
            HypergraphSource::Fixed { name, hypergraph } => {
                Ok(GraphEntry { name: name.clone(), seed: None, hypergraph: hypergraph.clone() })
            }
            HypergraphSource::ErdosRenyi { n_nodes, probs, .. } => {
                let s = seed::derive(master_seed, stream::HYPERGRAPH, index as u64);
                Ok(GraphEntry {
                    name: format!("er-{index:05}"),
                    seed: Some(s),
                    hypergraph: generate_er(*n_nodes, probs, s)?,
                })
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SourceDescriptor {
    Fixed { name: String },
    ErdosRenyi { n_nodes: usize, probs: BTreeMap<String, f64>, n_graphs: Option<usize> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphEntry {
    pub name: String,
    pub seed: Option<u64>,
    pub hypergraph: Hypergraph,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub scenario: Scenario,
    pub family: Family,
    pub p: usize,
    pub count: usize,
    pub n_graphs: usize,
    pub n_traj: Option<usize>,
    pub steps: Option<usize>,
    pub dt: Option<f64>,
    pub init: InitLaw,
    pub seed: u64,
    pub source: SourceDescriptor,
    /// Trajectories abandoned because the state became non-finite.
    pub dropped_trajectories: Vec<usize>,
}

impl DatasetManifest {
    pub fn dynamics(&self) -> Result<UpdateFamily> {
        UpdateFamily::new(self.family, self.p)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub graph: usize,
    pub state: Vec<f64>,
    pub derivative: Vec<f64>,
    pub state_seed: u64,
    pub trajectory: Option<usize>,
    pub step: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub graphs: Vec<GraphEntry>,
    pub samples: Vec<Sample>,
}

/// Options shared by both scenarios.
#[derive(Debug, Clone)]
pub struct GenerationSpec {
    pub source: HypergraphSource,
    pub dynamics: UpdateFamily,
    /// Initial-state law; the family default when `None`.
    pub init: Option<InitLaw>,
    pub seed: u64,
}

impl GenerationSpec {
    fn init_law(&self) -> InitLaw {
        self.init.unwrap_or_else(|| InitLaw::for_family(self.dynamics.family))
    }
}

/// `count` independent states, each labelled with the exact right-hand side.
pub fn make_point_dataset(spec: &GenerationSpec, count: usize) -> Result<Dataset> {
    if count == 0 {
        return Err(Error::invalid("point dataset needs at least one sample"));
    }
    let n_graphs = match &spec.source {
        HypergraphSource::Fixed { .. } => 1,
        HypergraphSource::ErdosRenyi { n_graphs, .. } => n_graphs.unwrap_or(count).clamp(1, count),
    };
    let graphs: Vec<GraphEntry> =
        (0..n_graphs).into_par_iter().map(|g| spec.source.graph(spec.seed, g)).collect::<Result<_>>()?;
    let law = spec.init_law();
    let samples: Vec<Sample> = (0..count)
        .into_par_iter()
        .map(|i| {
            let graph = i % n_graphs;
            let h = &graphs[graph].hypergraph;
            let state_seed = seed::derive(spec.seed, stream::STATE, i as u64);
            let state = law.sample(h.n_nodes(), state_seed);
            let derivative = evaluate_rhs(h, &spec.dynamics, &state)?;
            Ok(Sample { graph, state, derivative, state_seed, trajectory: None, step: None })
        })
        .collect::<Result<_>>()?;
    Ok(Dataset {
        manifest: DatasetManifest {
            scenario: Scenario::Point,
            family: spec.dynamics.family,
            p: spec.dynamics.order,
            count,
            n_graphs,
            n_traj: None,
            steps: None,
            dt: None,
            init: law,
            seed: spec.seed,
            source: spec.source.descriptor(),
            dropped_trajectories: Vec::new(),
        },
        graphs,
        samples,
    })
}

/// `n_traj` Euler trajectories of `steps` steps; one sample per step with label
/// `(x_{t+1} − x_t)/Δ`. Random sources draw one hypergraph per trajectory.
pub fn make_trajectory_dataset(spec: &GenerationSpec, n_traj: usize, steps: usize, dt: f64) -> Result<Dataset> {
    if steps == 0 || n_traj == 0 {
        return Err(Error::invalid("trajectory dataset needs at least one trajectory and one step"));
    }
    let law = spec.init_law();
    let runs: Vec<(GraphEntry, u64, Option<Vec<Vec<f64>>>)> = (0..n_traj)
        .into_par_iter()
        .map(|t| {
            let graph = match spec.source {
                HypergraphSource::Fixed { .. } => spec.source.graph(spec.seed, 0)?,
                HypergraphSource::ErdosRenyi { .. } => spec.source.graph(spec.seed, t)?,
            };
            let state_seed = seed::derive(spec.seed, stream::STATE, t as u64);
            let x0 = law.sample(graph.hypergraph.n_nodes(), state_seed);
            let states = match integrate_euler(&spec.dynamics, &graph.hypergraph, &x0, steps, dt) {
                Ok(traj) => Some(traj.states),
                Err(Error::NonFinite { .. }) => None,
                Err(e) => return Err(e),
            };
            Ok((graph, state_seed, states))
        })
        .collect::<Result<_>>()?;

    let mut graphs = Vec::new();
    let mut samples = Vec::with_capacity(n_traj * steps);
    let mut dropped = Vec::new();
    let shared = matches!(spec.source, HypergraphSource::Fixed { .. });
    for (t, (graph, state_seed, states)) in runs.into_iter().enumerate() {
        let Some(states) = states else {
            dropped.push(t);
            continue;
        };
        let gi = if shared && !graphs.is_empty() {
            0
        } else {
            graphs.push(graph);
            graphs.len() - 1
        };
        for (step, pair) in states.windows(2).enumerate() {
            let derivative = pair[1].iter().zip(&pair[0]).map(|(b, a)| (b - a) / dt).collect();
            samples.push(Sample {
                graph: gi,
                state: pair[0].clone(),
                derivative,
                state_seed,
                trajectory: Some(t),
                step: Some(step),
            });
        }
    }
    Ok(Dataset {
        manifest: DatasetManifest {
            scenario: Scenario::Trajectory,
            family: spec.dynamics.family,
            p: spec.dynamics.order,
            count: samples.len(),
            n_graphs: graphs.len(),
            n_traj: Some(n_traj),
            steps: Some(steps),
            dt: Some(dt),
            init: law,
            seed: spec.seed,
            source: spec.source.descriptor(),
            dropped_trajectories: dropped,
        },
        graphs,
        samples,
    })
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn hypergraph(&self, sample: usize) -> &Hypergraph {
        &self.graphs[self.samples[sample].graph].hypergraph
    }

    pub fn observation(&self, i: usize) -> Observation<'_> {
        let s = &self.samples[i];
        Observation { hypergraph: &self.graphs[s.graph].hypergraph, state: &s.state, derivative: &s.derivative }
    }

    pub fn observations(&self) -> Vec<Observation<'_>> {
        (0..self.samples.len()).map(|i| self.observation(i)).collect()
    }

    pub fn observations_of(&self, indices: &[usize]) -> Vec<Observation<'_>> {
        indices.iter().map(|&i| self.observation(i)).collect()
    }

    /// Edge sizes present in any hypergraph of the dataset.
    pub fn sizes(&self) -> BTreeSet<usize> {
        self.graphs.iter().flat_map(|g| g.hypergraph.sizes()).collect()
    }

    /// Largest topological order among the dataset's hypergraphs.
    pub fn order(&self) -> usize {
        self.graphs.iter().map(|g| g.hypergraph.order()).max().unwrap_or(0)
    }

    /// Cross-validation groups: the trajectory id for trajectory data, the sample index otherwise.
    pub fn groups(&self) -> Vec<usize> {
        self.samples.iter().enumerate().map(|(i, s)| s.trajectory.unwrap_or(i)).collect()
    }

    fn graph_file(&self, g: usize) -> String {
        format!("{GRAPH_DIR}/{}.hg", self.graphs[g].name)
    }

    /// Text of `dataset.csv`: a `# manifest {json}` record, a column header, then
    /// `graph,state_seed,trajectory,step,n,x_1..x_n,dx_1..dx_n` per sample.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# manifest {}", serde_json::to_string(&self.manifest).expect("manifest"));
        out.push_str("graph,state_seed,trajectory,step,n,state...,derivative...\n");
        for s in &self.samples {
            let opt = |v: Option<usize>| v.map(|v| v.to_string()).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                self.graph_file(s.graph),
                s.state_seed,
                opt(s.trajectory),
                opt(s.step),
                s.state.len(),
                text::join_f64(&s.state, ","),
                text::join_f64(&s.derivative, ",")
            );
        }
        out
    }

    /// SHA-256 of [`Dataset::to_csv`].
    pub fn fingerprint(&self) -> String {
        Sha256::digest(self.to_csv().as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Writes `dataset.csv` and one hyperedge-list file per hypergraph under `dir`.
    pub fn write_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        let graph_dir = dir.join(GRAPH_DIR);
        std::fs::create_dir_all(&graph_dir).map_err(|e| Error::io(&graph_dir, e))?;
        for g in 0..self.graphs.len() {
            hypergraph::save_hyperedge_file(&self.graphs[g].hypergraph, dir.join(self.graph_file(g)))?;
        }
        let path = dir.join(DATASET_FILE);
        std::fs::write(&path, self.to_csv()).map_err(|e| Error::io(&path, e))
    }

    pub fn read_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let path = dir.join(DATASET_FILE);
        let src = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let bad = |line: usize, msg: String| Error::Parse { path: path.clone(), line, msg };
        let mut lines = src.lines().enumerate();
        let (_, first) = lines.next().ok_or_else(|| bad(1, "empty dataset file".into()))?;
        let json = first.strip_prefix("# manifest ").ok_or_else(|| bad(1, "missing manifest record".into()))?;
        let manifest: DatasetManifest = serde_json::from_str(json).map_err(|e| bad(1, e.to_string()))?;

        let mut graph_index: BTreeMap<String, usize> = BTreeMap::new();
        let mut graphs = Vec::new();
        let mut samples = Vec::with_capacity(manifest.count);
        for (i, line) in lines {
            let n = i + 1;
            if line.trim().is_empty() || line.starts_with('#') || line.starts_with("graph,") {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() < 5 {
                return Err(bad(n, "too few fields".into()));
            }
            let parse_opt = |s: &str| -> Result<Option<usize>> {
                if s.is_empty() {
                    Ok(None)
                } else {
                    s.parse().map(Some).map_err(|e| bad(n, format!("bad integer `{s}`: {e}")))
                }
            };
            let graph = match graph_index.get(fields[0]) {
                Some(&g) => g,
                None => {
                    let rel = PathBuf::from(fields[0]);
                    let loaded = hypergraph::load_hyperedge_file(dir.join(&rel), LoadOptions::default())?;
                    let name = rel.file_stem().and_then(|s| s.to_str()).unwrap_or("graph").to_string();
                    let seed = match &manifest.source {
                        SourceDescriptor::ErdosRenyi { .. } => name
                            .strip_prefix("er-")
                            .and_then(|idx| idx.parse::<u64>().ok())
                            .map(|idx| seed::derive(manifest.seed, stream::HYPERGRAPH, idx)),
                        SourceDescriptor::Fixed { .. } => None,
                    };
                    graphs.push(GraphEntry { name, seed, hypergraph: loaded.hypergraph });
                    graph_index.insert(fields[0].to_string(), graphs.len() - 1);
                    graphs.len() - 1
                }
            };
            let state_seed: u64 = fields[1].parse().map_err(|e| bad(n, format!("bad seed: {e}")))?;
            let trajectory = parse_opt(fields[2])?;
            let step = parse_opt(fields[3])?;
            let n_nodes: usize = fields[4].parse().map_err(|e| bad(n, format!("bad node count: {e}")))?;
            if fields.len() != 5 + 2 * n_nodes {
                return Err(bad(n, format!("expected {} values, got {}", 2 * n_nodes, fields.len() - 5)));
            }
            let values = text::parse_f64s(fields[5..].iter().copied()).map_err(|m| bad(n, m))?;
            let (state, derivative) = values.split_at(n_nodes);
            if graphs[graph].hypergraph.n_nodes() != n_nodes {
                return Err(bad(n, "state length does not match its hypergraph".into()));
            }
            samples.push(Sample {
                graph,
                state: state.to_vec(),
                derivative: derivative.to_vec(),
                state_seed,
                trajectory,
                step,
            });
        }
        if samples.len() != manifest.count {
            return Err(bad(0, format!("manifest count {} but {} samples", manifest.count, samples.len())));
        }
        Ok(Self { manifest, graphs, samples })
    }
}
