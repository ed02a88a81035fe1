//! Declarative run configuration. Every field has a default, so an empty file is valid and
//! reproduces the synthetic experiment.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use hydy_core::datasets::{GenerationSpec, HypergraphSource, InitLaw, Scenario};
use hydy_core::dynamics::{Family, UpdateFamily};
use hydy_core::evaluation::CvConfig;
use hydy_core::hypergraph::{self, LoadOptions};
use hydy_core::mlp::Activation;
use hydy_core::model::{Architecture, TrainConfig};

/// A problem with the configuration or the command line; reported with exit status 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

pub fn config_error(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Master seed. Drawn from the OS and recorded in the outputs when absent.
    pub seed: Option<u64>,
    /// Refuse to run without an explicit seed.
    pub deterministic: bool,
    pub workers: Option<usize>,
    pub hypergraph: HypergraphSection,
    pub dynamics: DynamicsSection,
    pub simulate: SimulateSection,
    pub dataset: DatasetSection,
    pub model: ModelSection,
    pub train: TrainConfig,
    pub evaluate: EvaluateSection,
    pub check: CheckSection,
    pub predict: PredictSection,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: None,
            deterministic: false,
            workers: None,
            hypergraph: HypergraphSection::default(),
            dynamics: DynamicsSection::default(),
            simulate: SimulateSection::default(),
            dataset: DatasetSection::default(),
            model: ModelSection::default(),
            train: TrainConfig::default(),
            evaluate: EvaluateSection::default(),
            check: CheckSection::default(),
            predict: PredictSection::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceKind {
    Er,
    File,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HypergraphSection {
    pub source: SourceKind,
    pub n_nodes: usize,
    /// Hyperedge probability per size, keyed by the size written as a string.
    pub probs: BTreeMap<String, f64>,
    /// Number of distinct random hypergraphs; one per sample when absent.
    pub n_graphs: Option<usize>,
    pub path: Option<PathBuf>,
    pub max_arity: usize,
    pub drop_oversized: bool,
}

impl Default for HypergraphSection {
    fn default() -> Self {
        Self {
            source: SourceKind::Er,
            n_nodes: 20,
            probs: hypergraph::default_er_probs().into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
            n_graphs: None,
            path: None,
            max_arity: hypergraph::DEFAULT_MAX_ARITY,
            drop_oversized: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DynamicsSection {
    pub family: String,
    pub p: usize,
    /// Initial-state law; the family default when absent.
    pub init: Option<InitLaw>,
}

impl Default for DynamicsSection {
    fn default() -> Self {
        Self { family: "kuramoto".into(), p: 2, init: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    pub steps: usize,
    pub dt: f64,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self { steps: 200, dt: 0.01 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    pub scenario: Scenario,
    pub count: usize,
    pub n_traj: usize,
    pub steps: usize,
    pub dt: f64,
    /// Existing dataset directory used by `train` instead of generating one.
    pub path: Option<PathBuf>,
}

impl Default for DatasetSection {
    fn default() -> Self {
        Self { scenario: Scenario::Point, count: 500, n_traj: 25, steps: 100, dt: 0.01, path: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub p_model: usize,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    /// Pick λ from `train.lambda_grid` on a held-out fifth of the data before the final fit.
    pub search_lambda: bool,
}

impl Default for ModelSection {
    fn default() -> Self {
        let arch = Architecture::default();
        Self { p_model: 2, hidden: arch.hidden, activation: arch.activation, search_lambda: false }
    }
}

impl ModelSection {
    pub fn architecture(&self) -> Architecture {
        Architecture { hidden: self.hidden.clone(), activation: self.activation }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Case {
    pub family: String,
    pub p: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateSection {
    pub folds: usize,
    pub model_orders: Vec<usize>,
    pub complexity_weight: f64,
    pub holdout_initial_conditions: usize,
    pub rollout_steps: usize,
    pub rollout_dt: f64,
    pub cases: Vec<Case>,
}

impl Default for EvaluateSection {
    fn default() -> Self {
        let cv = CvConfig::default();
        Self {
            folds: cv.folds,
            model_orders: vec![2, 3, 4],
            complexity_weight: 1.0,
            holdout_initial_conditions: cv.holdout_initial_conditions,
            rollout_steps: cv.rollout_steps,
            rollout_dt: cv.rollout_dt,
            cases: Family::ALL
                .into_iter()
                .flat_map(|f| (2..=4).map(move |p| Case { family: f.name().into(), p }))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckSection {
    pub trials: usize,
    pub max_size: usize,
    pub tolerance: f64,
}

impl Default for CheckSection {
    fn default() -> Self {
        Self { trials: 1000, max_size: 5, tolerance: 1e-12 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictSection {
    pub steps: usize,
    pub dt: f64,
}

impl Default for PredictSection {
    fn default() -> Self {
        Self { steps: 200, dt: 0.01 }
    }
}

/// Values from flags or `HYDY_*` variables that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub order: Option<usize>,
    pub lambda: Option<f64>,
}

impl Config {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else { return Ok(Config::default()) };
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_error(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| config_error(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> anyhow::Result<Self> {
        toml::from_str(text).map_err(|e| config_error(e.to_string()))
    }

    /// Applies overrides, fixes the seed and checks every section.
    pub fn resolve(mut self, o: &Overrides) -> anyhow::Result<Self> {
        self.seed = o.seed.or(self.seed);
        self.workers = o.workers.or(self.workers);
        if let Some(p) = o.order {
            self.model.p_model = p;
        }
        if let Some(l) = o.lambda {
            self.train.lambda = l;
        }
        if self.seed.is_none() {
            if self.deterministic {
                return Err(config_error(
                    "deterministic run requested but no seed given; set `seed` in the config, pass --seed or HYDY_SEED",
                ));
            }
            self.seed = Some(rand_seed());
        }
        if self.seed() > i64::MAX as u64 {
            return Err(config_error(format!("seed must be at most {}, got {}", i64::MAX, self.seed())));
        }
        self.train.seed = self.seed();
        self.validate()?;
        Ok(self)
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    fn validate(&self) -> anyhow::Result<()> {
        self.dynamics()?;
        for case in &self.evaluate.cases {
            UpdateFamily::new(case.family.parse()?, case.p)?;
        }
        if self.model.p_model < 2 {
            return Err(config_error(format!("model.p_model must be at least 2, got {}", self.model.p_model)));
        }
        if self.model.hidden.contains(&0) {
            return Err(config_error("model.hidden widths must be at least 1"));
        }
        if self.evaluate.model_orders.is_empty() || self.evaluate.model_orders.iter().any(|&p| p < 2) {
            return Err(config_error("evaluate.model_orders must be non-empty and every order at least 2"));
        }
        if self.evaluate.folds < 2 {
            return Err(config_error("evaluate.folds must be at least 2"));
        }
        if self.workers == Some(0) {
            return Err(config_error("workers must be at least 1"));
        }
        for (name, dt) in [
            ("simulate.dt", self.simulate.dt),
            ("dataset.dt", self.dataset.dt),
            ("predict.dt", self.predict.dt),
            ("evaluate.rollout_dt", self.evaluate.rollout_dt),
        ] {
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(config_error(format!("{name} must be a positive number, got {dt}")));
            }
        }
        if self.hypergraph.source == SourceKind::File && self.hypergraph.path.is_none() {
            return Err(config_error("hypergraph.source = \"file\" needs hypergraph.path"));
        }
        self.probs()?;
        self.train.validate()?;
        Ok(())
    }

    pub fn dynamics(&self) -> anyhow::Result<UpdateFamily> {
        Ok(UpdateFamily::new(self.dynamics.family.parse()?, self.dynamics.p)?)
    }

    fn probs(&self) -> anyhow::Result<BTreeMap<usize, f64>> {
        self.hypergraph
            .probs
            .iter()
            .map(|(k, &v)| {
                let d: usize = k
                    .parse()
                    .map_err(|_| config_error(format!("hypergraph.probs key `{k}` is not a hyperedge size")))?;
                Ok((d, v))
            })
            .collect()
    }

    /// Hypergraph source described by the `[hypergraph]` section.
    pub fn source(&self) -> anyhow::Result<HypergraphSource> {
        match self.hypergraph.source {
            SourceKind::Er => Ok(HypergraphSource::ErdosRenyi {
                n_nodes: self.hypergraph.n_nodes,
                probs: self.probs()?,
                n_graphs: self.hypergraph.n_graphs,
            }),
            SourceKind::File => {
                let path = self.hypergraph.path.as_ref().expect("validated");
                let opts = LoadOptions {
                    max_arity: self.hypergraph.max_arity,
                    drop_oversized: self.hypergraph.drop_oversized,
                };
                let loaded = hypergraph::load_hyperedge_file(path, opts)?;
                let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("hypergraph").to_string();
                Ok(HypergraphSource::Fixed { name, hypergraph: loaded.hypergraph })
            }
        }
    }

    pub fn generation(&self, dynamics: UpdateFamily, seed: u64) -> anyhow::Result<GenerationSpec> {
        Ok(GenerationSpec { source: self.source()?, dynamics, init: self.dynamics.init, seed })
    }

    pub fn cv(&self) -> CvConfig {
        CvConfig {
            folds: self.evaluate.folds,
            seed: self.seed(),
            holdout_initial_conditions: self.evaluate.holdout_initial_conditions,
            rollout_steps: self.evaluate.rollout_steps,
            rollout_dt: self.evaluate.rollout_dt,
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }
}

fn rand_seed() -> u64 {
    use std::hash::{BuildHasher, Hasher};
    let mut h = std::collections::hash_map::RandomState::new().build_hasher();
    h.write_u128(std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_nanos()).unwrap_or(0));
    h.finish() >> 1
}
