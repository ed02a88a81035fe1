//! `hydy`: generate hypergraphs and datasets, train HyDy-GNN models and estimate effective orders.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::PredictArgs;
use crate::config::{Config, ConfigError, Overrides};

#[derive(Parser, Debug)]
#[command(name = "hydy", version, about = "Effective-order estimation for dynamics on hypergraphs")]
struct Cli {
    /// TOML configuration file; built-in defaults when absent.
    #[arg(long, global = true, env = "HYDY_CONFIG")]
    config: Option<PathBuf>,
    /// Master seed; drawn from the OS when neither this nor the config sets one.
    #[arg(long, global = true, env = "HYDY_SEED")]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, env = "HYDY_OUT", default_value = "out")]
    out: PathBuf,
    /// Worker threads; all cores when absent.
    #[arg(long, global = true, env = "HYDY_WORKERS")]
    workers: Option<usize>,
    /// Model order `p_model`.
    #[arg(long, global = true, env = "HYDY_ORDER")]
    order: Option<usize>,
    /// Regularisation weight λ.
    #[arg(long, global = true, env = "HYDY_LAMBDA")]
    lambda: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample hypergraphs from the configured source.
    GenHypergraph,
    /// Integrate the configured dynamics on one hypergraph.
    Simulate,
    /// Build a labelled dataset.
    MakeDataset,
    /// Fit a HyDy-GNN model.
    Train {
        /// Dataset directory written by `make-dataset`; generated on the fly when absent.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Cross-validate every model order on every configured case.
    Evaluate,
    /// Print the selected order from an evaluation report.
    SelectOrder {
        /// Report written by `evaluate`; `<out>/report.json` when absent.
        report: Option<PathBuf>,
    },
    /// Check the subset-sum decomposition of every family numerically.
    CheckDecomposition,
    /// Roll a trained model forward from an initial state.
    Predict {
        /// Model bundle written by `train`.
        model: PathBuf,
        /// Initial state, one value per node.
        #[arg(long)]
        x0: Option<PathBuf>,
        /// Hyperedge-list file; the first configured hypergraph when absent.
        #[arg(long)]
        graph: Option<PathBuf>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        dt: Option<f64>,
    },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let overrides = Overrides { seed: cli.seed, workers: cli.workers, order: cli.order, lambda: cli.lambda };
    let cfg = Config::load(cli.config.as_deref())?.resolve(&overrides)?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cfg.workers {
        pool = pool.num_threads(n);
    }
    pool.build_global()?;
    let out = cli.out.as_path();
    match cli.command {
        Command::GenHypergraph => commands::gen_hypergraph(&cfg, out),
        Command::Simulate => commands::simulate(&cfg, out),
        Command::MakeDataset => commands::make_dataset(&cfg, out),
        Command::Train { data } => commands::train_model(&cfg, data.as_deref(), out),
        Command::Evaluate => commands::evaluate(&cfg, out),
        Command::SelectOrder { report } => {
            commands::select_order(&report.unwrap_or_else(|| out.join(commands::REPORT_JSON)))
        }
        Command::CheckDecomposition => commands::check_decomposition(&cfg, out),
        Command::Predict { model, x0, graph, steps, dt } => {
            commands::predict(&cfg, &PredictArgs { model, graph, x0, steps, dt }, out)
        }
    }
}

/// Configuration problems exit with 2, everything else with 1.
fn exit_code(err: &anyhow::Error) -> u8 {
    let is_config = err.chain().any(|e| {
        e.is::<ConfigError>()
            || e.is::<toml::de::Error>()
            || matches!(
                e.downcast_ref::<hydy_core::Error>(),
                Some(
                    hydy_core::Error::UnknownFamily(_)
                        | hydy_core::Error::Invalid(_)
                        | hydy_core::Error::InvalidProbability { .. }
                )
            )
    });
    if is_config {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
