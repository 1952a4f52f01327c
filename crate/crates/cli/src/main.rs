//! `pgvarmion`: generate datasets, train operator networks, evaluate them and
//! export weighting functions.
//!
//! Exit codes: 0 success, 2 bad configuration or usage, 3 unreadable or
//! inconsistent data, 4 numerical failure.

// `!(x > 0.0)` guards also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pgvarmion::models::ModelKind;
use pgvarmion::problem::{ProblemTag, Split};

use crate::config::{PathsConfig, Profile, RunConfig, Settings, TrainOverrides};

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Data(anyhow::Error),
    Numeric(anyhow::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Data(e) => write!(f, "data error: {e:#}"),
            CliError::Numeric(e) => write!(f, "numerical failure: {e:#}"),
        }
    }
}

impl From<pgvarmion::Error> for CliError {
    fn from(e: pgvarmion::Error) -> Self {
        use pgvarmion::Error as E;
        if e.is_numeric() {
            return CliError::Numeric(e.into());
        }
        match e {
            E::InvalidArgument(m) => CliError::Config(m),
            other => CliError::Data(other.into()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.into())
    }
}

#[derive(Debug, Parser)]
#[command(name = "pgvarmion", version, about = "Petrov-Galerkin operator networks: data, training, evaluation")]
struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for dataset files.
    #[arg(long, global = true, env = "PGVARMION_DATA_DIR")]
    data_dir: Option<PathBuf>,
    /// Directory for checkpoints, reports and exports.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Run on a single thread.
    #[arg(long, global = true)]
    deterministic: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args, Default)]
struct Common {
    #[arg(long)]
    problem: Option<ProblemTag>,
    #[arg(long, value_enum)]
    profile: Option<Profile>,
    /// Model initialization and training seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Dataset seed (below 2^28).
    #[arg(long)]
    data_seed: Option<u64>,
    #[arg(long)]
    train_count: Option<usize>,
    #[arg(long)]
    test_count: Option<usize>,
    /// Modes per axis of the 2D reference solver.
    #[arg(long)]
    resolution: Option<usize>,
}

#[derive(Debug, Args, Default)]
struct TrainFlags {
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long, conflicts_with = "batch_functions")]
    batch_points: Option<usize>,
    #[arg(long)]
    batch_functions: Option<usize>,
    #[arg(long)]
    nodes_per_function: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    checkpoint_every: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate and store labeled datasets.
    GenData {
        #[command(flatten)]
        common: Common,
        /// Splits to generate (default: all of the problem's splits).
        #[arg(long, value_delimiter = ',')]
        split: Vec<Split>,
        /// Samples per split (default: profile train/test counts).
        #[arg(long)]
        count: Option<usize>,
        /// Also write a CSV copy of each dataset.
        #[arg(long)]
        csv: bool,
    },
    /// Train a model and write its checkpoint and loss history.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: Option<ModelKind>,
        #[command(flatten)]
        train: TrainFlags,
    },
    /// Per-sample and mean test errors of trained models and the projection.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Models to evaluate (default: every model with a checkpoint).
        #[arg(long, value_delimiter = ',')]
        model: Vec<ModelKind>,
        /// Evaluate only the projection onto the trial space.
        #[arg(long, conflicts_with = "model")]
        projection_only: bool,
    },
    /// Sample learned (and true) weighting functions of a trained PG-VarMiON.
    ExportPsi {
        #[command(flatten)]
        common: Common,
        /// Export the untrained network instead of a checkpoint.
        #[arg(long)]
        untrained: bool,
    },
    /// Mean test errors against training-set size.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: Option<ModelKind>,
        #[arg(long, value_delimiter = ',')]
        sizes: Vec<usize>,
        #[command(flatten)]
        train: TrainFlags,
    },
    /// Comparison table, error histograms and (2D) solution slices.
    Report {
        #[command(flatten)]
        common: Common,
        /// Histogram bins.
        #[arg(long, default_value_t = 30)]
        bins: usize,
    },
}

impl Common {
    fn overrides(&self) -> RunConfig {
        RunConfig {
            problem: self.problem,
            profile: self.profile,
            seed: self.seed,
            data_seed: self.data_seed,
            train_count: self.train_count,
            test_count: self.test_count,
            resolution: self.resolution,
            ..Default::default()
        }
    }
}

impl TrainFlags {
    fn overrides(&self) -> TrainOverrides {
        TrainOverrides {
            epochs: self.epochs,
            batch_points: self.batch_points,
            batch_functions: self.batch_functions,
            nodes_per_function: self.nodes_per_function,
            learning_rate: self.learning_rate,
            checkpoint_every: self.checkpoint_every,
            ..Default::default()
        }
    }
}

fn settings(cli: &Cli, common: &Common, extra: RunConfig) -> Result<Settings, CliError> {
    let file = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let flags = RunConfig {
        paths: PathsConfig { data_dir: cli.data_dir.clone(), out_dir: cli.out_dir.clone() },
        ..common.overrides()
    }
    .merge(extra);
    Settings::resolve(file.merge(flags))
}

fn run(cli: Cli) -> Result<(), CliError> {
    let threads = if cli.deterministic { Some(1) } else { cli.threads };
    if let Some(n) = threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }
    match &cli.command {
        Command::GenData { common, split, count, csv } => {
            let s = settings(&cli, common, RunConfig::default())?;
            commands::gen_data(&s, split, *count, *csv)
        }
        Command::Train { common, model, train } => {
            let extra = RunConfig { model: *model, train: train.overrides(), ..Default::default() };
            let s = settings(&cli, common, extra)?;
            commands::train(&s)
        }
        Command::Eval { common, model, projection_only } => {
            let s = settings(&cli, common, RunConfig::default())?;
            commands::eval(&s, model, *projection_only)
        }
        Command::ExportPsi { common, untrained } => {
            let s = settings(&cli, common, RunConfig::default())?;
            commands::export_psi(&s, *untrained)
        }
        Command::Sweep { common, model, sizes, train } => {
            let sizes = (!sizes.is_empty()).then(|| sizes.clone());
            let extra = RunConfig { model: *model, sizes, train: train.overrides(), ..Default::default() };
            let s = settings(&cli, common, extra)?;
            commands::sweep(&s)
        }
        Command::Report { common, bins } => {
            let s = settings(&cli, common, RunConfig::default())?;
            commands::report(&s, *bins)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
