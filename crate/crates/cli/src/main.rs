//! `hmpnn`: generate synthetic transaction graphs, build entity features,
//! tune, train and evaluate the models, and render the results table.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "hmpnn", version, about = "Heterogeneous message passing on transaction graphs")]
struct Cli {
    /// JSON run configuration; flags override its fields.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Seed for every stochastic step (generation, walks, splits, folds, init).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Worker threads for independent runs (grid points, folds).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Only print warnings and errors.
    #[arg(long, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Inputs {
    /// Graph container directory.
    #[arg(long, value_name = "DIR")]
    graph: Option<PathBuf>,

    /// Entity feature table, needed by logreg and mlp.
    #[arg(long, value_name = "FILE")]
    features: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ModelArgs {
    /// logreg, mlp, hgraphsage, hgraphsage-extra, hmpnn-sum or hmpnn-ct.
    #[arg(long)]
    model: Option<String>,

    /// Message-passing layers (graph models) or hidden layers (mlp).
    #[arg(long)]
    layers: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic graph container.
    Generate,
    /// Build the 94-column entity feature table for individuals.
    Features {
        #[command(flatten)]
        inputs: Inputs,
    },
    /// Cross-validated grid search on the training split.
    Tune {
        #[command(flatten)]
        inputs: Inputs,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Train on the training split and write a checkpoint.
    Train {
        #[command(flatten)]
        inputs: Inputs,
        #[command(flatten)]
        model: ModelArgs,
        /// `best_hypers.json` from `tune`; without it the first grid point
        /// and the grid's max_iter are used.
        #[arg(long, value_name = "FILE")]
        hypers: Option<PathBuf>,
    },
    /// Score checkpoints on the test split and write metrics.csv.
    Evaluate {
        #[command(flatten)]
        inputs: Inputs,
        /// Checkpoint files; one metrics row each.
        #[arg(long = "checkpoint", value_name = "FILE", required = true)]
        checkpoints: Vec<PathBuf>,
    },
    /// Render the results table from metrics.csv files.
    Report {
        /// metrics.csv files to combine.
        #[arg(value_name = "FILE", required = true)]
        metrics: Vec<PathBuf>,
    },
    /// Finite-difference gradient check on a small synthetic graph.
    Gradcheck {
        #[command(flatten)]
        model: ModelArgs,
        /// Difference step.
        #[arg(long, default_value_t = 1e-6)]
        step: f64,
        /// Largest accepted relative error.
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
    },
}

#[derive(Debug)]
pub enum CliError {
    /// Bad configuration or inputs; exit code 2.
    Config(String),
    /// Divergence or a failed gradient check; exit code 3.
    Numeric(String),
    Other(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Other(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) | CliError::Numeric(m) | CliError::Other(m) => f.write_str(m),
        }
    }
}

impl From<hmpnn::Error> for CliError {
    fn from(e: hmpnn::Error) -> Self {
        use hmpnn::Error as E;
        let msg = e.to_string();
        match e {
            E::Diverged { .. } | E::NonFinite(_) => CliError::Numeric(msg),
            E::Shape { .. } => CliError::Other(msg),
            _ => CliError::Config(msg),
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    if cli.out.is_some() {
        cfg.out = cli.out;
    }
    if cli.jobs.is_some() {
        cfg.jobs = cli.jobs;
    }
    if let Some(jobs) = cfg.jobs {
        if jobs == 0 {
            return Err(CliError::Config("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::Other(e.to_string()))?;
    }
    let apply_inputs = |cfg: &mut RunConfig, inputs: Inputs| {
        if inputs.graph.is_some() {
            cfg.graph = inputs.graph;
        }
        if inputs.features.is_some() {
            cfg.features = inputs.features;
        }
    };
    let apply_model = |cfg: &mut RunConfig, m: ModelArgs| {
        if m.model.is_some() {
            cfg.model.kind = m.model;
        }
        if m.layers.is_some() {
            cfg.model.layers = m.layers;
        }
    };
    match cli.command {
        Command::Generate => commands::generate(&cfg),
        Command::Features { inputs } => {
            apply_inputs(&mut cfg, inputs);
            commands::features(&cfg)
        }
        Command::Tune { inputs, model } => {
            apply_inputs(&mut cfg, inputs);
            apply_model(&mut cfg, model);
            commands::tune(&cfg)
        }
        Command::Train { inputs, model, hypers } => {
            apply_inputs(&mut cfg, inputs);
            apply_model(&mut cfg, model);
            commands::train(&cfg, hypers.as_deref())
        }
        Command::Evaluate { inputs, checkpoints } => {
            apply_inputs(&mut cfg, inputs);
            commands::evaluate(&cfg, &checkpoints)
        }
        Command::Report { metrics } => commands::report(&cfg, &metrics),
        Command::Gradcheck { model, step, tolerance } => {
            apply_model(&mut cfg, model);
            commands::gradcheck(&cfg, step, tolerance)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet { "warn" } else { "info" };
    env_logger::Builder::new()
        .parse_filters(level)
        .format_timestamp(None)
        .format_target(false)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
