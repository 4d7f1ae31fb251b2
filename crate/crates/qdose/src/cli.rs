//! Command-line surface. Every subcommand takes the run configuration file
//! plus overrides; typed flags win over `--set`, which wins over the file.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::{EvalSplit, RunConfig};
use crate::error::Result;
use crate::pipeline::{files, run_stage, run_stage_with, Features, Stage, StageOptions};

#[derive(Debug, Parser)]
#[command(name = "qdose", version, about = "Offline dosing-policy learning pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long, short = 'c')]
    config: PathBuf,
    /// Override any configuration key, e.g. `--set dqn.learning_rate=1e-3`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Global seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Directory holding every artifact of the run.
    #[arg(long)]
    run_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DqnFlags {
    /// Train on sparse autoencoder codes; trains the autoencoder first if
    /// the run has none.
    #[arg(long)]
    latent: bool,
    /// Continue from the existing checkpoint.
    #[arg(long)]
    resume: bool,
    /// Stop after this many total steps.
    #[arg(long)]
    stop_at: Option<usize>,
    #[arg(long)]
    total_steps: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    target_update_period: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Draw the synthetic cohort.
    Generate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        n_patients: Option<usize>,
    },
    /// Split, impute, cap and normalize.
    Preprocess {
        #[command(flatten)]
        common: Common,
        /// Trajectory file to use instead of the generated cohort.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Fit the 5x5 dose bins on the training split.
    Discretize {
        #[command(flatten)]
        common: Common,
    },
    /// Cluster states and fit the tabular SARSA baseline.
    TrainSarsa {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        n_clusters: Option<usize>,
    },
    /// Train the sparse autoencoder.
    TrainAe {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        hidden_dim: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Train the dueling double DQN.
    TrainDqn {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        dqn: DqnFlags,
    },
    /// Off-policy evaluation and analysis tables.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        split: Option<SplitArg>,
    },
    /// Bundle the evaluation tables, config and checkpoint hashes.
    Report {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Clone, Copy, Debug, clap::ValueEnum)]
enum SplitArg {
    Test,
    Train,
}

fn push<T: ToString>(overrides: &mut Vec<String>, key: &str, value: Option<T>) {
    if let Some(v) = value {
        overrides.push(format!("{key}={}", v.to_string()));
    }
}

fn load(common: &Common, extra: Vec<String>) -> Result<RunConfig> {
    let mut overrides = common.set.clone();
    push(&mut overrides, "seed", common.seed);
    overrides.extend(extra);
    let mut cfg = RunConfig::resolve(Some(&common.config), &overrides)?;
    if let Some(dir) = &common.run_dir {
        cfg.run_dir = dir.clone();
    }
    Ok(cfg)
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Generate { common, n_patients } => {
            let mut extra = Vec::new();
            push(&mut extra, "cohort.n_patients", n_patients);
            run_stage(&load(&common, extra)?, Stage::Generate)?;
        }
        Command::Preprocess { common, input } => {
            let mut cfg = load(&common, Vec::new())?;
            if input.is_some() {
                cfg.input = input;
            }
            run_stage(&cfg, Stage::Preprocess)?;
        }
        Command::Discretize { common } => {
            run_stage(&load(&common, Vec::new())?, Stage::Discretize)?;
        }
        Command::TrainSarsa { common, n_clusters } => {
            let mut extra = Vec::new();
            push(&mut extra, "baseline.n_clusters", n_clusters);
            run_stage(&load(&common, extra)?, Stage::TrainSarsa)?;
        }
        Command::TrainAe {
            common,
            hidden_dim,
            epochs,
        } => {
            let mut extra = Vec::new();
            push(&mut extra, "autoencoder.hidden_dim", hidden_dim);
            push(&mut extra, "autoencoder.epochs", epochs);
            run_stage(&load(&common, extra)?, Stage::TrainAe)?;
        }
        Command::TrainDqn { common, dqn } => {
            let mut extra = Vec::new();
            push(&mut extra, "dqn.total_steps", dqn.total_steps);
            push(&mut extra, "dqn.learning_rate", dqn.learning_rate);
            push(&mut extra, "dqn.batch_size", dqn.batch_size);
            push(&mut extra, "dqn.target_update_period", dqn.target_update_period);
            push(&mut extra, "dqn.lambda", dqn.lambda);
            let cfg = load(&common, extra)?;
            let features = if dqn.latent { Features::Latent } else { Features::Raw };
            if dqn.latent && !cfg.run_dir.join(files::AUTOENCODER).is_file() {
                run_stage(&cfg, Stage::TrainAe)?;
            }
            let opts = StageOptions {
                resume: dqn.resume,
                stop_at: dqn.stop_at,
            };
            run_stage_with(&cfg, Stage::TrainDqn(features), opts)?;
        }
        Command::Evaluate { common, split } => {
            let mut cfg = load(&common, Vec::new())?;
            match split {
                Some(SplitArg::Test) => cfg.evaluation.split = EvalSplit::Test,
                Some(SplitArg::Train) => cfg.evaluation.split = EvalSplit::Train,
                None => {}
            }
            run_stage(&cfg, Stage::Evaluate)?;
        }
        Command::Report { common } => {
            run_stage(&load(&common, Vec::new())?, Stage::Report)?;
        }
    }
    Ok(())
}

/// Parses `argv` (program name first), runs the stage and returns the
/// process exit status. Diagnostics go to stderr.
pub fn run_command<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
