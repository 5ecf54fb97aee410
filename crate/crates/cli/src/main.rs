mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Workspace optimization, training and evaluation for cooperative
/// Delta + 3-RRS peg-in-hole insertion.
#[derive(Debug, Parser)]
#[command(name = "coinsert", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// JSON run configuration; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TaskPreset {
    /// Use the `task` section of the configuration.
    Config,
    /// Six-hole task with the full spawn region.
    Standard,
    /// Two-hole task with short episodes for desk-scale runs.
    Smoke,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Singularity-free workspace map of the configured 3-RRS.
    Atlas {
        #[command(flatten)]
        common: Common,
        /// Grid spacing, degrees.
        #[arg(long, default_value_t = 1.0)]
        step_deg: f64,
        /// Jitter seed for the grid sample points; cell centres when omitted.
        #[arg(long)]
        seed: Option<u64>,
        /// Minimum singular value counted as singularity-free.
        #[arg(long, default_value_t = coinsert::atlas::SIGMA_THRESHOLD)]
        threshold: f64,
        /// Platform height, meters; mid-stroke when omitted.
        #[arg(long)]
        height: Option<f64>,
    },
    /// Maximize the singularity-free area over the dimensionless design.
    Optimize {
        #[command(flatten)]
        common: Common,
        /// Grid spacing, degrees.
        #[arg(long, default_value_t = 1.0)]
        step_deg: f64,
        /// Jitter seed used during the search.
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Fresh jitter seeds for the before/after statistics.
        #[arg(long, default_value_t = 10)]
        stat_seeds: u64,
        /// Minimum singular value counted as singularity-free.
        #[arg(long, default_value_t = coinsert::atlas::SIGMA_THRESHOLD)]
        threshold: f64,
    },
    /// Train an agent and write its checkpoint and episode log.
    Train {
        #[command(flatten)]
        common: Common,
        /// Training seed; `train.seed` when omitted.
        #[arg(long)]
        seed: Option<u64>,
        /// Environment step budget.
        #[arg(long)]
        steps: Option<usize>,
        /// Rainbow components to disable, comma separated, or `all`.
        #[arg(long, value_delimiter = ',')]
        ablate: Vec<String>,
        /// Task preset.
        #[arg(long, value_enum, default_value_t = TaskPreset::Config)]
        task: TaskPreset,
        /// Write a per-step JSON-lines trace.
        #[arg(long)]
        trace: bool,
    },
    /// Evaluate a checkpoint or a baseline policy.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Checkpoint written by `train`.
        #[arg(long, conflicts_with = "policy")]
        checkpoint: Option<PathBuf>,
        /// Baseline policy evaluated instead of a checkpoint.
        #[arg(long, value_enum)]
        policy: Option<Baseline>,
        /// Episodes per seed; `eval.episodes` when omitted.
        #[arg(long)]
        episodes: Option<usize>,
        /// Evaluation seeds, comma separated; `eval.seeds` when omitted.
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
        /// Gaussian noise on the normalized observation.
        #[arg(long)]
        noise: Option<f64>,
        /// Task preset.
        #[arg(long, value_enum, default_value_t = TaskPreset::Config)]
        task: TaskPreset,
        /// Write a per-step JSON-lines trace.
        #[arg(long)]
        trace: bool,
    },
    /// Train and evaluate the component and geometry ablations.
    Ablate {
        #[command(flatten)]
        common: Common,
        /// Geometry JSON for the optimized design (as written by `optimize`).
        #[arg(long)]
        optimized: PathBuf,
        /// Environment step budget per run; `train.total_steps` when omitted.
        #[arg(long)]
        steps: Option<usize>,
        /// Training seeds, comma separated; `eval.seeds` when omitted.
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
        /// Greedy evaluation episodes per trained agent.
        #[arg(long, default_value_t = 20)]
        episodes: usize,
        /// Variant labels to run; the full suite when omitted.
        #[arg(long, value_delimiter = ',')]
        variants: Vec<String>,
        /// Task preset.
        #[arg(long, value_enum, default_value_t = TaskPreset::Smoke)]
        task: TaskPreset,
    },
    /// Plot-ready learning curves from a training run directory.
    ExportCurves {
        /// Directory written by `train`.
        run: PathBuf,
        /// Destination CSV; `<run>/curves.csv` when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Baseline {
    /// Scripted tilt-then-approach baseline.
    Planner,
    /// Uniform choice among valid actions.
    Random,
}

/// A mistake in the invocation rather than a fault in the computation.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn exit_code(e: &anyhow::Error) -> u8 {
    use coinsert::Error as E;
    for cause in e.chain() {
        if cause.is::<UsageError>()
            || cause.is::<std::io::Error>()
            || cause.is::<serde_json::Error>()
        {
            return 1;
        }
        if let Some(core) = cause.downcast_ref::<E>() {
            return match core {
                E::Config(_)
                | E::Parse(_)
                | E::Io(_)
                | E::Checkpoint(_)
                | E::InfeasibleDesign(_) => 1,
                _ => 2,
            };
        }
    }
    2
}

/// The error chain joined with `: `, skipping causes already quoted by
/// their parent.
fn describe(e: &anyhow::Error) -> String {
    let mut out = String::new();
    let mut last = String::new();
    for cause in e.chain() {
        let msg = cause.to_string();
        if last.contains(&msg) {
            continue;
        }
        if !out.is_empty() {
            out.push_str(": ");
        }
        out.push_str(&msg);
        last = msg;
    }
    out
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}
