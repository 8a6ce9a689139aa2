//! Command-line pipeline: dataset generation, training, evaluation, latent
//! traversals, and report rendering.
//!
//! Exit codes: 0 on success, 1 on runtime failure, 2 on usage errors
//! (including missing input files).

mod evaluate;
mod gen_data;
mod report;
mod train;
mod traverse;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn require_file(path: &std::path::Path, what: &str) -> Result<(), anyhow::Error> {
    if !path.exists() {
        return Err(UsageError(format!("{what} not found: {}", path.display())).into());
    }
    Ok(())
}

/// Worker-count cap from `DOTFACTOR_THREADS`, defaulting to the machine's
/// parallelism.
pub fn worker_cap() -> usize {
    std::env::var("DOTFACTOR_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum DatasetKind {
    #[value(name = "dsprites-mini")]
    DspritesMini,
    #[value(name = "shapes3d-mini")]
    Shapes3dMini,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum VariantArg {
    Swap,
    Prior,
}

impl From<VariantArg> for dotfactor::InterventionVariant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Swap => dotfactor::InterventionVariant::BatchSwap,
            VariantArg::Prior => dotfactor::InterventionVariant::PriorSample,
        }
    }
}

#[derive(Parser)]
#[command(name = "dotfactor", about = "Split-latent VAE disentanglement pipeline", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic factored dataset directory.
    GenData {
        #[arg(long, value_enum)]
        kind: DatasetKind,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 32)]
        resolution: usize,
        /// Comma-separated factor cardinalities; defaults per kind.
        #[arg(long)]
        cards: Option<String>,
        /// Orientation levels for dsprites-mini (0 disables the factor).
        #[arg(long, default_value_t = 0)]
        orientation: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Overwrite an existing non-empty output directory.
        #[arg(long)]
        force: bool,
    },
    /// Train a model on a dataset directory.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// JSON file with the full train config.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        lambda: Option<f32>,
        #[arg(long)]
        gamma: Option<f32>,
        #[arg(long, value_enum)]
        variant: Option<VariantArg>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Score a checkpoint on a dataset and write a metric report.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated evaluation seeds.
        #[arg(long, default_value = "0,1,2")]
        seeds: String,
        #[arg(long, default_value_t = 800)]
        votes: usize,
        /// Samples (or pairs) per vote.
        #[arg(long, default_value_t = 64)]
        batch: usize,
    },
    /// Render latent traversal grids as PGM images.
    Traverse {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated dataset indices used as seed images.
        #[arg(long, default_value = "0")]
        images: String,
        /// Comma-separated structured dims, or "all".
        #[arg(long, default_value = "all")]
        dims: String,
        #[arg(long, default_value_t = 7)]
        points: usize,
        #[arg(long, default_value_t = 2.5)]
        range: f32,
    },
    /// Render one or more metric report JSON files as a text table.
    Report {
        /// Report files produced by `eval`.
        #[arg(required = true)]
        reports: Vec<PathBuf>,
    },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::GenData { kind, out, resolution, cards, orientation, seed, force } => {
            gen_data::run(kind, &out, resolution, cards.as_deref(), orientation, seed, force)
        }
        Command::Train { data, out, config, seed, lambda, gamma, variant, epochs } => {
            train::run(&data, &out, config.as_deref(), seed, lambda, gamma, variant, epochs)
        }
        Command::Eval { checkpoint, data, out, seeds, votes, batch } => {
            evaluate::run(&checkpoint, &data, &out, &seeds, votes, batch)
        }
        Command::Traverse { checkpoint, data, out, images, dims, points, range } => {
            traverse::run(&checkpoint, &data, &out, &images, &dims, points, range)
        }
        Command::Report { reports } => report::run(&reports),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            if err.is::<UsageError>() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
