//! `vesseltk`: mask refinement, artery labeling, evaluation and phantom generation.
//!
//! Exit status is 0 on success, 1 on a domain error and 2 on a usage error.
//! Every error message on stderr starts with the name of the failing stage.

mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::FileConfig;

#[derive(Debug, Parser)]
#[command(
    name = "vesseltk",
    version,
    about = "Vessel mask refinement, artery labeling and evaluation"
)]
struct Cli {
    /// JSON file with default values for any flag; flags given on the command line win.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Grow a trunk mask with a branch proposer, keeping the largest component.
    Refine(RefineArgs),
    /// Label the seven artery branches of a mask.
    Label(LabelArgs),
    /// Score predictions against ground truth (single files or directories).
    Evaluate(EvaluateArgs),
    /// Write synthetic phantoms with ground truth.
    Phantom(PhantomArgs),
}

#[derive(Debug, Args)]
pub struct RefineArgs {
    #[arg(long)]
    pub mask: Option<PathBuf>,
    #[arg(long)]
    pub image: Option<PathBuf>,
    /// Refined mask (.nrrd or .json sidecar).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Growth iterations [default: 2].
    #[arg(long)]
    pub iters: Option<usize>,
    /// `hysteresis:<low>,<high>,<band>` or `oracle:<ground-truth path>` [default: hysteresis:0.3,0.6,2].
    #[arg(long)]
    pub proposer: Option<String>,
    /// 6, 18 or 26 [default: 26].
    #[arg(long)]
    pub connectivity: Option<u8>,
    /// Growth trace JSON [default: next to --out, `<stem>.trace.json`].
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LabelArgs {
    #[arg(long)]
    pub mask: Option<PathBuf>,
    /// Branch label volume (.nrrd or .json sidecar).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Landmark report JSON [default: next to --out, `<stem>.landmarks.json`].
    #[arg(long)]
    pub landmarks: Option<PathBuf>,
    /// Foot/head aorta radius ratio below which iliacs are assumed present [default: 0.6].
    #[arg(long)]
    pub iliac_ratio: Option<f64>,
    /// Fraction of aorta nodes averaged at each end [default: 0.1].
    #[arg(long)]
    pub end_fraction: Option<f64>,
    /// Fraction of the endpoint height range searched for iliac ends [default: 0.25].
    #[arg(long)]
    pub foot_fraction: Option<f64>,
    /// K-Means iteration cap for radius post-processing [default: 100].
    #[arg(long)]
    pub kmeans_max_iterations: Option<usize>,
    /// Branch to post-process, or `none` [default: CA].
    #[arg(long)]
    pub postprocess: Option<String>,
    /// Skip the radius post-processing.
    #[arg(long)]
    pub no_postprocess: bool,
    /// Flag the written volume as a pseudo-label export.
    #[arg(long)]
    pub pseudo: bool,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Prediction file, or directory of case files (.nrrd, or .json sidecars with a .raw payload).
    #[arg(long)]
    pub pred: Option<PathBuf>,
    /// Ground-truth file, or directory with the same file names.
    #[arg(long)]
    pub gt: Option<PathBuf>,
    /// Metrics report JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
    /// Text table (always also printed to stdout).
    #[arg(long)]
    pub table: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PhantomArgs {
    /// Output directory; each case goes to its own subdirectory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write the canonical suite instead of a single case.
    #[arg(long)]
    pub suite: bool,
    /// `whole` or `upper` [default: whole].
    #[arg(long)]
    pub kind: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Intensity noise standard deviation.
    #[arg(long)]
    pub noise: Option<f64>,
    /// Geometry jitter in mm.
    #[arg(long)]
    pub jitter: Option<f64>,
    /// `drop:<branch>`, `split:<k>` or `disk`; repeatable.
    #[arg(long = "defect")]
    pub defects: Vec<String>,
    /// `nrrd` or `json` [default: nrrd].
    #[arg(long)]
    pub format: Option<String>,
}

/// A failed run: exit code, stage name and message.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub stage: String,
    pub message: String,
}

impl Failure {
    pub fn usage(stage: &str, message: impl fmt::Display) -> Self {
        Failure {
            code: 2,
            stage: stage.into(),
            message: message.to_string(),
        }
    }

    pub fn domain(stage: &str, message: impl fmt::Display) -> Self {
        Failure {
            code: 1,
            stage: stage.into(),
            message: message.to_string(),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.stage, self.message)
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let file = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    match cli.command {
        Command::Refine(a) => commands::refine(a, &file),
        Command::Label(a) => commands::label(a, &file),
        Command::Evaluate(a) => commands::evaluate(a, &file),
        Command::Phantom(a) => commands::phantom(a, &file),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("vesseltk: {f}");
            ExitCode::from(f.code)
        }
    }
}
