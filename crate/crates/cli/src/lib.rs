//! Command-line front end: dataset generation, training, fine-tuning,
//! evaluation, neuron probing, ablation sweeps and report emission.

pub mod commands;
pub mod config;
pub mod plot;
pub mod rules;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use soma_forge::reid_eval::{CameraFilter, Shot};
use soma_forge::synthset::{ImageFormat, Split};
use soma_forge::Error;

use config::{Profile, RunConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_INTERNAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "soma-forge",
    version,
    about = "Synthetic pedestrian re-identification toolkit"
)]
pub struct Cli {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seeds generation, partitioning, initialisation and evaluation rounds.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "SOMA_FORGE_THREADS")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a synthetic dataset, or reduce an existing one.
    Genset(GensetArgs),
    /// Train a network from scratch on the training split.
    Train(TrainArgs),
    /// Replace the head of a checkpoint and train on another dataset.
    Finetune(FinetuneArgs),
    /// Re-identification report for one split.
    Eval(EvalArgs),
    /// Find the embedding neurons that best separate an attribute.
    Probe(ProbeArgs),
    /// Matched-size subject and pose reductions over several seeds.
    Ablation(AblationArgs),
    /// Plots and summaries for the outputs of earlier runs.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct GensetArgs {
    /// Total subjects, split as evenly as possible (females first).
    #[arg(long)]
    pub subjects: Option<usize>,
    #[arg(long)]
    pub female: Option<usize>,
    #[arg(long)]
    pub male: Option<usize>,
    /// Outfits per subject.
    #[arg(long)]
    pub clothing: Option<usize>,
    #[arg(long)]
    pub poses: Option<usize>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub height: Option<usize>,
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    /// Existing dataset to reduce instead of rendering.
    #[arg(long)]
    pub from: Option<PathBuf>,
    #[arg(long)]
    pub reduce_poses: Option<usize>,
    #[arg(long)]
    pub reduce_subjects: Option<usize>,
    /// Train, validation and test fractions, e.g. `0.7,0.15,0.15`.
    #[arg(long, value_delimiter = ',', num_args = 3)]
    pub split: Option<Vec<f64>>,
    /// Put every image of this many random subjects in the test split.
    #[arg(long)]
    pub holdout_subjects: Option<usize>,
}

#[derive(Debug, Args, Default)]
pub struct TrainingFlags {
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub momentum: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub patience: Option<usize>,
    /// Random left-right mirroring of training images.
    #[arg(long)]
    pub mirror: bool,
    #[arg(long, value_enum)]
    pub profile: Option<ProfileArg>,
    #[arg(long)]
    pub input_height: Option<usize>,
    #[arg(long)]
    pub input_width: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset directory.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[command(flatten)]
    pub training: TrainingFlags,
}

#[derive(Debug, Args)]
pub struct FinetuneArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Learning-rate multiplier below the head.
    #[arg(long)]
    pub body_lr_ratio: Option<f64>,
    #[command(flatten)]
    pub training: TrainingFlags,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub protocol: Option<ShotArg>,
    #[arg(long)]
    pub rounds: Option<usize>,
    #[arg(long, value_enum)]
    pub filter: Option<FilterArg>,
    #[arg(long, value_enum)]
    pub split: Option<SplitArg>,
    #[arg(long)]
    pub max_rank: Option<usize>,
    /// Skip the SVG plot.
    #[arg(long)]
    pub no_plot: bool,
}

#[derive(Debug, Args)]
pub struct ProbeArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Rule selecting the characteristic images, e.g. `gender==female`.
    #[arg(long)]
    pub attribute: Option<String>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub permutations: Option<usize>,
    #[arg(long)]
    pub localization: Option<f64>,
    #[arg(long, value_enum)]
    pub split: Option<SplitArg>,
    /// Exploration images in the contact sheet.
    #[arg(long)]
    pub sheet: Option<usize>,
}

#[derive(Debug, Args)]
pub struct AblationArgs {
    /// Base dataset; rendered from the dataset block when absent.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub fractions: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    /// Skip the unreduced baseline.
    #[arg(long)]
    pub no_full: bool,
    #[command(flatten)]
    pub training: TrainingFlags,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Output directory of an earlier run.
    #[arg(long)]
    pub run: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum FormatArg {
    Ppm,
    Png,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ProfileArg {
    Mini,
    Tiny,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ShotArg {
    SingleShot,
    MultiShot,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum FilterArg {
    None,
    CrossCamera,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum SplitArg {
    Train,
    Val,
    Test,
}

impl From<FormatArg> for ImageFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Ppm => ImageFormat::Ppm,
            FormatArg::Png => ImageFormat::Png,
        }
    }
}

impl From<ProfileArg> for Profile {
    fn from(p: ProfileArg) -> Self {
        match p {
            ProfileArg::Mini => Profile::Mini,
            ProfileArg::Tiny => Profile::Tiny,
        }
    }
}

impl From<ShotArg> for Shot {
    fn from(s: ShotArg) -> Self {
        match s {
            ShotArg::SingleShot => Shot::SingleShot,
            ShotArg::MultiShot => Shot::MultiShot,
        }
    }
}

impl From<FilterArg> for CameraFilter {
    fn from(f: FilterArg) -> Self {
        match f {
            FilterArg::None => CameraFilter::None,
            FilterArg::CrossCamera => CameraFilter::CrossCamera,
        }
    }
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Val => Split::Val,
            SplitArg::Test => Split::Test,
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Usage(_) | Error::Config(_) => EXIT_USAGE,
        Error::Data(_) | Error::Format(_) | Error::Io { .. } | Error::Json(_) => EXIT_DATA,
        Error::Shape { .. } | Error::Domain(_) => EXIT_INTERNAL,
    }
}

/// Resolves the configuration and runs the command inside a thread pool of
/// the requested size.
pub fn execute(cli: Cli) -> soma_forge::Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if cli.out.is_some() {
        cfg.out = cli.out.clone();
    }
    if cli.threads.is_some() {
        cfg.threads = cli.threads;
    }
    commands::apply_flags(&mut cfg, &cli.command)?;
    let cfg = cfg.resolve()?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cfg.threads {
        pool = pool.num_threads(n);
    }
    let pool = pool
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| commands::dispatch(&cfg, &cli.command))
}

/// Parses `args` (program name first), runs, and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
