//! `nnpm` command-line pipeline: synthetic corpus generation, feature
//! extraction, source pretraining, adaptation, evaluation and sweeps.
//!
//! [`run`] is the whole program; `main` only forwards its exit code.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod values;

pub use values::parse_values;

pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "nnpm",
    version,
    about = "Unsupervised cross-lingual speech emotion recognition",
    arg_required_else_help = true
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a labeled two-domain synthetic corpus and its train/test manifests.
    GenSynthetic(GenArgs),
    /// Convert every WAV in a manifest into a log-mel feature file.
    Extract(ExtractArgs),
    /// Train encoder and classifier on the labeled source corpus.
    Pretrain(PretrainArgs),
    /// Adapt a pretrained checkpoint to an unlabeled target corpus.
    Adapt(AdaptArgs),
    /// Report UA/WA of a checkpoint on a labeled manifest.
    Evaluate(EvaluateArgs),
    /// Repeat adaptation over a grid of one hyperparameter.
    Sweep(SweepArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModelPreset {
    /// Full-size architecture.
    Default,
    /// Reduced architecture for single-core runs.
    Desk,
}

#[derive(Debug, Args)]
pub struct FeatureArgs {
    /// Mel filterbank size.
    #[arg(long, default_value_t = 40)]
    pub mel_bins: usize,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    #[arg(long, value_enum, default_value_t = ModelPreset::Default)]
    pub model_preset: ModelPreset,
    /// JSON model configuration; overrides --model-preset.
    #[arg(long)]
    pub model_config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OptimArgs {
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    #[arg(long, default_value_t = 32)]
    pub batch: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub lr: f64,
    #[arg(long, default_value_t = 5e-5)]
    pub weight_decay: f64,
    #[arg(long, default_value_t = 0.5)]
    pub dropout: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct AdaptFlags {
    #[arg(long, default_value = "nnpm")]
    pub variant: String,
    /// Similarity threshold for pseudo multilabels.
    #[arg(long, default_value_t = 0.9)]
    pub gamma: f64,
    /// Final memory updating rate of the linear schedule.
    #[arg(long, default_value_t = 0.4)]
    pub beta_max: f64,
    /// Hard negative ratio.
    #[arg(long, default_value_t = 0.01)]
    pub lambda: f64,
    /// Number of leading conv layers kept frozen.
    #[arg(long, default_value_t = 2)]
    pub freeze: usize,
    /// Keep memory slots fixed after initialization.
    #[arg(long)]
    pub static_memory: bool,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Utterances per class and domain.
    #[arg(long)]
    pub per_class: Option<usize>,
    /// JSON generator specification; --seed and --per-class still apply.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long, default_value_t = 0.67)]
    pub train_fraction: f64,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub features: FeatureArgs,
}

#[derive(Debug, Args)]
pub struct PretrainArgs {
    #[arg(long)]
    pub manifest_source: PathBuf,
    /// Labeled validation manifest; enables best-UA checkpointing.
    #[arg(long)]
    pub manifest_eval: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub optim: OptimArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub features: FeatureArgs,
}

#[derive(Debug, Args)]
pub struct AdaptArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub manifest_source: PathBuf,
    /// Target manifest; any labels in it are ignored.
    #[arg(long)]
    pub manifest_target: PathBuf,
    /// Labeled validation manifest; enables per-epoch evaluation.
    #[arg(long)]
    pub manifest_eval: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub adapt: AdaptFlags,
    #[command(flatten)]
    pub optim: OptimArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub features: FeatureArgs,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub manifest_eval: PathBuf,
    /// Directory for report.json.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub features: FeatureArgs,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub manifest_source: PathBuf,
    #[arg(long)]
    pub manifest_target: PathBuf,
    #[arg(long)]
    pub manifest_eval: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// gamma or freeze.
    #[arg(long)]
    pub param: String,
    /// `start:stop:step` (stop included when on the grid) or a comma list.
    #[arg(long, allow_hyphen_values = true)]
    pub values: String,
    #[command(flatten)]
    pub adapt: AdaptFlags,
    #[command(flatten)]
    pub optim: OptimArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub features: FeatureArgs,
}

fn init_logging() {
    let level = std::env::var("NNPM_LOG_LEVEL").unwrap_or_else(|_| "info".into());
    let _ = env_logger::Builder::new()
        .parse_filters(&level)
        .format_timestamp(None)
        .try_init();
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.exit_code() == 0 { 0 } else { EXIT_USAGE };
        }
    };
    init_logging();
    match commands::dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_RUNTIME
        }
    }
}
