use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(
    name = "maskgen",
    version,
    about = "Synthesize multi-class brain segmentation masks"
)]
pub struct Cli {
    /// Run configuration (JSON with data/vae/diffusion/eval sections and a seed).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configuration seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, short, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic phantom corpus with its manifest.
    Phantom(PhantomArgs),
    /// Scan a corpus directory and write its manifest.
    Manifest(ManifestArgs),
    #[command(subcommand)]
    Train(TrainCommand),
    /// Sample masks for a lesion prompt.
    Sample(SampleArgs),
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Package a directory of sampled masks for release.
    Export(ExportArgs),
}

#[derive(Args, Debug)]
pub struct PhantomArgs {
    #[arg(long)]
    pub patients: Option<usize>,
    /// Slices per volume.
    #[arg(long)]
    pub slices: Option<usize>,
    #[arg(long = "lesion-prob")]
    pub lesion_prob: Option<f64>,
    #[arg(long)]
    pub size: Option<usize>,
}

#[derive(Args, Debug)]
pub struct ManifestArgs {
    /// Directory laid out as `<patient>/<slice>.{iism,png}`.
    #[arg(long)]
    pub root: PathBuf,
    /// Train, validation and test ratios; rescaled to sum to one.
    #[arg(long, value_delimiter = ',', num_args = 3)]
    pub split: Option<Vec<f64>>,
    /// Cranial-height band, e.g. `0.2,0.95`.
    #[arg(long, value_delimiter = ',', num_args = 2)]
    pub select: Option<Vec<f64>>,
    /// Resample every slice to this size, e.g. `64x64`.
    #[arg(long)]
    pub size: Option<String>,
}

#[derive(Subcommand, Debug)]
pub enum TrainCommand {
    /// Stage I: the mask autoencoder.
    Vae(TrainVaeArgs),
    /// Stage II: latent diffusion on the frozen autoencoder.
    Diff(TrainDiffArgs),
}

#[derive(Args, Debug)]
pub struct TrainVaeArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub epochs: Option<usize>,
}

#[derive(Args, Debug)]
pub struct TrainDiffArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Stage I checkpoint directory.
    #[arg(long)]
    pub vae: PathBuf,
    #[arg(long)]
    pub epochs: Option<usize>,
}

#[derive(Args, Debug)]
pub struct SampleArgs {
    #[arg(long)]
    pub vae: PathBuf,
    #[arg(long)]
    pub diff: PathBuf,
    /// Lesion prompt, 0 or 1.
    #[arg(long, allow_negative_numbers = true)]
    pub y: i64,
    #[arg(long)]
    pub n: usize,
    /// Also write a PNG render per mask.
    #[arg(long)]
    pub png: bool,
    /// Write a real-vs-synthetic comparison figure (needs `--real`).
    #[arg(long)]
    pub grid: bool,
    #[arg(long)]
    pub real: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum EvalCommand {
    /// Class-distribution report per lesion cohort.
    Classdist(ClassdistArgs),
    /// FID across diffusion checkpoints.
    Fid(FidArgs),
}

#[derive(Args, Debug)]
pub struct ClassdistArgs {
    #[arg(long)]
    pub real: PathBuf,
    /// Directory with a manifest or loose `.iism` files.
    #[arg(long)]
    pub synth: PathBuf,
    /// Restrict the real corpus to one split.
    #[arg(long)]
    pub split: Option<String>,
}

#[derive(Args, Debug)]
pub struct FidArgs {
    #[arg(long)]
    pub real: PathBuf,
    #[arg(long)]
    pub vae: PathBuf,
    /// Checkpoint directories, or one directory holding `epoch<N>` checkpoints.
    #[arg(long, value_delimiter = ',', required = true)]
    pub ckpts: Vec<PathBuf>,
    #[arg(long)]
    pub n: Option<usize>,
    /// Real reference split.
    #[arg(long, default_value = "val")]
    pub split: String,
}

#[derive(Args, Debug)]
pub struct ExportArgs {
    /// Directory of sampled `.iism` masks.
    #[arg(long)]
    pub from: PathBuf,
}
