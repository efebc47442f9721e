use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "neurovid", version, about = "EEG embedding, probing and frame-conditioning pipeline")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset with planted structure.
    Synth(SynthArgs),
    /// Run the preprocessing chain on a pack and cut 2 s segments.
    Preprocess(PreprocessArgs),
    /// Tag segments as train/val/test.
    Split(SplitArgs),
    /// Train an encoder with triplet loss on one montage region.
    Train(TrainArgs),
    /// Evaluate a trained encoder.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Region and time-window ablations.
    #[command(subcommand)]
    Ablate(AblateCommand),
    /// Export embeddings with their labels as CSV.
    Embed(EmbedArgs),
    /// Build frame-conditioning vectors from exported embeddings.
    Condition(ConditionArgs),
    /// PSNR, SSIM and optical-flow score of a generated clip against ground truth.
    Metrics(MetricsArgs),
    /// Repeat the command recorded in a run manifest.
    Rerun(RerunArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SynthFormat {
    Pack,
    Segments,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = SynthFormat::Pack)]
    pub format: SynthFormat,
    /// Overrides the seed in the synth spec file.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = "seed_v1")]
    pub montage: String,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub notch_hz: Option<f64>,
    #[arg(long)]
    pub highpass_hz: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitModeArg {
    Within,
    LeaveTwo,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub segs: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum)]
    pub mode: SplitModeArg,
    /// Two subject ids, `a,b` (leave-two mode).
    #[arg(long)]
    pub test_subjects: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Train/val/test proportions, `0.8,0.1,0.1` (within mode).
    #[arg(long)]
    pub ratios: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LabelArg {
    Video,
    Emotion,
    Subject,
}

/// Flags shared by every command that trains.
#[derive(Debug, Args)]
pub struct TrainingFlags {
    /// JSON with optional `encoder` and `train` sections.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = "seed_v1")]
    pub montage: String,
    #[arg(long, value_enum)]
    pub labels: Option<LabelArg>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub margin: Option<f64>,
    /// Seed of batch sampling.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Seed of parameter initialization.
    #[arg(long)]
    pub init_seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub segs: PathBuf,
    #[arg(long, default_value = "all")]
    pub region: String,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub training: TrainingFlags,
}

#[derive(Debug, Subcommand)]
pub enum EvalCommand {
    /// k-means clustering accuracy of one split.
    Kmeans(EvalKmeansArgs),
}

/// Flags naming a trained model and the segments it reads.
#[derive(Debug, Args)]
pub struct ModelInput {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub segs: PathBuf,
    /// Region the model was trained on.
    #[arg(long, default_value = "all")]
    pub region: String,
    #[arg(long, default_value = "seed_v1")]
    pub montage: String,
}

#[derive(Debug, Args)]
pub struct EvalKmeansArgs {
    #[command(flatten)]
    pub input: ModelInput,
    #[arg(long, default_value = "test")]
    pub split: String,
    #[arg(long, value_enum, default_value_t = LabelArg::Video)]
    pub labels: LabelArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum AblateCommand {
    /// Train and score one encoder per region.
    Regions(AblateRegionsArgs),
    /// Score a fixed encoder with time windows zeroed.
    Timesteps(AblateTimestepsArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RegimeArg {
    #[value(alias = "all_subject")]
    AllSubject,
    #[value(alias = "leave_two")]
    LeaveTwo,
}

#[derive(Debug, Args)]
pub struct AblateRegionsArgs {
    #[arg(long)]
    pub segs: PathBuf,
    /// Comma-separated region keys.
    #[arg(long)]
    pub regions: String,
    #[arg(long, value_enum, default_value_t = RegimeArg::AllSubject)]
    pub regime: RegimeArg,
    #[arg(long, default_value_t = 0)]
    pub kmeans_seed: u64,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Report CSV; a JSON copy is written next to it.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub training: TrainingFlags,
}

#[derive(Debug, Args)]
pub struct AblateTimestepsArgs {
    #[command(flatten)]
    pub input: ModelInput,
    /// Comma-separated `t1:t2` windows.
    #[arg(long)]
    pub windows: String,
    #[arg(long, value_enum, default_value_t = RegimeArg::AllSubject)]
    pub regime: RegimeArg,
    #[arg(long, value_enum, default_value_t = LabelArg::Video)]
    pub labels: LabelArg,
    #[arg(long, default_value_t = 0)]
    pub kmeans_seed: u64,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    #[command(flatten)]
    pub input: ModelInput,
    /// Only this split; all segments when absent.
    #[arg(long)]
    pub split: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ConditionArgs {
    #[arg(long)]
    pub emb: PathBuf,
    #[arg(long, default_value_t = 8)]
    pub frames: usize,
    #[arg(long, default_value_t = 10)]
    pub enc_dim: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long)]
    pub gen: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RerunArgs {
    #[arg(long)]
    pub manifest: PathBuf,
}
