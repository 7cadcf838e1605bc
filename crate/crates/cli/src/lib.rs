//! `t2vqa`: one entry point for the whole workflow, from prompt curation and
//! rating collection to training and the k-fold evaluation.
//!
//! Exit codes: 0 success, 1 validation error (bad flags, bad inputs), 2 runtime
//! error. Every run writes a `run.json` holding the fully resolved
//! configuration next to its outputs.

mod commands;
mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use config::CliError;

pub const SEED_ENV: &str = "T2VQA_SEED";
pub const DATA_ENV: &str = "T2VQA_DATA";

#[derive(Parser, Debug)]
#[command(name = "t2vqa", version, about = "Text-to-video quality assessment workbench")]
pub struct Cli {
    /// JSON file of configuration overrides; explicit flags win over it.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Seed for every random choice; falls back to $T2VQA_SEED, then 0.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Cluster prompts by cosine similarity and draw a fixed number per group.
    SelectPrompts(SelectPromptsArgs),
    /// Merge a ratings file (CSV or JSON lines) into a new manifest.
    IngestRatings(IngestRatingsArgs),
    /// Per-annotator z-score normalization into MOS records.
    ComputeMos(ComputeMosArgs),
    /// Run the rating-collection HTTP service until interrupted.
    Serve(ServeArgs),
    /// Write a seeded k-fold split plan.
    Split(SplitArgs),
    /// Train the quality model on one fold, every fold, or all rated videos.
    Train(TrainArgs),
    /// Score manifest videos, or one text + frames directory pair.
    Predict(PredictArgs),
    /// Run the k-fold protocol for a model or a table of scores.
    Evaluate(EvaluateArgs),
    /// Per-generator and per-category tables, scatter data and quartic trend.
    Analyze(AnalyzeArgs),
    /// Run the embedded invariant suite.
    Selftest(SelftestArgs),
}

#[derive(Args, Debug)]
pub struct ManifestArg {
    /// Dataset manifest (JSON lines); defaults to $T2VQA_DATA/manifest.jsonl.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SelectPromptsArgs {
    /// Plain-text prompt list, one per line (instead of a manifest).
    #[arg(long, conflicts_with = "manifest")]
    pub prompts: Option<PathBuf>,
    #[command(flatten)]
    pub input: ManifestArg,
    /// Number of groups.
    #[arg(long)]
    pub k: Option<usize>,
    /// Prompts drawn per group.
    #[arg(long)]
    pub m: Option<usize>,
    /// Dimension of the hashed bag-of-words embedding.
    #[arg(long)]
    pub embed_dim: Option<usize>,
    /// Output manifest holding the selected prompts with their group ids.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct IngestRatingsArgs {
    #[command(flatten)]
    pub input: ManifestArg,
    /// Ratings as CSV (`annotator_id,video_id,raw_score,timestamp`) or JSON lines.
    #[arg(long)]
    pub ratings: Option<PathBuf>,
    /// Output manifest.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyArg {
    /// Drop degenerate annotators with a warning.
    Exclude,
    /// Fail on the first degenerate annotator.
    Abort,
}

#[derive(Args, Debug)]
pub struct ComputeMosArgs {
    #[command(flatten)]
    pub input: ManifestArg,
    /// What to do with annotators whose scores cannot be normalized.
    #[arg(long, value_enum)]
    pub policy: Option<PolicyArg>,
    /// MOS records, one JSON object per line.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write a copy of the manifest with its MOS records replaced.
    #[arg(long)]
    pub manifest_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ServeArgs {
    #[command(flatten)]
    pub input: ManifestArg,
    /// Append-only JSON-lines rating store; replayed on start.
    #[arg(long)]
    pub store: Option<PathBuf>,
    /// Listen address.
    #[arg(long)]
    pub addr: Option<String>,
    /// Minutes an issued assignment stays reserved.
    #[arg(long)]
    pub pending_minutes: Option<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SplitByArg {
    Video,
    Prompt,
}

#[derive(Args, Debug)]
pub struct SplitArgs {
    #[command(flatten)]
    pub input: ManifestArg,
    #[arg(long)]
    pub folds: Option<usize>,
    /// Fraction of videos held out per fold.
    #[arg(long)]
    pub test_frac: Option<f64>,
    /// Keep all videos of a prompt on the same side of each split.
    #[arg(long, value_enum)]
    pub split_by: Option<SplitByArg>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum PoolFusedArg {
    None,
    Mean,
}

/// Model hyper-parameters; names follow the model configuration fields.
#[derive(Args, Debug, Default)]
pub struct ModelFlags {
    #[arg(long, help_heading = "Model")]
    pub n_frames: Option<usize>,
    #[arg(long, help_heading = "Model")]
    pub frame_size: Option<usize>,
    #[arg(long, help_heading = "Model")]
    pub frame_patch: Option<usize>,
    /// Tubelet size as t,h,w.
    #[arg(long, value_delimiter = ',', num_args = 3, help_heading = "Model")]
    pub patch_size: Option<Vec<usize>>,
    #[arg(long, help_heading = "Model")]
    pub vision_dim: Option<usize>,
    #[arg(long, help_heading = "Model")]
    pub align_dim: Option<usize>,
    #[arg(long, help_heading = "Model")]
    pub fidelity_dim: Option<usize>,
    #[arg(long, help_heading = "Model")]
    pub fusion_dim: Option<usize>,
    #[arg(long, help_heading = "Model")]
    pub decoder_dim: Option<usize>,
    #[arg(long, help_heading = "Model")]
    pub n_heads: Option<usize>,
    #[arg(long, help_heading = "Model")]
    pub mlp_ratio: Option<usize>,
    /// Attention window as t,h,w.
    #[arg(long, value_delimiter = ',', num_args = 3, help_heading = "Model")]
    pub window_size: Option<Vec<usize>>,
    #[arg(long, help_heading = "Model")]
    pub shifted_windows: Option<bool>,
    #[arg(long, help_heading = "Model")]
    pub n_vision_layers: Option<usize>,
    #[arg(long, help_heading = "Model")]
    pub n_text_layers: Option<usize>,
    #[arg(long, help_heading = "Model")]
    pub n_fidelity_blocks: Option<usize>,
    #[arg(long, help_heading = "Model")]
    pub n_fusion_blocks: Option<usize>,
    #[arg(long, help_heading = "Model")]
    pub n_decoder_layers: Option<usize>,
    #[arg(long, help_heading = "Model")]
    pub cross_attention_parity: Option<usize>,
    #[arg(long, value_enum, help_heading = "Model")]
    pub pool_fused: Option<PoolFusedArg>,
    #[arg(long, help_heading = "Model")]
    pub vocab_size: Option<usize>,
    #[arg(long, help_heading = "Model")]
    pub max_text_len: Option<usize>,
    /// Five token ids for bad, poor, fair, good, excellent.
    #[arg(long, value_delimiter = ',', num_args = 5, help_heading = "Model")]
    pub level_token_ids: Option<Vec<u32>>,
    #[arg(long, help_heading = "Model")]
    pub instruction_text: Option<String>,
}

/// Optimizer and loss settings; names follow the training configuration fields.
#[derive(Args, Debug, Default)]
pub struct TrainFlags {
    #[arg(long, help_heading = "Training")]
    pub learning_rate: Option<f64>,
    #[arg(long, help_heading = "Training")]
    pub epochs: Option<usize>,
    #[arg(long, help_heading = "Training")]
    pub batch_size: Option<usize>,
    /// Weight of the rank term.
    #[arg(long, help_heading = "Training")]
    pub loss_lambda: Option<f64>,
    #[arg(long, help_heading = "Training")]
    pub plcc_eps: Option<f64>,
    #[arg(long, help_heading = "Training")]
    pub max_steps: Option<usize>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub input: ManifestArg,
    /// Split plan; without it every video with MOS is used for training.
    #[arg(long)]
    pub splits: Option<PathBuf>,
    /// Train only this fold (default: every fold, each into `fold_<i>/`).
    #[arg(long, requires = "splits")]
    pub fold: Option<usize>,
    /// Output directory for checkpoints and training logs.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelFlags,
    #[command(flatten)]
    pub train: TrainFlags,
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[command(flatten)]
    pub input: ManifestArg,
    /// Score only these videos (comma separated; default: all).
    #[arg(long, value_delimiter = ',')]
    pub videos: Option<Vec<String>>,
    /// Prompt text for ad-hoc scoring.
    #[arg(long, requires = "frames_dir")]
    pub text: Option<String>,
    /// Directory of frame_NNNN.png files for ad-hoc scoring.
    #[arg(long, requires = "text")]
    pub frames_dir: Option<PathBuf>,
    /// Scores as JSON lines `{video_id, score}`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub input: ManifestArg,
    #[arg(long)]
    pub splits: Option<PathBuf>,
    /// Model checkpoint; a `{fold}` placeholder selects one checkpoint per fold.
    #[arg(long, conflicts_with = "scores")]
    pub checkpoint: Option<String>,
    /// Precomputed scores as JSON lines `{video_id, score}`.
    #[arg(long)]
    pub scores: Option<PathBuf>,
    /// Scorer name recorded in the report (for --scores).
    #[arg(long)]
    pub name: Option<String>,
    /// Evaluation report (JSON).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub input: ManifestArg,
    /// Predictions as JSON lines `{video_id, score}` for the scatter and trend.
    #[arg(long)]
    pub scores: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SelftestArgs {
    /// Run only these checks.
    pub checks: Vec<String>,
    /// Directory for run.json and the results file (default: current directory).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses `argv` (including the program name), runs the command, and returns
/// the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match commands::dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
