use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "biokge",
    version,
    about = "Knowledge-graph embeddings, rules and transfer for biomedical graphs"
)]
pub struct Cli {
    /// Caps the worker threads used by every stage.
    #[arg(long, global = true)]
    pub workers: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Split {
    Valid,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AggregationArg {
    Maximum,
    NoisyOr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PrecisionArg {
    F32,
    F64,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parses tab-separated triples into a deduplicated store.
    Ingest(IngestArgs),
    /// Node degree statistics per relation.
    Stats(StatsArgs),
    /// Splits a triple store into train/valid/test.
    Split(SplitArgs),
    /// Trains an embedding model on a split directory.
    Train(TrainArgs),
    /// Filtered link-prediction evaluation of a checkpoint.
    Eval(EvalArgs),
    /// Quasi-random hyperparameter search.
    Hpo(HpoArgs),
    /// Learns path rules from the training split.
    RulesLearn(RulesLearnArgs),
    /// Filtered link-prediction evaluation of a rule file.
    RulesEval(RulesEvalArgs),
    /// Writes embedding tables and a checkpoint copy at the chosen precision.
    Export(ExportArgs),
    /// Trains a downstream link-prediction task, optionally warm-started.
    TransferLp(TransferLpArgs),
    /// Trains the pair classifier of a downstream task.
    Classify(ClassifyArgs),
}

/// Config file, preset and `--set` overrides of a training configuration.
#[derive(Debug, Args)]
pub struct TrainConfigArgs {
    /// Config file; its keys override the preset's.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Shipped configuration to start from.
    #[arg(long)]
    pub preset: Option<String>,
    /// `key=value` override, applied after the config file (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Root seed; overrides the config's `seed`.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Triple file, or a directory whose .tsv/.txt files are read in name order.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Relations whose reverse triples are added (comma-separated).
    #[arg(long, value_delimiter = ',')]
    pub symmetric: Vec<String>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Output directory; statistics go to stdout if absent.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Train, valid and test fractions.
    #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = [0.8, 0.1, 0.1])]
    pub ratios: Vec<f64>,
    /// Relations whose reverse triples are added before splitting (comma-separated).
    #[arg(long, value_delimiter = ',')]
    pub symmetric: Vec<String>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Directory with train.tsv, valid.tsv and test.tsv.
    #[arg(long)]
    pub splits: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    #[command(flatten)]
    pub config: TrainConfigArgs,
    /// Resolve and print the configuration without training.
    #[arg(long)]
    pub dry_run: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub splits: PathBuf,
    /// Output directory; the report goes to stdout if absent.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
    #[arg(long, value_enum, default_value = "test")]
    pub split: Split,
}

#[derive(Debug, Args)]
pub struct HpoArgs {
    #[arg(long)]
    pub splits: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Search-space file; the built-in space if absent.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Fixes `key=value` for every trial (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 30)]
    pub trials: usize,
}

#[derive(Debug, Args)]
pub struct RulesLearnArgs {
    #[arg(long)]
    pub splits: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Learner settings file (time_budget_s, max_length, threshold, ...).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct RulesEvalArgs {
    /// Rule file written by rules-learn.
    #[arg(long)]
    pub rules: PathBuf,
    #[arg(long)]
    pub splits: PathBuf,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
    #[arg(long, value_enum, default_value = "maximum")]
    pub aggregation: AggregationArg,
    #[arg(long, value_enum, default_value = "test")]
    pub split: Split,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, value_enum, default_value = "f32")]
    pub precision: PrecisionArg,
}

#[derive(Debug, Args)]
pub struct TransferLpArgs {
    /// Split directory of the downstream task.
    #[arg(long)]
    pub splits: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Pretrained checkpoint whose entity rows seed the model.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[command(flatten)]
    pub config: TrainConfigArgs,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    /// Triples of the task relations; each relation is one class.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Pretrained checkpoint for the frozen and fine-tuned modes.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Classifier settings file (embedding_dim, hidden, epochs, mode, negative_ratio, ...).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[arg(long)]
    pub seed: Option<u64>,
}
