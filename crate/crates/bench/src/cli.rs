use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use seqrec_core::data::{InputFormat, NegativeMode, PreprocessConfig};
use seqrec_core::losses::{LossKind, LossSpec};
use seqrec_core::models::{Architecture, ModelConfig};
use seqrec_core::training::{AdamConfig, TrainConfig};

#[derive(Debug, Parser)]
#[command(name = "seqrec", version, about = "Sequential recommendation loss benchmark")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Filter, order and re-emit an interaction log; print its statistics.
    Preprocess(PreprocessArgs),
    /// Write a synthetic sequence-lines log.
    Synth(SynthArgs),
    /// Train one model with one loss and evaluate it.
    Train(TrainArgs),
    /// Evaluate a saved checkpoint.
    Eval(EvalArgs),
    /// Train every model × loss × negatives × seed cell and summarise.
    Bench(BenchArgs),
    /// Per-position HIT@10 curves of ce-last / bce / ce-all checkpoints.
    PerTimestamp(PerTimestampArgs),
    /// Rebuild summary tables from finished runs.
    Report(ReportArgs),
}

fn parse_format(s: &str) -> Result<InputFormat, String> {
    s.parse().map_err(|e: seqrec_core::Error| e.to_string())
}

fn parse_model(s: &str) -> Result<Architecture, String> {
    s.parse().map_err(|e: seqrec_core::Error| e.to_string())
}

fn parse_loss(s: &str) -> Result<LossKind, String> {
    s.parse().map_err(|e: seqrec_core::Error| e.to_string())
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Interaction log.
    #[arg(long)]
    pub dataset: PathBuf,
    /// `csv` (user,item,timestamp rows) or `seq` (user item1 item2 ... lines).
    #[arg(long, default_value = "seq", value_parser = parse_format)]
    pub format: InputFormat,
    /// Minimum interactions per user and per item.
    #[arg(long, default_value_t = 5)]
    pub kcore: usize,
    /// Drop repeated (user, item) interactions.
    #[arg(long)]
    pub dedup: bool,
}

impl DataArgs {
    pub fn preprocess_config(&self) -> PreprocessConfig {
        PreprocessConfig {
            k_core: self.kcore,
            dedup: self.dedup,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    #[arg(long = "max-len", default_value_t = 50)]
    pub max_len: usize,
    #[arg(long, default_value_t = 64)]
    pub dim: usize,
    #[arg(long, default_value_t = 2)]
    pub layers: usize,
    #[arg(long, default_value_t = 2)]
    pub heads: usize,
    #[arg(long, default_value_t = 0.2)]
    pub dropout: f64,
}

impl ModelArgs {
    pub fn config(&self, architecture: Architecture) -> ModelConfig {
        ModelConfig {
            architecture,
            dim: self.dim,
            layers: self.layers,
            heads: self.heads,
            max_len: self.max_len,
            dropout: self.dropout,
            ..ModelConfig::new(architecture)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NegativeModeArg {
    TargetOnly,
    UserHistory,
}

#[derive(Debug, Clone, Args)]
pub struct OptimArgs {
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    #[arg(long = "batch-size", default_value_t = 256)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long = "weight-decay", default_value_t = 0.0)]
    pub weight_decay: f64,
    /// Epochs without validation NDCG@10 improvement before stopping.
    #[arg(long, default_value_t = 10)]
    pub patience: usize,
    /// Global gradient-norm clip; 0 disables clipping.
    #[arg(long, default_value_t = 5.0)]
    pub clip: f64,
    /// Items a sampled negative must avoid.
    #[arg(long = "negative-mode", value_enum, default_value_t = NegativeModeArg::TargetOnly)]
    pub negative_mode: NegativeModeArg,
}

impl OptimArgs {
    pub fn config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            adam: AdamConfig {
                lr: self.lr,
                weight_decay: self.weight_decay,
                ..AdamConfig::default()
            },
            patience: self.patience,
            clip_norm: (self.clip > 0.0).then_some(self.clip),
            negative_mode: match self.negative_mode {
                NegativeModeArg::TargetOnly => NegativeMode::TargetOnly,
                NegativeModeArg::UserHistory => NegativeMode::UserHistory,
            },
            seed,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct EvalOptions {
    /// Cut-offs for HIT@k / NDCG@k.
    #[arg(long, value_delimiter = ',', default_values_t = [1usize, 5, 10, 20])]
    pub ks: Vec<usize>,
    /// Negatives per user for the sampled test metric.
    #[arg(long = "sampled-negatives", default_value_t = 100)]
    pub sampled_negatives: usize,
}

impl EvalOptions {
    pub fn ks(&self) -> Vec<usize> {
        let mut ks = self.ks.clone();
        if !ks.contains(&10) {
            ks.push(10);
        }
        ks.sort_unstable();
        ks.dedup();
        ks.retain(|&k| k > 0);
        ks
    }
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Output directory for `sequences.txt`, `vocab.tsv` and `stats.txt`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SynthKind {
    /// Every item has exactly one successor.
    Planted,
    /// Sparse first-order Markov chain with popularity noise.
    Markov,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_enum, default_value_t = SynthKind::Markov)]
    pub kind: SynthKind,
    #[arg(long, default_value_t = 2000)]
    pub users: usize,
    #[arg(long, default_value_t = 400)]
    pub items: usize,
    #[arg(long = "min-len", default_value_t = 5)]
    pub min_len: usize,
    #[arg(long = "max-len", default_value_t = 30)]
    pub max_len: usize,
    /// Planted successors per item (Markov only).
    #[arg(long, default_value_t = 8)]
    pub successors: usize,
    /// Probability of a popularity-drawn next item (Markov only).
    #[arg(long, default_value_t = 0.2)]
    pub noise: f64,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Output file.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value = "sasrec", value_parser = parse_model)]
    pub model: Architecture,
    #[arg(long, default_value = "ce-all", value_parser = parse_loss)]
    pub loss: LossKind,
    /// Negatives per evaluated position (sampled losses only).
    #[arg(long)]
    pub negatives: Option<usize>,
    /// Mask probability (mlm only).
    #[arg(long = "mask-prob")]
    pub mask_prob: Option<f64>,
    #[command(flatten)]
    pub model_args: ModelArgs,
    #[command(flatten)]
    pub optim: OptimArgs,
    #[command(flatten)]
    pub eval: EvalOptions,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub eval: EvalOptions,
    /// Seed of the sampled-metric negatives.
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Comma-separated models.
    #[arg(long, value_delimiter = ',', default_value = "sasrec", value_parser = parse_model)]
    pub model: Vec<Architecture>,
    /// Comma-separated losses.
    #[arg(long, value_delimiter = ',', required = true, value_parser = parse_loss)]
    pub loss: Vec<LossKind>,
    /// Comma-separated negative counts, crossed with every sampled loss.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    pub negatives: Vec<usize>,
    #[arg(long = "mask-prob")]
    pub mask_prob: Option<f64>,
    #[command(flatten)]
    pub model_args: ModelArgs,
    #[command(flatten)]
    pub optim: OptimArgs,
    #[command(flatten)]
    pub eval: EvalOptions,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',', default_value = "42")]
    pub seed: Vec<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PerTimestampArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Directory holding one sub-directory per trained cell.
    #[arg(long)]
    pub runs: PathBuf,
    #[arg(long, default_value = "sasrec", value_parser = parse_model)]
    pub model: Architecture,
    #[arg(long, value_delimiter = ',', default_value = "ce-last,bce,ce-all", value_parser = parse_loss)]
    pub loss: Vec<LossKind>,
    /// Negatives of the sampled checkpoints to look up.
    #[arg(long, default_value_t = 1)]
    pub negatives: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Directory holding one sub-directory per trained cell.
    #[arg(long)]
    pub runs: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

/// Loss specification from CLI pieces.
pub fn loss_spec(kind: LossKind, negatives: Option<usize>, mask_prob: Option<f64>) -> seqrec_core::Result<LossSpec> {
    let mut spec = LossSpec::new(kind);
    if kind.is_sampled() {
        spec = LossSpec::with_negatives(kind, negatives.unwrap_or(1))?;
    } else if negatives.is_some() {
        log::warn!("--negatives ignored for {kind}");
    }
    if kind == LossKind::Mlm {
        if let Some(p) = mask_prob {
            spec = LossSpec::with_mask_prob(p)?;
        }
    }
    spec.validate()?;
    Ok(spec)
}
