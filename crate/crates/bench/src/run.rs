//! One training cell: configuration echo, outcome and on-disk layout.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use seqrec_core::checkpoint::Checkpoint;
use seqrec_core::data::{Dataset, InputFormat, PreprocessConfig, SplitDataset};
use seqrec_core::evaluation::{full_rank_metrics, sampled_metrics, MetricsReport, Phase, ResourceReport};
use seqrec_core::losses::LossSpec;
use seqrec_core::metering::Meter;
use seqrec_core::models::{ModelConfig, SeqModel};
use seqrec_core::training::{check_compatible, fit, write_training_log, TrainConfig, TrainRecord};

pub const RUN_FILE: &str = "run.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const TRAIN_LOG_FILE: &str = "train_log.tsv";
pub const ERROR_FILE: &str = "error.txt";

/// Version plus the source revision the binary was built from.
pub fn build_id() -> String {
    format!("{} ({})", env!("CARGO_PKG_VERSION"), env!("SEQREC_GIT_REV"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub dataset: PathBuf,
    pub format: InputFormat,
    pub preprocess: PreprocessConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub loss: LossSpec,
    pub out: PathBuf,
    pub ks: Vec<usize>,
    pub sampled_negatives: usize,
}

impl RunConfig {
    /// Fail fast on anything that would only surface after training.
    pub fn validate(&self) -> Result<()> {
        anyhow::ensure!(
            self.dataset.exists(),
            "dataset not found: {}",
            self.dataset.display()
        );
        self.model.validate()?;
        self.train.validate()?;
        self.loss.validate()?;
        check_compatible(self.model.architecture, self.loss.kind)?;
        anyhow::ensure!(self.ks.contains(&10), "k list must contain 10");
        Ok(())
    }

    pub fn cell_name(&self) -> String {
        cell_name(&self.model, &self.loss, self.train.seed)
    }
}

/// Directory name of one grid cell, e.g. `sasrec_bce-1_s42`.
pub fn cell_name(model: &ModelConfig, loss: &LossSpec, seed: u64) -> String {
    format!("{}_{}_s{seed}", model.architecture.model_name(), loss.label())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub build: String,
    pub config: RunConfig,
    pub valid: MetricsReport,
    pub test: MetricsReport,
    pub sampled_test: MetricsReport,
    pub resources: ResourceReport,
    pub best_epoch: usize,
    pub records: Vec<TrainRecord>,
}

impl RunResult {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_slice(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
    }
}

pub fn load_split(dataset: &Path, format: InputFormat, preprocess: &PreprocessConfig) -> Result<SplitDataset> {
    let data = Dataset::load(dataset, format, preprocess)?;
    Ok(data.split()?)
}

/// Train, evaluate and write `run.json`, `checkpoint.json` and
/// `train_log.tsv` into `config.out`.
pub fn run_cell(config: &RunConfig, split: &SplitDataset) -> Result<RunResult> {
    config.validate()?;
    std::fs::create_dir_all(&config.out)
        .with_context(|| format!("creating {}", config.out.display()))?;
    let model = SeqModel::new(config.model, split.num_items)?;
    let outcome = fit(&model, split, &config.train, &config.loss)?;
    let params = &outcome.params;

    let valid = full_rank_metrics(&model, params, split, Phase::Valid, &config.ks)?;
    let test = full_rank_metrics(&model, params, split, Phase::Test, &config.ks)?;
    let sampled_test = sampled_metrics(
        &model,
        params,
        split,
        config.train.seed,
        config.sampled_negatives,
        &config.ks,
        &mut Meter::default(),
    )?;

    Checkpoint::new(model, config.loss, config.train.seed, params)
        .save(&config.out.join(CHECKPOINT_FILE))?;
    write_training_log(&config.out.join(TRAIN_LOG_FILE), &outcome.records)?;
    let result = RunResult {
        build: build_id(),
        config: config.clone(),
        valid,
        test,
        sampled_test,
        resources: ResourceReport::new(outcome.seconds, outcome.meter),
        best_epoch: outcome.best_epoch,
        records: outcome.records,
    };
    result.save(&config.out.join(RUN_FILE))?;
    Ok(result)
}
