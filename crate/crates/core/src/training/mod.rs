//! Optimisation loop: batch iteration, loss dispatch, Adam and early
//! stopping on validation NDCG@10.

mod adam;
pub mod objective;

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use adam::{adam_update, clip_global_norm, AdamConfig, OptimizerState};
pub use objective::{check_compatible, loss_node, prepare_batch, PreparedBatch, Target};

use crate::autograd::Graph;
use crate::data::{epoch_batches, NegativeMode, SplitDataset, TrainingBatch};
use crate::evaluation::{full_rank_metrics, Phase};
use crate::losses::LossSpec;
use crate::metering::{Meter, Stopwatch};
use crate::models::{collect_gradients, ParameterSet, SeqModel};
use crate::{derived_rng, Error, Result, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub patience: usize,
    /// Global gradient-norm ceiling; `None` disables clipping.
    pub clip_norm: Option<f64>,
    pub negative_mode: NegativeMode,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 256,
            adam: AdamConfig::default(),
            patience: 10,
            clip_norm: Some(5.0),
            negative_mode: NegativeMode::default(),
            seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        let a = &self.adam;
        if self.epochs == 0 {
            return fail("epochs must be at least 1");
        }
        if self.batch_size == 0 {
            return fail("batch size must be at least 1");
        }
        if self.patience == 0 {
            return fail("patience must be at least 1");
        }
        if !(a.lr > 0.0 && a.lr.is_finite()) {
            return fail("learning rate must be positive");
        }
        if !((0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2)) {
            return fail("Adam betas must lie in [0, 1)");
        }
        if !(a.eps > 0.0) || !(a.weight_decay >= 0.0) {
            return fail("Adam epsilon must be positive and weight decay non-negative");
        }
        if matches!(self.clip_norm, Some(c) if !(c > 0.0)) {
            return fail("clip norm must be positive");
        }
        Ok(())
    }
}

/// One line of the training log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub epoch: usize,
    pub loss: f64,
    pub val_hit10: f64,
    pub val_ndcg10: f64,
    /// Elapsed since the start of `fit`.
    pub seconds: f64,
    pub score_evals: u64,
    pub neg_samples: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOutcome {
    pub params: ParameterSet,
    pub records: Vec<TrainRecord>,
    /// 1-based epoch the returned parameters come from.
    pub best_epoch: usize,
    pub meter: Meter,
    pub seconds: f64,
}

/// Outcome of [`EarlyStopping::observe`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Improved,
    Continue,
    Stop,
}

/// Stop once `patience` consecutive epochs fail to beat the best value.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    patience: usize,
    best: Option<(f64, usize)>,
    since_best: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: None,
            since_best: 0,
        }
    }

    /// Best `(value, epoch)` so far.
    pub fn best(&self) -> Option<(f64, usize)> {
        self.best
    }

    pub fn observe(&mut self, epoch: usize, value: f64) -> Verdict {
        if self.best.is_none_or(|(b, _)| value > b) {
            self.best = Some((value, epoch));
            self.since_best = 0;
            Verdict::Improved
        } else {
            self.since_best += 1;
            if self.since_best >= self.patience {
                Verdict::Stop
            } else {
                Verdict::Continue
            }
        }
    }
}

/// Randomness for batch `index` of `epoch`; `index = u32::MAX` is the
/// epoch's shuffle stream and epoch 0 the initialiser.
pub fn stream_rng(seed: u64, epoch: usize, index: u32) -> Rng {
    derived_rng(seed, ((epoch as u64) << 32) | index as u64)
}

/// Forward, backward and one Adam update. Returns the batch loss.
#[allow(clippy::too_many_arguments)]
pub fn train_step(
    model: &SeqModel,
    params: &mut ParameterSet,
    state: &mut OptimizerState,
    split: &SplitDataset,
    batch: &TrainingBatch,
    spec: &LossSpec,
    config: &TrainConfig,
    rng: &mut Rng,
    meter: &mut Meter,
) -> Result<f64> {
    check_compatible(model.config.architecture, spec.kind)?;
    let prepared = prepare_batch(model, split, batch, spec, config.negative_mode, rng, meter)?;
    let mut g = Graph::new();
    let bound = model.bind(&mut g, params);
    let loss = loss_node(model, &mut g, &bound, &prepared, Some(rng), meter)?;
    let value = g.scalar(loss);
    if !value.is_finite() {
        return Err(Error::NonFiniteScore { index: 0, value });
    }
    let mut grads = collect_gradients(params, g.backward(loss)?);
    if let Some(c) = config.clip_norm {
        clip_global_norm(&mut grads, c);
    }
    adam_update(params, &grads, state, &config.adam);
    Ok(value)
}

/// Train from a fresh initialisation drawn from `config.seed`.
pub fn fit(
    model: &SeqModel,
    split: &SplitDataset,
    config: &TrainConfig,
    spec: &LossSpec,
) -> Result<FitOutcome> {
    fit_with(model, split, config, spec, |_| {})
}

/// [`fit`] with a callback after every epoch.
pub fn fit_with(
    model: &SeqModel,
    split: &SplitDataset,
    config: &TrainConfig,
    spec: &LossSpec,
    mut on_epoch: impl FnMut(&TrainRecord),
) -> Result<FitOutcome> {
    config.validate()?;
    spec.validate()?;
    check_compatible(model.config.architecture, spec.kind)?;
    if split.num_items != model.num_items {
        return Err(Error::Config(format!(
            "model built for {} items, dataset has {}",
            model.num_items, split.num_items
        )));
    }
    let clock = Stopwatch::start();
    let mut params = model.init_parameters(&mut stream_rng(config.seed, 0, 0));
    let mut state = OptimizerState::new(&params);
    let mut meter = Meter::default();
    let mut records = Vec::new();
    let mut stopper = EarlyStopping::new(config.patience);
    let mut best_params = None;

    for epoch in 1..=config.epochs {
        let mut shuffle = stream_rng(config.seed, epoch, u32::MAX);
        let batches = epoch_batches(split, model.config.max_len, config.batch_size, &mut shuffle);
        let (mut total, mut count) = (0.0, 0usize);
        for (i, batch) in batches.enumerate() {
            let mut rng = stream_rng(config.seed, epoch, i as u32);
            total += train_step(
                model,
                &mut params,
                &mut state,
                split,
                &batch,
                spec,
                config,
                &mut rng,
                &mut meter,
            )?;
            count += 1;
        }
        if count == 0 {
            return Err(Error::Usage("no user has a training target".into()));
        }
        let val = full_rank_metrics(model, &params, split, Phase::Valid, &[10])?;
        let record = TrainRecord {
            epoch,
            loss: total / count as f64,
            val_hit10: val.hit(10),
            val_ndcg10: val.ndcg(10),
            seconds: clock.seconds(),
            score_evals: meter.score_evals,
            neg_samples: meter.negative_samples,
        };
        log::info!(
            "{} epoch {epoch}: loss {:.5} val hit@10 {:.4} ndcg@10 {:.4}",
            spec.label(),
            record.loss,
            record.val_hit10,
            record.val_ndcg10
        );
        on_epoch(&record);
        records.push(record);

        match stopper.observe(epoch, record.val_ndcg10) {
            Verdict::Improved => best_params = Some(params.clone()),
            Verdict::Continue => {}
            Verdict::Stop => break,
        }
    }
    let (_, best_epoch) = stopper.best().expect("at least one epoch ran");
    Ok(FitOutcome {
        params: best_params.expect("at least one epoch ran"),
        records,
        best_epoch,
        meter,
        seconds: clock.seconds(),
    })
}

/// Tab-separated, one line per epoch:
/// `epoch loss val_hit10 val_ndcg10 seconds score_evals neg_samples`.
pub fn write_training_log(path: &Path, records: &[TrainRecord]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut out = Vec::new();
    for r in records {
        writeln!(
            out,
            "{}\t{:.6}\t{:.6}\t{:.6}\t{:.3}\t{}\t{}",
            r.epoch, r.loss, r.val_hit10, r.val_ndcg10, r.seconds, r.score_evals, r.neg_samples
        )
        .expect("writing to a Vec");
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}
