//! Turning a [`TrainingBatch`] plus a [`LossSpec`] into a scalar loss node.

use crate::autograd::{Graph, Var};
use crate::data::{sample_negatives, ExcludeSet, ItemId, NegativeMode, SplitDataset, TrainingBatch};
use crate::losses::{self, apply_mlm_masking, Layout, LossKind, LossSpec};
use crate::metering::Meter;
use crate::models::{Architecture, Bound, DropoutRng, SeqModel, ITEM_EMB};
use crate::{Error, Result, Rng};

/// What the loss is computed against.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Target {
    /// `rows.len() × (1 + N_s)` candidates; the first of every group is the
    /// positive.
    Sampled { rows: Vec<usize>, candidates: Vec<ItemId> },
    /// Full-catalog rows with one target item each.
    Full { rows: Vec<usize>, targets: Vec<ItemId> },
}

/// A batch with every random choice (negatives, masks) already made.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PreparedBatch {
    pub kind: LossKind,
    /// `B × T` model input, after masking for MLM.
    pub input: Vec<ItemId>,
    pub target: Target,
}

impl PreparedBatch {
    /// Number of item scores the loss will compute.
    pub fn score_evals(&self, num_items: usize) -> usize {
        match &self.target {
            Target::Sampled { candidates, .. } => candidates.len(),
            Target::Full { rows, .. } => rows.len() * num_items,
        }
    }
}

/// Reject objective/architecture pairs that make no sense for training:
/// masked-item loss needs bidirectional context, and next-item losses must
/// not see the future.
pub fn check_compatible(architecture: Architecture, kind: LossKind) -> Result<()> {
    match (architecture.is_bidirectional(), kind == LossKind::Mlm) {
        (true, true) | (false, false) => Ok(()),
        (false, true) => Err(Error::Config(format!(
            "mlm needs a bidirectional model, got {architecture}"
        ))),
        (true, false) => Err(Error::Config(format!(
            "{kind} is a next-item loss and cannot train the bidirectional {architecture}"
        ))),
    }
}

/// Draw negatives / masks for `batch` and fix the evaluated positions.
pub fn prepare_batch(
    model: &SeqModel,
    split: &SplitDataset,
    batch: &TrainingBatch,
    spec: &LossSpec,
    negative_mode: NegativeMode,
    rng: &mut Rng,
    meter: &mut Meter,
) -> Result<PreparedBatch> {
    spec.validate()?;
    let t = batch.max_len;
    let rows: Vec<usize> = match spec.kind.layout() {
        Layout::LastTimestep => (0..batch.size())
            .map(|b| b * t + t - 1)
            .filter(|&r| batch.mask[r])
            .collect(),
        Layout::AllTimesteps => (0..batch.mask.len()).filter(|&r| batch.mask[r]).collect(),
        Layout::Masked => return prepare_masked(model, split, batch, spec, rng),
    };
    if rows.is_empty() {
        return Err(Error::Usage("batch has no valid target".into()));
    }
    let targets: Vec<ItemId> = rows.iter().map(|&r| batch.target[r]).collect();
    let target = if spec.kind.is_sampled() {
        let n = spec.negatives();
        let mut candidates = Vec::with_capacity(rows.len() * (n + 1));
        for (&r, &pos) in rows.iter().zip(&targets) {
            let exclude = match negative_mode {
                NegativeMode::TargetOnly => ExcludeSet::single(pos),
                NegativeMode::UserHistory => {
                    let user = &split.users[batch.users[r / t]];
                    ExcludeSet::new(user.train.iter().copied().chain([pos]))
                }
            };
            candidates.push(pos);
            candidates.extend(sample_negatives(rng, model.num_items, &exclude, n)?);
            meter.add_negatives(n);
        }
        Target::Sampled { rows, candidates }
    } else {
        Target::Full { rows, targets }
    };
    Ok(PreparedBatch {
        kind: spec.kind,
        input: batch.input.clone(),
        target,
    })
}

fn prepare_masked(
    model: &SeqModel,
    split: &SplitDataset,
    batch: &TrainingBatch,
    spec: &LossSpec,
    rng: &mut Rng,
) -> Result<PreparedBatch> {
    let t = batch.max_len;
    let rho = spec.mask_prob.unwrap_or(losses::DEFAULT_MASK_PROB);
    let mut input = Vec::with_capacity(batch.size() * t);
    let mut rows = Vec::new();
    let mut targets = Vec::new();
    for (b, &u) in batch.users.iter().enumerate() {
        let items = crate::data::left_pad(&split.users[u].train, t);
        let masked = apply_mlm_masking(rng, &items, rho, model.mask_id())?;
        rows.extend(masked.positions.iter().map(|&p| b * t + p));
        targets.extend(masked.originals);
        input.extend(masked.input);
    }
    Ok(PreparedBatch {
        kind: spec.kind,
        input,
        target: Target::Full { rows, targets },
    })
}

/// Forward the model and attach the loss node. Counts score evaluations on
/// `meter`.
pub fn loss_node(
    model: &SeqModel,
    g: &mut Graph,
    bound: &Bound,
    prepared: &PreparedBatch,
    dropout: DropoutRng,
    meter: &mut Meter,
) -> Result<Var> {
    let hidden = model.forward(g, bound, &prepared.input, dropout)?;
    meter.add_scores(prepared.score_evals(model.num_items));
    let kind = prepared.kind;
    let node = match &prepared.target {
        Target::Sampled { rows, candidates } => {
            let h = g.gather_rows(hidden, rows.clone());
            let c = g.gather_rows(
                bound.get(ITEM_EMB),
                candidates.iter().map(|&i| i as usize).collect(),
            );
            let scores = g.row_dot(h, c);
            g.loss(scores, |s| losses::sampled_rows_loss(kind, s.view()))
        }
        Target::Full { rows, targets } => {
            let h = g.gather_rows(hidden, rows.clone());
            let items = model.real_item_rows(g, bound);
            let scores = g.matmul_t(h, items);
            let local: Vec<usize> = (0..rows.len()).collect();
            let cols: Vec<usize> = targets.iter().map(|&i| i as usize - 1).collect();
            g.loss(scores, |s| losses::softmax_rows_loss(s.view(), &local, &cols))
        }
    };
    Ok(node)
}
