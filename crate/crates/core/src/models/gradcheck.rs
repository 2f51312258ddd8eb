//! Finite-difference verification of model + loss gradients.

use rand::Rng as _;

use super::params::truncated_normal;
use super::{collect_gradients, Architecture, Gradients, ModelConfig, ParameterSet, SeqModel, ITEM_EMB};
use crate::autograd::Graph;
use crate::data::{epoch_batches, ItemId, NegativeMode, SplitDataset, UserSplit, PAD};
use crate::losses::{LossKind, LossSpec};
use crate::metering::Meter;
use crate::training::objective::{loss_node, prepare_batch, PreparedBatch};
use crate::{derived_rng, Result, Rng};

/// Size of the random instance and of the probe.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckConfig {
    pub seed: u64,
    /// Coordinates probed per instance.
    pub coords: usize,
    pub step: f64,
    pub users: usize,
    pub num_items: usize,
    pub dim: usize,
    pub max_len: usize,
    pub negatives: usize,
    /// Spread of the random parameters.
    pub scale: f64,
    /// Gradients smaller than this are compared in absolute terms.
    pub floor: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            coords: 40,
            step: 1e-4,
            users: 4,
            num_items: 12,
            dim: 8,
            max_len: 6,
            negatives: 3,
            scale: 0.5,
            floor: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckReport {
    pub max_rel_error: f64,
    pub coords_checked: usize,
    /// L2 norm of the analytic gradient over the probed coordinates.
    pub probed_norm: f64,
}

/// Random `(tensor, flat index)` coordinates, never on the padding row of
/// the item table.
pub fn sample_coordinates(params: &ParameterSet, n: usize, rng: &mut Rng) -> Vec<(usize, usize)> {
    let emb = params.index(ITEM_EMB);
    let sizes: Vec<usize> = params.tensors().iter().map(|t| t.len()).collect();
    let total: usize = sizes.iter().sum();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let mut flat = rng.gen_range(0..total);
        let mut t = 0;
        while flat >= sizes[t] {
            flat -= sizes[t];
            t += 1;
        }
        let cols = params.tensors()[t].ncols();
        if Some(t) == emb && flat / cols == PAD as usize {
            continue;
        }
        out.push((t, flat));
    }
    out
}

/// Compare `analytic` with a fourth-order central difference of `f` at
/// `coords`. The error at one coordinate is `|a − n| / max(|a|, |n|, floor)`.
pub fn finite_difference_check(
    params: &ParameterSet,
    analytic: &Gradients,
    coords: &[(usize, usize)],
    step: f64,
    floor: f64,
    mut f: impl FnMut(&ParameterSet) -> Result<f64>,
) -> Result<CheckReport> {
    let mut probe = params.clone();
    let mut worst: f64 = 0.0;
    let mut norm = 0.0;
    for &(t, i) in coords {
        let x0 = params.tensors()[t].as_slice().expect("standard layout")[i];
        let mut at = |delta: f64| -> Result<f64> {
            probe.tensors_mut()[t].as_slice_mut().expect("standard layout")[i] = x0 + delta;
            f(&probe)
        };
        let (p1, m1, p2, m2) = (at(step)?, at(-step)?, at(2.0 * step)?, at(-2.0 * step)?);
        probe.tensors_mut()[t].as_slice_mut().expect("standard layout")[i] = x0;
        let numeric = (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * step);
        let a = analytic[t].as_slice().expect("standard layout")[i];
        norm += a * a;
        let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
        worst = worst.max(err);
    }
    Ok(CheckReport {
        max_rel_error: worst,
        coords_checked: coords.len(),
        probed_norm: norm.sqrt(),
    })
}

/// Random split of `users` sequences over `num_items` items.
pub fn random_split(rng: &mut Rng, users: usize, num_items: usize, max_len: usize) -> SplitDataset {
    let users = (0..users)
        .map(|u| {
            let len = rng.gen_range(4..=max_len + 3);
            let seq: Vec<ItemId> = (0..len).map(|_| rng.gen_range(1..=num_items as ItemId)).collect();
            let n = seq.len();
            UserSplit {
                user: u as u32,
                train: seq[..n - 2].to_vec(),
                valid: seq[n - 2],
                test: seq[n - 1],
            }
        })
        .collect();
    SplitDataset { num_items, users }
}

fn scalar_loss(model: &SeqModel, params: &ParameterSet, prepared: &PreparedBatch) -> Result<f64> {
    let mut g = Graph::new();
    let bound = model.bind(&mut g, params);
    let node = loss_node(model, &mut g, &bound, prepared, None, &mut Meter::default())?;
    Ok(g.scalar(node))
}

/// Gradient check of `kind` composed with `architecture` on one random tiny
/// instance drawn from `config.seed`. Dropout is off; negatives and masks are
/// drawn once and held fixed.
pub fn gradient_check(
    architecture: Architecture,
    kind: LossKind,
    config: &GradCheckConfig,
) -> Result<CheckReport> {
    let mut rng = derived_rng(config.seed, architecture as u64 * 16 + kind as u64);
    let model = SeqModel::new(
        ModelConfig {
            architecture,
            dim: config.dim,
            layers: 2,
            heads: 2,
            max_len: config.max_len,
            dropout: 0.0,
            init_scale: config.scale,
        },
        config.num_items,
    )?;
    let mut params = model.init_parameters(&mut rng);
    let names = params.names().to_vec();
    for (name, t) in names.iter().zip(params.tensors_mut()) {
        if name != ITEM_EMB {
            *t += &truncated_normal(&mut rng, t.dim(), config.scale * 0.5);
        }
    }
    let split = random_split(&mut rng, config.users, config.num_items, config.max_len);
    let batch = epoch_batches(&split, config.max_len, config.users, &mut rng)
        .next()
        .expect("random split has trainable users");
    let spec = if kind.is_sampled() {
        LossSpec::with_negatives(kind, config.negatives)?
    } else {
        LossSpec::new(kind)
    };
    let prepared = prepare_batch(
        &model,
        &split,
        &batch,
        &spec,
        NegativeMode::TargetOnly,
        &mut rng,
        &mut Meter::default(),
    )?;

    let mut g = Graph::new();
    let bound = model.bind(&mut g, &params);
    let node = loss_node(&model, &mut g, &bound, &prepared, None, &mut Meter::default())?;
    let analytic = collect_gradients(&params, g.backward(node)?);
    let coords = sample_coordinates(&params, config.coords, &mut rng);
    finite_difference_check(&params, &analytic, &coords, config.step, config.floor, |p| {
        scalar_loss(&model, p, &prepared)
    })
}
