use serde::{Deserialize, Serialize};

use crate::autograd::Tensor;
use crate::data::PAD;
use crate::models::{Gradients, ParameterSet};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

/// First/second moment accumulators mirroring a [`ParameterSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub step: u64,
}

impl OptimizerState {
    pub fn new(params: &ParameterSet) -> Self {
        let zeros = || params.tensors().iter().map(|t| Tensor::zeros(t.raw_dim())).collect();
        Self {
            m: zeros(),
            v: zeros(),
            step: 0,
        }
    }
}

/// Scale `grads` so their global L2 norm is at most `max_norm`. Returns the
/// norm before clipping.
pub fn clip_global_norm(grads: &mut Gradients, max_norm: f64) -> f64 {
    let norm = grads
        .iter()
        .map(|g| g.iter().map(|v| v * v).sum::<f64>())
        .sum::<f64>()
        .sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        grads.iter_mut().for_each(|g| g.mapv_inplace(|v| v * s));
    }
    norm
}

/// One bias-corrected Adam step. Row 0 (padding) of the item table is never
/// updated.
pub fn adam_update(
    params: &mut ParameterSet,
    grads: &Gradients,
    state: &mut OptimizerState,
    config: &AdamConfig,
) {
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - config.beta1.powi(t);
    let bc2 = 1.0 - config.beta2.powi(t);
    let frozen = params.index(crate::models::ITEM_EMB);
    let AdamConfig {
        lr,
        beta1,
        beta2,
        eps,
        weight_decay,
    } = *config;
    for (i, ((p, g), (m, v))) in params
        .tensors_mut()
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
        .enumerate()
    {
        let skip_rows = if Some(i) == frozen { 1 } else { 0 };
        let cols = p.ncols();
        let ps = p.as_slice_mut().expect("standard layout");
        let gs = g.as_slice().expect("standard layout");
        let ms = m.as_slice_mut().expect("standard layout");
        let vs = v.as_slice_mut().expect("standard layout");
        for k in skip_rows * cols..ps.len() {
            let grad = gs[k] + weight_decay * ps[k];
            ms[k] = beta1 * ms[k] + (1.0 - beta1) * grad;
            vs[k] = beta2 * vs[k] + (1.0 - beta2) * grad * grad;
            let mhat = ms[k] / bc1;
            let vhat = vs[k] / bc2;
            ps[k] -= lr * mhat / (vhat.sqrt() + eps);
        }
    }
    debug_assert!(frozen.is_none_or(|i| params.tensors()[i].row(PAD as usize).iter().all(|&x| x == 0.0)));
}
