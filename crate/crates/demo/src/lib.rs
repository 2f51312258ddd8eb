//! WebAssembly bindings for the browser demo. The plain functions carry the
//! logic; the `#[wasm_bindgen]` wrappers only convert errors.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use seqrec_core::data::{Dataset, Ingested, PreprocessConfig};
use seqrec_core::evaluation::{full_rank_metrics, per_timestamp_eval, Phase};
use seqrec_core::losses::{self, CandidateScores, LossKind, LossSpec};
use seqrec_core::models::{Architecture, ModelConfig, SeqModel};
use seqrec_core::synthetic::{markov_log, MarkovConfig};
use seqrec_core::training::{fit, AdamConfig, TrainConfig};

/// Loss and its derivative in the positive score while the positive moves
/// from `lo` to `hi` against fixed negatives. Returned flat as
/// `[pos, loss, d_loss/d_pos, ...]`.
pub fn loss_curve(kind: &str, negatives: &[f64], lo: f64, hi: f64, steps: usize) -> Result<Vec<f64>, String> {
    let kind: LossKind = kind.parse().map_err(|e: seqrec_core::Error| e.to_string())?;
    if steps < 2 || !(hi > lo) {
        return Err("need steps >= 2 and hi > lo".into());
    }
    let mut out = Vec::with_capacity(3 * steps);
    for i in 0..steps {
        let pos = lo + (hi - lo) * i as f64 / (steps - 1) as f64;
        let c = CandidateScores::new(pos, negatives.to_vec());
        let (loss, grad) = match kind {
            LossKind::Bpr => losses::bpr_loss_with_grad(&c),
            LossKind::BprMax => losses::bpr_max_loss_with_grad(&c),
            LossKind::Top1 => losses::top1_loss_with_grad(&c),
            LossKind::Top1Max => losses::top1_max_loss_with_grad(&c),
            LossKind::Bce => losses::bce_loss_with_grad(std::slice::from_ref(&c))
                .map(|(l, mut g)| (l, g.remove(0))),
            other => return Err(format!("{other} is not a sampled loss")),
        }
        .map_err(|e| e.to_string())?;
        out.extend([pos, loss, grad.pos]);
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct DemoEpoch {
    pub epoch: usize,
    pub loss: f64,
    pub val_hit10: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DemoPosition {
    pub position: usize,
    pub hit10: f64,
    pub count: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct DemoRun {
    pub loss: String,
    pub items: usize,
    pub users: usize,
    pub max_len: usize,
    pub epochs: Vec<DemoEpoch>,
    pub test_hit10: f64,
    pub test_ndcg10: f64,
    pub score_evals: u64,
    pub positions: Vec<DemoPosition>,
}

/// Train a small causal transformer on a synthetic Markov log and report
/// its training curve and per-position HIT@10.
pub fn train_demo(kind: &str, negatives: usize, epochs: usize, seed: u32) -> Result<DemoRun, String> {
    let err = |e: seqrec_core::Error| e.to_string();
    let kind: LossKind = kind.parse().map_err(err)?;
    let spec = if kind.is_sampled() {
        LossSpec::with_negatives(kind, negatives).map_err(err)?
    } else {
        LossSpec::new(kind)
    };
    let architecture = if kind == LossKind::Mlm {
        Architecture::TransformerBidirectional
    } else {
        Architecture::TransformerCausal
    };
    let log = markov_log(
        &MarkovConfig {
            users: 300,
            items: 60,
            successors: 3,
            noise: 0.15,
            min_len: 5,
            max_len: 14,
        },
        seed as u64,
    )
    .map_err(err)?;
    let data = Dataset::from_ingested(Ingested::Sequences(log), &PreprocessConfig::default()).map_err(err)?;
    let split = data.split().map_err(err)?;
    let max_len = 10;
    let model = SeqModel::new(
        ModelConfig {
            architecture,
            dim: 16,
            layers: 1,
            heads: 2,
            max_len,
            dropout: 0.1,
            init_scale: 0.02,
        },
        split.num_items,
    )
    .map_err(err)?;
    let config = TrainConfig {
        epochs: epochs.max(1),
        batch_size: 64,
        adam: AdamConfig {
            lr: 5e-3,
            ..AdamConfig::default()
        },
        patience: epochs.max(1),
        seed: seed as u64,
        ..TrainConfig::default()
    };
    let outcome = fit(&model, &split, &config, &spec).map_err(err)?;
    let test = full_rank_metrics(&model, &outcome.params, &split, Phase::Test, &[10]).map_err(err)?;
    let curve = per_timestamp_eval(&model, &outcome.params, &split).map_err(err)?;
    Ok(DemoRun {
        loss: spec.label(),
        items: split.num_items,
        users: split.len(),
        max_len,
        epochs: outcome
            .records
            .iter()
            .map(|r| DemoEpoch {
                epoch: r.epoch,
                loss: r.loss,
                val_hit10: r.val_hit10,
            })
            .collect(),
        test_hit10: test.hit(10),
        test_ndcg10: test.ndcg(10),
        score_evals: outcome.meter.score_evals,
        positions: curve
            .positions
            .iter()
            .map(|p| DemoPosition {
                position: p.position,
                hit10: p.hit10,
                count: p.count,
            })
            .collect(),
    })
}

#[wasm_bindgen(js_name = lossCurve)]
pub fn loss_curve_js(kind: &str, negatives: Vec<f64>, lo: f64, hi: f64, steps: usize) -> Result<Vec<f64>, JsError> {
    loss_curve(kind, &negatives, lo, hi, steps).map_err(|e| JsError::new(&e))
}

/// Softmax weights the max-style losses put on each negative.
#[wasm_bindgen(js_name = negativeWeights)]
pub fn negative_weights_js(scores: Vec<f64>) -> Vec<f64> {
    losses::negative_weights(&scores)
}

/// JSON-encoded [`DemoRun`].
#[wasm_bindgen(js_name = trainDemo)]
pub fn train_demo_js(kind: &str, negatives: usize, epochs: usize, seed: u32) -> Result<String, JsError> {
    let run = train_demo(kind, negatives, epochs, seed).map_err(|e| JsError::new(&e))?;
    serde_json::to_string(&run).map_err(|e| JsError::new(&e.to_string()))
}
