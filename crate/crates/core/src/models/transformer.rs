use super::params::truncated_normal;
use super::{dropout, Bound, DropoutRng, ModelConfig, SeqModel, ITEM_EMB, LN_EPS};
use crate::autograd::{AttentionSpec, Graph, Tensor, Var};
use crate::data::{ItemId, PAD};
use crate::Rng;

const POS_EMB: &str = "pos_emb";

pub(super) fn init(set: &mut super::ParameterSet, c: &ModelConfig, rng: &mut Rng) {
    let d = c.dim;
    set.push(POS_EMB, truncated_normal(rng, (c.max_len, d), c.init_scale));
    for l in 0..c.layers {
        let p = |n: &str| format!("l{l}.{n}");
        set.push(p("ln1.g"), Tensor::ones((1, d)));
        set.push(p("ln1.b"), Tensor::zeros((1, d)));
        set.push(p("wq"), truncated_normal(rng, (d, d), c.init_scale));
        set.push(p("bq"), Tensor::zeros((1, d)));
        // no key bias: it cancels inside the attention softmax
        set.push(p("wk"), truncated_normal(rng, (d, d), c.init_scale));
        set.push(p("wv"), truncated_normal(rng, (d, d), c.init_scale));
        set.push(p("bv"), Tensor::zeros((1, d)));
        set.push(p("wo"), truncated_normal(rng, (d, d), c.init_scale));
        set.push(p("bo"), Tensor::zeros((1, d)));
        set.push(p("ln2.g"), Tensor::ones((1, d)));
        set.push(p("ln2.b"), Tensor::zeros((1, d)));
        set.push(p("w1"), truncated_normal(rng, (d, d), c.init_scale));
        set.push(p("b1"), Tensor::zeros((1, d)));
        set.push(p("w2"), truncated_normal(rng, (d, d), c.init_scale));
        set.push(p("b2"), Tensor::zeros((1, d)));
    }
    set.push("final.g", Tensor::ones((1, d)));
    set.push("final.b", Tensor::zeros((1, d)));
}

fn dense(g: &mut Graph, x: Var, w: Var, b: Option<Var>) -> Var {
    let y = g.matmul(x, w);
    match b {
        Some(b) => g.add_row(y, b),
        None => y,
    }
}

/// Pre-norm transformer encoder. Padding rows are zeroed after the embedding
/// and after every block, and are never attended to.
pub(super) fn forward(
    model: &SeqModel,
    g: &mut Graph,
    p: &Bound,
    ids: &[ItemId],
    causal: bool,
    mut rng: DropoutRng,
) -> Var {
    let c = &model.config;
    let t = c.max_len;
    let valid: Vec<bool> = ids.iter().map(|&i| i != PAD).collect();
    let keep: Vec<f64> = valid.iter().map(|&v| if v { 1.0 } else { 0.0 }).collect();

    let emb = g.gather_rows(p.get(ITEM_EMB), ids.iter().map(|&i| i as usize).collect());
    let pos = g.gather_rows(p.get(POS_EMB), (0..ids.len()).map(|r| r % t).collect());
    let mut x = g.add(emb, pos);
    x = dropout(g, x, c.dropout, rng.as_deref_mut());
    x = g.scale_rows(x, keep.clone());

    for l in 0..c.layers {
        let n = |s: &str| format!("l{l}.{s}");
        let h = g.layer_norm(x, p.get(&n("ln1.g")), p.get(&n("ln1.b")), LN_EPS);
        let q = dense(g, h, p.get(&n("wq")), Some(p.get(&n("bq"))));
        let k = dense(g, h, p.get(&n("wk")), None);
        let v = dense(g, h, p.get(&n("wv")), Some(p.get(&n("bv"))));
        let spec = AttentionSpec {
            heads: c.heads,
            seq_len: t,
            causal,
            key_valid: valid.clone(),
        };
        let a = g.attention(q, k, v, spec);
        let a = dense(g, a, p.get(&n("wo")), Some(p.get(&n("bo"))));
        let a = dropout(g, a, c.dropout, rng.as_deref_mut());
        x = g.add(x, a);

        let h = g.layer_norm(x, p.get(&n("ln2.g")), p.get(&n("ln2.b")), LN_EPS);
        let f = dense(g, h, p.get(&n("w1")), Some(p.get(&n("b1"))));
        let f = g.gelu(f);
        let f = dense(g, f, p.get(&n("w2")), Some(p.get(&n("b2"))));
        let f = dropout(g, f, c.dropout, rng.as_deref_mut());
        x = g.add(x, f);
        x = g.scale_rows(x, keep.clone());
    }
    let x = g.layer_norm(x, p.get("final.g"), p.get("final.b"), LN_EPS);
    g.scale_rows(x, keep)
}
