use super::params::truncated_normal;
use super::{dropout, Bound, DropoutRng, ModelConfig, SeqModel, ITEM_EMB};
use crate::autograd::{Graph, Tensor, Var};
use crate::data::{ItemId, PAD};
use crate::Rng;

pub(super) fn init(set: &mut super::ParameterSet, c: &ModelConfig, rng: &mut Rng) {
    let d = c.dim;
    for l in 0..c.layers {
        // gate blocks in column order: reset, update, candidate
        set.push(format!("l{l}.wx"), truncated_normal(rng, (d, 3 * d), c.init_scale));
        set.push(format!("l{l}.wh"), truncated_normal(rng, (d, 3 * d), c.init_scale));
        set.push(format!("l{l}.bx"), Tensor::zeros((1, 3 * d)));
        set.push(format!("l{l}.bh"), Tensor::zeros((1, 3 * d)));
    }
}

/// Stacked GRU. The state is carried unchanged across padding positions, so
/// with left padding it stays at zero until the first real item.
pub(super) fn forward(
    model: &SeqModel,
    g: &mut Graph,
    p: &Bound,
    ids: &[ItemId],
    mut rng: DropoutRng,
) -> Var {
    let c = &model.config;
    let (t, d) = (c.max_len, c.dim);
    let batch = ids.len() / t;
    let keep: Vec<f64> = ids.iter().map(|&i| if i != PAD { 1.0 } else { 0.0 }).collect();

    let mut x = g.gather_rows(p.get(ITEM_EMB), ids.iter().map(|&i| i as usize).collect());
    x = dropout(g, x, c.dropout, rng.as_deref_mut());

    // (t, b) ordering of concatenated steps back to (b, t)
    let to_batch_major: Vec<usize> = (0..batch * t).map(|r| (r % t) * batch + r / t).collect();

    for l in 0..c.layers {
        let xp = g.matmul(x, p.get(&format!("l{l}.wx")));
        let xp = g.add_row(xp, p.get(&format!("l{l}.bx")));
        let (wh, bh) = (p.get(&format!("l{l}.wh")), p.get(&format!("l{l}.bh")));
        let mut h = g.constant(Tensor::zeros((batch, d)));
        let mut steps = Vec::with_capacity(t);
        for step in 0..t {
            let rows: Vec<usize> = (0..batch).map(|b| b * t + step).collect();
            let mask: Vec<f64> = rows.iter().map(|&r| keep[r]).collect();
            let xt = g.gather_rows(xp, rows);
            let hp = g.matmul(h, wh);
            let hp = g.add_row(hp, bh);

            let (xr, hr) = (g.cols(xt, 0, d), g.cols(hp, 0, d));
            let r = g.add(xr, hr);
            let r = g.sigmoid(r);
            let (xz, hz) = (g.cols(xt, d, d), g.cols(hp, d, d));
            let z = g.add(xz, hz);
            let z = g.sigmoid(z);
            let (xn, hn) = (g.cols(xt, 2 * d, d), g.cols(hp, 2 * d, d));
            let rh = g.mul(r, hn);
            let n = g.add(xn, rh);
            let n = g.tanh(n);
            // h' = n + z ⊙ (h − n)
            let diff = g.sub(h, n);
            let zd = g.mul(z, diff);
            let next = g.add(n, zd);
            // hold the state where the input is padding
            let delta = g.sub(next, h);
            let delta = g.scale_rows(delta, mask);
            h = g.add(h, delta);
            steps.push(h);
        }
        let stacked = g.concat_rows(&steps);
        x = g.gather_rows(stacked, to_batch_major.clone());
        if l + 1 < c.layers {
            x = dropout(g, x, c.dropout, rng.as_deref_mut());
        }
    }
    g.scale_rows(x, keep)
}
