//! Sampled objectives over one positive and `N_s` negative scores.

use crate::numerics::{log_sum_exp, sigmoid, softmax_into, softplus};

/// Per-row kernel signature: `(pos, negs, grad_pos, grad_negs) -> loss`.
pub(crate) type RowKernel = fn(f64, &[f64], &mut f64, &mut [f64]) -> f64;

/// `−(1/N) Σ ln σ(pos − neg_j)`
pub(crate) fn bpr_row(pos: f64, neg: &[f64], g_pos: &mut f64, g_neg: &mut [f64]) -> f64 {
    let n = neg.len() as f64;
    let mut loss = 0.0;
    *g_pos = 0.0;
    for (g, &r) in g_neg.iter_mut().zip(neg) {
        loss += softplus(r - pos);
        let s = sigmoid(r - pos) / n;
        *g = s;
        *g_pos -= s;
    }
    loss / n
}

/// `−ln Σ s_j σ(pos − neg_j)` with `s = softmax(neg)`.
pub(crate) fn bpr_max_row(pos: f64, neg: &[f64], g_pos: &mut f64, g_neg: &mut [f64]) -> f64 {
    if neg.len() == 1 {
        return bpr_row(pos, neg, g_pos, g_neg);
    }
    // ln Σ s_j σ_j = lse_j(neg_j − softplus(neg_j − pos)) − lse(neg)
    let mut s = vec![0.0; neg.len()];
    let lse_neg = softmax_into(neg, &mut s);
    let u: Vec<f64> = neg.iter().map(|&r| r - softplus(r - pos)).collect();
    let lse_u = log_sum_exp(&u);
    let loss = lse_neg - lse_u;
    *g_pos = 0.0;
    for j in 0..neg.len() {
        // posterior weight of negative j and its pairwise sigmoid
        let w = (u[j] - lse_u).exp();
        let sig = sigmoid(pos - neg[j]);
        *g_pos -= w * (1.0 - sig);
        g_neg[j] = s[j] - w * sig;
    }
    loss
}

#[inline]
fn top1_term(pos: f64, r: f64) -> (f64, f64, f64) {
    let a = sigmoid(r - pos);
    let b = sigmoid(r * r);
    let da = a * (1.0 - a);
    let db = b * (1.0 - b) * 2.0 * r;
    // (value, ∂/∂neg, ∂/∂pos)
    (a + b, da + db, -da)
}

/// `(1/N) Σ [σ(neg_j − pos) + σ(neg_j²)]`
pub(crate) fn top1_row(pos: f64, neg: &[f64], g_pos: &mut f64, g_neg: &mut [f64]) -> f64 {
    let n = neg.len() as f64;
    let mut loss = 0.0;
    *g_pos = 0.0;
    for (g, &r) in g_neg.iter_mut().zip(neg) {
        let (v, dn, dp) = top1_term(pos, r);
        loss += v;
        *g = dn / n;
        *g_pos += dp / n;
    }
    loss / n
}

/// `Σ s_j [σ(neg_j − pos) + σ(neg_j²)]` with `s = softmax(neg)`.
pub(crate) fn top1_max_row(pos: f64, neg: &[f64], g_pos: &mut f64, g_neg: &mut [f64]) -> f64 {
    let mut s = vec![0.0; neg.len()];
    softmax_into(neg, &mut s);
    let terms: Vec<(f64, f64, f64)> = neg.iter().map(|&r| top1_term(pos, r)).collect();
    let loss: f64 = s.iter().zip(&terms).map(|(w, t)| w * t.0).sum();
    *g_pos = 0.0;
    for j in 0..neg.len() {
        let (v, dn, dp) = terms[j];
        g_neg[j] = s[j] * (v - loss) + s[j] * dn;
        *g_pos += s[j] * dp;
    }
    loss
}

/// `−[ln σ(pos) + Σ ln(1 − σ(neg_j))]`
pub(crate) fn bce_row(pos: f64, neg: &[f64], g_pos: &mut f64, g_neg: &mut [f64]) -> f64 {
    let mut loss = softplus(-pos);
    *g_pos = -sigmoid(-pos);
    for (g, &r) in g_neg.iter_mut().zip(neg) {
        loss += softplus(r);
        *g = sigmoid(r);
    }
    loss
}
