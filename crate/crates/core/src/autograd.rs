//! A small reverse-mode tape over `f64` matrices.
//!
//! Every operation appends a node holding its forward value; [`Graph::backward`]
//! walks the tape in reverse and returns gradients for the parameter leaves.
//! The op set is exactly what the sequence models need, with layer norm,
//! multi-head attention and the loss kernels fused into single nodes.

use ndarray::{s, Array2, Axis};

use crate::{Error, Result};

pub type Tensor = Array2<f64>;

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Static description of an attention call.
#[derive(Debug, Clone)]
pub struct AttentionSpec {
    pub heads: usize,
    pub seq_len: usize,
    /// Position `i` may only attend to keys `j <= i`.
    pub causal: bool,
    /// One flag per row of `k`; `false` rows are never attended to.
    pub key_valid: Vec<bool>,
}

enum Op {
    Constant,
    Param(usize),
    MatMul(Var, Var),
    MatMulT(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    ScaleRows(Var, Vec<f64>),
    MulConst(Var, Tensor),
    Sigmoid(Var),
    Tanh(Var),
    Gelu(Var),
    Gather(Var, Vec<usize>),
    Cols(Var, usize),
    ConcatRows(Vec<Var>),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        normed: Tensor,
        inv_std: Vec<f64>,
    },
    Attention {
        q: Var,
        k: Var,
        v: Var,
        spec: AttentionSpec,
        probs: Vec<f64>,
    },
    RowDot(Var, Var),
    Loss(Var, Tensor),
}

struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

fn standard(t: Tensor) -> Tensor {
    if t.is_standard_layout() {
        t
    } else {
        t.as_standard_layout().into_owned()
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

#[inline]
fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

#[inline]
fn gelu_grad(x: f64) -> f64 {
    let u = GELU_C * (x + 0.044715 * x * x * x);
    let t = u.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node {
            value: standard(value),
            op,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v)[[0, 0]]
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Constant)
    }

    /// Leaf whose gradient is reported under `id` by [`Graph::backward`].
    pub fn param(&mut self, id: usize, t: Tensor) -> Var {
        self.push(t, Op::Param(id))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    /// `a · bᵀ`
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(&self.value(b).t());
        self.push(v, Op::MatMulT(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        self.push(v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) - self.value(b);
        self.push(v, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) * self.value(b);
        self.push(v, Op::Mul(a, b))
    }

    /// Broadcast-add a `1 × m` row to every row of `x`.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Var {
        let v = self.value(x) + self.value(bias);
        self.push(v, Op::AddRow(x, bias))
    }

    /// Multiply row `i` of `x` by `scale[i]`.
    pub fn scale_rows(&mut self, x: Var, scale: Vec<f64>) -> Var {
        let mut v = self.value(x).clone();
        for (mut row, &s) in v.rows_mut().into_iter().zip(&scale) {
            row *= s;
        }
        self.push(v, Op::ScaleRows(x, scale))
    }

    /// Element-wise product with a constant (dropout masks).
    pub fn mul_const(&mut self, x: Var, c: Tensor) -> Var {
        let v = self.value(x) * &c;
        self.push(v, Op::MulConst(x, c))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let v = self.value(x).mapv(crate::numerics::sigmoid);
        self.push(v, Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let v = self.value(x).mapv(f64::tanh);
        self.push(v, Op::Tanh(x))
    }

    /// Tanh-approximated GELU.
    pub fn gelu(&mut self, x: Var) -> Var {
        let v = self.value(x).mapv(gelu);
        self.push(v, Op::Gelu(x))
    }

    /// Rows `idx[i]` of `x`, in order; indices may repeat.
    pub fn gather_rows(&mut self, x: Var, idx: Vec<usize>) -> Var {
        let v = self.value(x).select(Axis(0), &idx);
        self.push(v, Op::Gather(x, idx))
    }

    /// Columns `start..start + len`.
    pub fn cols(&mut self, x: Var, start: usize, len: usize) -> Var {
        let v = self.value(x).slice(s![.., start..start + len]).to_owned();
        self.push(v, Op::Cols(x, start))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let v = ndarray::concatenate(Axis(0), &views).expect("equal column counts");
        self.push(v, Op::ConcatRows(parts.to_vec()))
    }

    /// Row-wise layer normalisation with a `1 × d` gain and bias.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Var {
        let xv = self.value(x);
        let d = xv.ncols() as f64;
        let mut normed = xv.clone();
        let mut inv_std = Vec::with_capacity(xv.nrows());
        for mut row in normed.rows_mut() {
            let mean = row.sum() / d;
            let var = row.iter().map(|&a| (a - mean) * (a - mean)).sum::<f64>() / d;
            let is = 1.0 / (var + eps).sqrt();
            row.mapv_inplace(|a| (a - mean) * is);
            inv_std.push(is);
        }
        let v = &normed * self.value(gain) + self.value(bias);
        self.push(
            v,
            Op::LayerNorm {
                x,
                gain,
                bias,
                normed,
                inv_std,
            },
        )
    }

    /// Scaled dot-product multi-head attention over `B` sequences stacked as
    /// `B·T` rows. Query rows with no admissible key produce zeros.
    pub fn attention(&mut self, q: Var, k: Var, v: Var, spec: AttentionSpec) -> Var {
        let (qv, kv, vv) = (self.value(q), self.value(k), self.value(v));
        let rows = qv.nrows();
        let d = qv.ncols();
        let t = spec.seq_len;
        let h = spec.heads;
        let dh = d / h;
        let scale = 1.0 / (dh as f64).sqrt();
        let batches = rows / t;
        let (qs, ks, vs) = (
            qv.as_slice().expect("standard"),
            kv.as_slice().expect("standard"),
            vv.as_slice().expect("standard"),
        );
        let mut out = Tensor::zeros((rows, d));
        let os = out.as_slice_mut().expect("standard");
        let mut probs = vec![0.0; batches * h * t * t];
        let mut logits = vec![0.0; t];
        for b in 0..batches {
            for head in 0..h {
                let c0 = head * dh;
                for i in 0..t {
                    let qi = &qs[(b * t + i) * d + c0..(b * t + i) * d + c0 + dh];
                    let mut max = f64::NEG_INFINITY;
                    let mut any = false;
                    for j in 0..t {
                        if !spec.key_valid[b * t + j] || (spec.causal && j > i) {
                            continue;
                        }
                        let kj = &ks[(b * t + j) * d + c0..(b * t + j) * d + c0 + dh];
                        let dot: f64 = qi.iter().zip(kj).map(|(a, c)| a * c).sum();
                        logits[j] = dot * scale;
                        max = max.max(logits[j]);
                        any = true;
                    }
                    if !any {
                        continue;
                    }
                    let p = &mut probs[((b * h + head) * t + i) * t..((b * h + head) * t + i + 1) * t];
                    let mut sum = 0.0;
                    for j in 0..t {
                        if !spec.key_valid[b * t + j] || (spec.causal && j > i) {
                            continue;
                        }
                        p[j] = (logits[j] - max).exp();
                        sum += p[j];
                    }
                    let o = &mut os[(b * t + i) * d + c0..(b * t + i) * d + c0 + dh];
                    for j in 0..t {
                        if p[j] == 0.0 {
                            continue;
                        }
                        p[j] /= sum;
                        let vj = &vs[(b * t + j) * d + c0..(b * t + j) * d + c0 + dh];
                        for (oo, &vvv) in o.iter_mut().zip(vj) {
                            *oo += p[j] * vvv;
                        }
                    }
                }
            }
        }
        self.push(out, Op::Attention { q, k, v, spec, probs })
    }

    /// `out[i, j] = h[i] · c[i·w + j]` where `w = c.rows / h.rows`.
    pub fn row_dot(&mut self, h: Var, c: Var) -> Var {
        let (hv, cv) = (self.value(h), self.value(c));
        let n = hv.nrows();
        let w = cv.nrows() / n;
        let mut out = Tensor::zeros((n, w));
        for i in 0..n {
            let hi = hv.row(i);
            for j in 0..w {
                out[[i, j]] = hi.dot(&cv.row(i * w + j));
            }
        }
        self.push(out, Op::RowDot(h, c))
    }

    /// Scalar node whose gradient with respect to `input` was computed by
    /// `f` during the forward pass.
    pub fn loss<F>(&mut self, input: Var, f: F) -> Var
    where
        F: FnOnce(&Tensor) -> (f64, Tensor),
    {
        let (value, grad) = f(self.value(input));
        self.push(Tensor::from_elem((1, 1), value), Op::Loss(input, grad))
    }

    /// Reverse pass from a scalar node. Returns gradients indexed by parameter
    /// id; parameters not reached by the loss are `None`.
    pub fn backward(&self, loss: Var) -> Result<Vec<Option<Tensor>>> {
        if loss.0 >= self.nodes.len() {
            return Err(Error::Usage("backward called before forward".into()));
        }
        if self.value(loss).dim() != (1, 1) {
            return Err(Error::Usage("backward needs a scalar loss".into()));
        }
        let mut grads: Vec<Option<Tensor>> = Vec::with_capacity(loss.0 + 1);
        grads.resize_with(loss.0 + 1, || None);
        grads[loss.0] = Some(Tensor::from_elem((1, 1), 1.0));
        let mut params: Vec<Option<Tensor>> = Vec::new();

        fn acc(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
            match &mut grads[v.0] {
                Some(existing) => *existing += &g,
                slot => *slot = Some(g),
            }
        }

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Constant => {}
                Op::Param(id) => {
                    if params.len() <= *id {
                        params.resize_with(id + 1, || None);
                    }
                    params[*id] = Some(standard(g));
                }
                Op::MatMul(a, b) => {
                    let ga = g.dot(&self.value(*b).t());
                    let gb = self.value(*a).t().dot(&g);
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::MatMulT(a, b) => {
                    let ga = g.dot(self.value(*b));
                    let gb = g.t().dot(self.value(*a));
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *a, g.clone());
                    acc(&mut grads, *b, g);
                }
                Op::Sub(a, b) => {
                    acc(&mut grads, *a, g.clone());
                    acc(&mut grads, *b, -g);
                }
                Op::Mul(a, b) => {
                    let ga = &g * self.value(*b);
                    let gb = &g * self.value(*a);
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::AddRow(x, bias) => {
                    let gb = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    acc(&mut grads, *x, g);
                    acc(&mut grads, *bias, gb);
                }
                Op::ScaleRows(x, scale) => {
                    let mut gx = g;
                    for (mut row, &s) in gx.rows_mut().into_iter().zip(scale) {
                        row *= s;
                    }
                    acc(&mut grads, *x, gx);
                }
                Op::MulConst(x, c) => acc(&mut grads, *x, g * c),
                Op::Sigmoid(x) => {
                    let mut gx = g;
                    gx.zip_mut_with(&node.value, |gi, &y| *gi *= y * (1.0 - y));
                    acc(&mut grads, *x, gx);
                }
                Op::Tanh(x) => {
                    let mut gx = g;
                    gx.zip_mut_with(&node.value, |gi, &y| *gi *= 1.0 - y * y);
                    acc(&mut grads, *x, gx);
                }
                Op::Gelu(x) => {
                    let mut gx = g;
                    gx.zip_mut_with(self.value(*x), |gi, &a| *gi *= gelu_grad(a));
                    acc(&mut grads, *x, gx);
                }
                Op::Gather(x, rows) => {
                    let mut gx = Tensor::zeros(self.value(*x).raw_dim());
                    for (i, &r) in rows.iter().enumerate() {
                        let mut dst = gx.row_mut(r);
                        dst += &g.row(i);
                    }
                    acc(&mut grads, *x, gx);
                }
                Op::Cols(x, start) => {
                    let mut gx = Tensor::zeros(self.value(*x).raw_dim());
                    gx.slice_mut(s![.., *start..*start + g.ncols()]).assign(&g);
                    acc(&mut grads, *x, gx);
                }
                Op::ConcatRows(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let n = self.value(p).nrows();
                        acc(&mut grads, p, g.slice(s![offset..offset + n, ..]).to_owned());
                        offset += n;
                    }
                }
                Op::LayerNorm {
                    x,
                    gain,
                    bias,
                    normed,
                    inv_std,
                } => {
                    let gamma = self.value(*gain);
                    let gbias = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    let ggain = (&g * normed).sum_axis(Axis(0)).insert_axis(Axis(0));
                    let d = g.ncols() as f64;
                    let mut gx = &g * gamma;
                    for ((mut row, xh), &is) in gx.rows_mut().into_iter().zip(normed.rows()).zip(inv_std) {
                        let mean_g = row.sum() / d;
                        let mean_gx = row.iter().zip(xh).map(|(a, b)| a * b).sum::<f64>() / d;
                        row.zip_mut_with(&xh, |r, &xhat| *r = is * (*r - mean_g - xhat * mean_gx));
                    }
                    acc(&mut grads, *x, gx);
                    acc(&mut grads, *gain, ggain);
                    acc(&mut grads, *bias, gbias);
                }
                Op::Attention { q, k, v, spec, probs } => {
                    let (gq, gk, gv) = self.attention_backward(*q, *k, *v, spec, probs, &g);
                    acc(&mut grads, *q, gq);
                    acc(&mut grads, *k, gk);
                    acc(&mut grads, *v, gv);
                }
                Op::RowDot(h, c) => {
                    let (hv, cv) = (self.value(*h), self.value(*c));
                    let w = g.ncols();
                    let mut gh = Tensor::zeros(hv.raw_dim());
                    let mut gc = Tensor::zeros(cv.raw_dim());
                    for i in 0..hv.nrows() {
                        for j in 0..w {
                            let gij = g[[i, j]];
                            if gij == 0.0 {
                                continue;
                            }
                            gh.row_mut(i).scaled_add(gij, &cv.row(i * w + j));
                            gc.row_mut(i * w + j).scaled_add(gij, &hv.row(i));
                        }
                    }
                    acc(&mut grads, *h, gh);
                    acc(&mut grads, *c, gc);
                }
                Op::Loss(input, grad) => acc(&mut grads, *input, grad * g[[0, 0]]),
            }
        }
        Ok(params)
    }

    fn attention_backward(
        &self,
        q: Var,
        k: Var,
        v: Var,
        spec: &AttentionSpec,
        probs: &[f64],
        g: &Tensor,
    ) -> (Tensor, Tensor, Tensor) {
        let (qv, kv, vv) = (self.value(q), self.value(k), self.value(v));
        let rows = qv.nrows();
        let d = qv.ncols();
        let t = spec.seq_len;
        let h = spec.heads;
        let dh = d / h;
        let scale = 1.0 / (dh as f64).sqrt();
        let (qs, ks, vs) = (
            qv.as_slice().expect("standard"),
            kv.as_slice().expect("standard"),
            vv.as_slice().expect("standard"),
        );
        let gs = g.as_standard_layout();
        let gs = gs.as_slice().expect("standard");
        let mut gq = Tensor::zeros((rows, d));
        let mut gk = Tensor::zeros((rows, d));
        let mut gv = Tensor::zeros((rows, d));
        let (gqs, gks, gvs) = (
            gq.as_slice_mut().expect("standard"),
            gk.as_slice_mut().expect("standard"),
            gv.as_slice_mut().expect("standard"),
        );
        let mut dp = vec![0.0; t];
        for b in 0..rows / t {
            for head in 0..h {
                let c0 = head * dh;
                for i in 0..t {
                    let p = &probs[((b * h + head) * t + i) * t..((b * h + head) * t + i + 1) * t];
                    let oi = (b * t + i) * d + c0;
                    let go = &gs[oi..oi + dh];
                    let mut dot_sum = 0.0;
                    for j in 0..t {
                        if p[j] == 0.0 {
                            dp[j] = 0.0;
                            continue;
                        }
                        let vj = (b * t + j) * d + c0;
                        dp[j] = go.iter().zip(&vs[vj..vj + dh]).map(|(a, c)| a * c).sum();
                        dot_sum += p[j] * dp[j];
                        for (gvv, &goo) in gvs[vj..vj + dh].iter_mut().zip(go) {
                            *gvv += p[j] * goo;
                        }
                    }
                    for j in 0..t {
                        if p[j] == 0.0 {
                            continue;
                        }
                        let ds = p[j] * (dp[j] - dot_sum) * scale;
                        let kj = (b * t + j) * d + c0;
                        for c in 0..dh {
                            gqs[oi + c] += ds * ks[kj + c];
                            gks[kj + c] += ds * qs[oi + c];
                        }
                    }
                }
            }
        }
        (gq, gk, gv)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    /// Central-difference check of every parameter coordinate of a graph
    /// built by `build` from the given parameter tensors.
    fn check<F>(params: Vec<Tensor>, build: F) -> f64
    where
        F: Fn(&mut Graph, &[Var]) -> Var,
    {
        let eval = |ps: &[Tensor]| {
            let mut g = Graph::new();
            let vars: Vec<Var> = ps.iter().enumerate().map(|(i, p)| g.param(i, p.clone())).collect();
            let out = build(&mut g, &vars);
            (g.scalar(out), g.backward(out).unwrap())
        };
        let (_, analytic) = eval(&params);
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for pi in 0..params.len() {
            for idx in 0..params[pi].len() {
                let mut plus = params.clone();
                let mut minus = params.clone();
                plus[pi].as_slice_mut().unwrap()[idx] += h;
                minus[pi].as_slice_mut().unwrap()[idx] -= h;
                let fd = (eval(&plus).0 - eval(&minus).0) / (2.0 * h);
                let a = analytic[pi].as_ref().map_or(0.0, |t| t.as_slice().unwrap()[idx]);
                worst = worst.max((fd - a).abs() / fd.abs().max(a.abs()).max(1e-8));
            }
        }
        worst
    }

    fn sum_sq(g: &mut Graph, x: Var) -> Var {
        g.loss(x, |t| (t.iter().map(|a| a * a).sum::<f64>() * 0.5, t.clone()))
    }

    #[test]
    fn product_rule() {
        let mut g = Graph::new();
        let x = g.param(0, array![[3.0]]);
        let y = g.param(1, array![[-2.0]]);
        let p = g.mul(x, y);
        let l = g.loss(p, |t| (t[[0, 0]], array![[1.0]]));
        let grads = g.backward(l).unwrap();
        assert_eq!(grads[0].as_ref().unwrap()[[0, 0]], -2.0);
        assert_eq!(grads[1].as_ref().unwrap()[[0, 0]], 3.0);
    }

    #[test]
    fn backward_needs_a_forward_scalar() {
        let g = Graph::new();
        assert!(matches!(g.backward(Var(0)), Err(Error::Usage(_))));
        let mut g = Graph::new();
        let x = g.constant(array![[1.0, 2.0]]);
        assert!(g.backward(x).is_err());
    }

    #[test]
    fn dense_ops() {
        let a = array![[0.3, -0.7, 1.1], [0.5, 0.2, -0.4]];
        let w = array![[0.1, 0.9], [-0.3, 0.4], [0.8, -0.6]];
        let b = array![[0.05, -0.2]];
        let err = check(vec![a, w, b], |g, v| {
            let m = g.matmul(v[0], v[1]);
            let m = g.add_row(m, v[2]);
            let s = g.sigmoid(m);
            let t = g.tanh(m);
            let u = g.gelu(m);
            let p = g.mul(s, t);
            let q = g.sub(p, u);
            let r = g.scale_rows(q, vec![0.5, -2.0]);
            let c = g.mul_const(r, array![[1.0, 0.0], [2.0, 1.5]]);
            sum_sq(g, c)
        });
        assert!(err < 1e-7, "{err}");
    }

    #[test]
    fn structural_ops() {
        let a = array![[0.3, -0.7, 1.1], [0.5, 0.2, -0.4], [1.0, -1.0, 0.25]];
        let b = array![[0.2, 0.1, -0.3], [0.6, -0.5, 0.9]];
        let err = check(vec![a, b], |g, v| {
            let ga = g.gather_rows(v[0], vec![2, 0, 2]);
            let c = g.concat_rows(&[ga, v[1]]);
            let cols = g.cols(c, 1, 2);
            let mt = g.matmul_t(cols, cols);
            let dots = g.row_dot(v[1], ga);
            let l1 = sum_sq(g, mt);
            let l2 = sum_sq(g, dots);
            g.add(l1, l2)
        });
        assert!(err < 1e-7, "{err}");
    }

    #[test]
    fn layer_norm_gradients() {
        let x = array![[0.3, -0.7, 1.1, 0.2], [0.5, 0.2, -0.4, 2.0]];
        let gain = array![[1.2, 0.8, -0.5, 1.0]];
        let bias = array![[0.1, 0.0, -0.2, 0.3]];
        let err = check(vec![x, gain, bias], |g, v| {
            let y = g.layer_norm(v[0], v[1], v[2], 1e-5);
            let w = g.constant(array![[1.0], [-2.0], [0.5], [3.0]]);
            let z = g.matmul(y, w);
            let s = g.sigmoid(z);
            sum_sq(g, s)
        });
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn attention_gradients_and_masking() {
        // two sequences of length 3, two heads of width 2
        let mk = |seed: f64| {
            Tensor::from_shape_fn((6, 4), |(i, j)| ((i * 4 + j) as f64 * 0.37 + seed).sin())
        };
        for causal in [true, false] {
            let spec = AttentionSpec {
                heads: 2,
                seq_len: 3,
                causal,
                key_valid: vec![false, true, true, true, true, true],
            };
            let err = check(vec![mk(0.1), mk(1.3), mk(2.7)], |g, v| {
                let o = g.attention(v[0], v[1], v[2], spec.clone());
                let w = g.constant(Tensor::from_shape_fn((4, 1), |(i, _)| i as f64 - 1.5));
                let z = g.matmul(o, w);
                let t = g.tanh(z);
                sum_sq(g, t)
            });
            assert!(err < 1e-6, "causal={causal}: {err}");
        }
        // row 0 has no admissible key under the causal mask → zeros
        let mut g = Graph::new();
        let q = g.constant(mk(0.1));
        let k = g.constant(mk(1.3));
        let v = g.constant(mk(2.7));
        let spec = AttentionSpec {
            heads: 2,
            seq_len: 3,
            causal: true,
            key_valid: vec![false, true, true, true, true, true],
        };
        let o = g.attention(q, k, v, spec);
        assert!(g.value(o).row(0).iter().all(|&a| a == 0.0));
    }
}
