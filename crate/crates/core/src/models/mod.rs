//! Next-item score producers on top of [`crate::autograd`].
//!
//! All three architectures emit one hidden vector per input position and
//! score items by inner product with the (tied) item embedding table:
//!
//! * [`Architecture::Gru`] — stacked GRU layers, left to right;
//! * [`Architecture::TransformerCausal`] — pre-norm blocks with a causal
//!   attention mask and learned positional embeddings;
//! * [`Architecture::TransformerBidirectional`] — the same blocks without
//!   the causal mask, for masked-item training.

mod gradcheck;
mod gru;
mod params;
mod transformer;

use std::fmt;
use std::str::FromStr;

use ndarray::{s, Array2};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

pub use gradcheck::{finite_difference_check, gradient_check, CheckReport, GradCheckConfig};
pub use params::{NamedTensor, ParameterSet};

use crate::autograd::{Graph, Tensor, Var};
use crate::data::{ItemId, PAD};
use crate::metering::Meter;
use crate::{Error, Result, Rng};

pub(crate) const ITEM_EMB: &str = "item_emb";
pub(crate) const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Architecture {
    Gru,
    TransformerCausal,
    TransformerBidirectional,
}

impl Architecture {
    pub const ALL: [Architecture; 3] = [
        Architecture::Gru,
        Architecture::TransformerCausal,
        Architecture::TransformerBidirectional,
    ];

    /// Model family name used on the command line.
    pub fn model_name(self) -> &'static str {
        match self {
            Architecture::Gru => "gru4rec",
            Architecture::TransformerCausal => "sasrec",
            Architecture::TransformerBidirectional => "bert4rec-mini",
        }
    }

    pub fn is_bidirectional(self) -> bool {
        self == Architecture::TransformerBidirectional
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.model_name())
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gru" | "gru4rec" => Ok(Architecture::Gru),
            "transformer-causal" | "sasrec" => Ok(Architecture::TransformerCausal),
            "transformer-bidirectional" | "bert4rec-mini" | "bert4rec" => {
                Ok(Architecture::TransformerBidirectional)
            }
            other => Err(Error::Config(format!("unknown model `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub architecture: Architecture,
    pub dim: usize,
    pub layers: usize,
    /// Attention heads; ignored by the GRU.
    pub heads: usize,
    pub max_len: usize,
    pub dropout: f64,
    /// Standard deviation of the truncated-normal initialiser.
    pub init_scale: f64,
}

impl ModelConfig {
    pub fn new(architecture: Architecture) -> Self {
        Self {
            architecture,
            dim: 64,
            layers: 2,
            heads: 2,
            max_len: 50,
            dropout: 0.2,
            init_scale: 0.02,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if self.dim == 0 {
            return fail("dim must be positive");
        }
        if self.layers == 0 {
            return fail("layers must be at least 1");
        }
        if self.max_len == 0 {
            return fail("max_len must be at least 1");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail("dropout must lie in [0, 1)");
        }
        if !(self.init_scale >= 0.0 && self.init_scale.is_finite()) {
            return fail("init_scale must be finite and non-negative");
        }
        if self.architecture != Architecture::Gru && (self.heads == 0 || self.dim % self.heads != 0) {
            return fail("dim must be divisible by heads");
        }
        Ok(())
    }
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::new(Architecture::TransformerCausal)
    }
}

/// Per-parameter gradients aligned with a [`ParameterSet`].
pub type Gradients = Vec<Tensor>;

/// Parameters of a [`ParameterSet`] placed on a graph.
pub struct Bound<'a> {
    params: &'a ParameterSet,
    vars: Vec<Var>,
}

impl Bound<'_> {
    pub fn get(&self, name: &str) -> Var {
        let idx = self
            .params
            .index(name)
            .unwrap_or_else(|| panic!("parameter `{name}` missing"));
        self.vars[idx]
    }
}

/// Training-mode randomness; `None` means evaluation mode.
pub type DropoutRng<'a> = Option<&'a mut Rng>;

/// A model definition: architecture hyperparameters plus catalog size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeqModel {
    pub config: ModelConfig,
    pub num_items: usize,
}

impl SeqModel {
    pub fn new(config: ModelConfig, num_items: usize) -> Result<Self> {
        config.validate()?;
        if num_items < 2 {
            return Err(Error::DegenerateCatalog(num_items));
        }
        Ok(Self { config, num_items })
    }

    pub fn mask_id(&self) -> ItemId {
        self.num_items as ItemId + 1
    }

    pub fn init_parameters(&self, rng: &mut Rng) -> ParameterSet {
        let c = &self.config;
        let mut set = ParameterSet::new();
        let mut emb = params::truncated_normal(rng, (self.num_items + 2, c.dim), c.init_scale);
        emb.row_mut(PAD as usize).fill(0.0);
        set.push(ITEM_EMB, emb);
        match c.architecture {
            Architecture::Gru => gru::init(&mut set, c, rng),
            _ => transformer::init(&mut set, c, rng),
        }
        set
    }

    pub fn bind<'a>(&self, g: &mut Graph, params: &'a ParameterSet) -> Bound<'a> {
        let vars = params
            .tensors()
            .iter()
            .enumerate()
            .map(|(i, t)| g.param(i, t.clone()))
            .collect();
        Bound { params, vars }
    }

    fn check_ids(&self, ids: &[ItemId]) -> Result<()> {
        let max = self.mask_id();
        match ids.iter().find(|&&id| id > max) {
            Some(&id) => Err(Error::InvalidId { id, max }),
            None => Ok(()),
        }
    }

    /// Hidden states for a `batch × max_len` row-major block of item IDs, as a
    /// `(batch·max_len) × dim` node. Rows at padding positions are zero.
    pub fn forward(
        &self,
        g: &mut Graph,
        p: &Bound,
        ids: &[ItemId],
        dropout: DropoutRng,
    ) -> Result<Var> {
        let t = self.config.max_len;
        if ids.len() % t != 0 {
            return Err(Error::Usage(format!(
                "input length {} is not a multiple of max_len {t}",
                ids.len()
            )));
        }
        self.check_ids(ids)?;
        let hidden = match self.config.architecture {
            Architecture::Gru => gru::forward(self, g, p, ids, dropout),
            Architecture::TransformerCausal => transformer::forward(self, g, p, ids, true, dropout),
            Architecture::TransformerBidirectional => {
                transformer::forward(self, g, p, ids, false, dropout)
            }
        };
        if crate::numerics::debug_numerics() {
            assert!(
                g.value(hidden).iter().all(|v| v.is_finite()),
                "non-finite hidden state"
            );
        }
        Ok(hidden)
    }

    /// Evaluation-mode hidden states as a plain matrix.
    pub fn hidden_states(&self, params: &ParameterSet, ids: &[ItemId]) -> Result<Tensor> {
        let mut g = Graph::new();
        let bound = self.bind(&mut g, params);
        let h = self.forward(&mut g, &bound, ids, None)?;
        Ok(g.value(h).clone())
    }

    /// `[real items × dim]` view of the embedding table as a graph node.
    pub(crate) fn real_item_rows(&self, g: &mut Graph, p: &Bound) -> Var {
        let emb = p.get(ITEM_EMB);
        g.gather_rows(emb, (1..=self.num_items).collect())
    }
}

/// Scores of every real item for one hidden vector: `r_k = h · e_k`.
pub fn score_full(params: &ParameterSet, hidden: &[f64]) -> Vec<f64> {
    let emb = params.item_embeddings();
    let real = emb.slice(s![1..emb.nrows() - 1, ..]);
    let h = ndarray::ArrayView1::from(hidden);
    let scores = real.dot(&h).to_vec();
    if crate::numerics::debug_numerics() {
        assert!(scores.iter().all(|v| v.is_finite()), "non-finite score");
    }
    scores
}

/// Scores for many hidden vectors at once (`rows × |I|`).
pub fn score_full_batch(params: &ParameterSet, hidden: &Tensor) -> Array2<f64> {
    let emb = params.item_embeddings();
    let real = emb.slice(s![1..emb.nrows() - 1, ..]);
    hidden.dot(&real.t())
}

/// Scores only for `candidates`; counts one score evaluation per candidate.
pub fn score_candidates(
    params: &ParameterSet,
    hidden: &[f64],
    candidates: &[ItemId],
    meter: &mut Meter,
) -> Result<Vec<f64>> {
    let emb = params.item_embeddings();
    let num_items = emb.nrows() - 2;
    let h = ndarray::ArrayView1::from(hidden);
    let scores = candidates
        .iter()
        .map(|&c| {
            if c == PAD || c as usize > num_items {
                return Err(Error::InvalidCandidate(c));
            }
            Ok(emb.row(c as usize).dot(&h))
        })
        .collect::<Result<Vec<_>>>()?;
    meter.add_scores(candidates.len());
    Ok(scores)
}

/// Inverted dropout applied as a constant mask.
pub(crate) fn dropout(g: &mut Graph, x: Var, rate: f64, rng: DropoutRng) -> Var {
    let Some(rng) = rng else { return x };
    if rate == 0.0 {
        return x;
    }
    let keep = 1.0 - rate;
    let shape = g.value(x).raw_dim();
    let mask = Tensor::from_shape_simple_fn(shape, || {
        if rng.gen::<f64>() < keep {
            1.0 / keep
        } else {
            0.0
        }
    });
    g.mul_const(x, mask)
}

/// Convert raw graph gradients into a full set aligned with `params`, with
/// the padding row of the item table forced to zero.
pub fn collect_gradients(params: &ParameterSet, raw: Vec<Option<Tensor>>) -> Gradients {
    let mut raw = raw.into_iter();
    let mut grads: Gradients = params
        .tensors()
        .iter()
        .map(|t| raw.next().flatten().unwrap_or_else(|| Tensor::zeros(t.raw_dim())))
        .collect();
    if let Some(i) = params.index(ITEM_EMB) {
        grads[i].row_mut(PAD as usize).fill(0.0);
    }
    grads
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng_from_seed;

    fn tiny(arch: Architecture) -> SeqModel {
        let config = ModelConfig {
            architecture: arch,
            dim: 8,
            layers: 2,
            heads: 2,
            max_len: 6,
            dropout: 0.0,
            init_scale: 0.3,
        };
        SeqModel::new(config, 12).unwrap()
    }

    #[test]
    fn config_validation() {
        let mut c = ModelConfig::default();
        assert!(c.validate().is_ok());
        c.heads = 3;
        assert!(c.validate().is_err());
        c.architecture = Architecture::Gru;
        assert!(c.validate().is_ok());
        c.dropout = 1.0;
        assert!(c.validate().is_err());
        assert!(SeqModel::new(ModelConfig::default(), 1).is_err());
    }

    #[test]
    fn init_is_deterministic_with_zero_pad_row() {
        for arch in Architecture::ALL {
            let m = tiny(arch);
            let a = m.init_parameters(&mut rng_from_seed(3));
            let b = m.init_parameters(&mut rng_from_seed(3));
            assert_eq!(a, b);
            let emb = a.item_embeddings();
            assert_eq!(emb.row(0).iter().map(|v| v * v).sum::<f64>(), 0.0);
            assert_eq!(emb.nrows(), 14);
        }
    }

    #[test]
    fn zero_scale_zeroes_dense_weights() {
        let mut m = tiny(Architecture::TransformerCausal);
        m.config.init_scale = 0.0;
        let p = m.init_parameters(&mut rng_from_seed(0));
        for (name, t) in p.names().iter().zip(p.tensors()) {
            if name.ends_with(".g") {
                assert!(t.iter().all(|&v| v == 1.0), "{name}");
            } else {
                assert!(t.iter().all(|&v| v == 0.0), "{name}");
            }
        }
    }

    #[test]
    fn rejects_out_of_range_ids() {
        let m = tiny(Architecture::Gru);
        let p = m.init_parameters(&mut rng_from_seed(0));
        let err = m.hidden_states(&p, &[0, 0, 0, 0, 1, 14]).unwrap_err();
        assert!(matches!(err, Error::InvalidId { id: 14, max: 13 }));
    }

    #[test]
    fn causality_and_bidirectionality() {
        let base: Vec<ItemId> = vec![0, 3, 5, 7, 2, 9];
        let mut changed = base.clone();
        changed[4] = 11;
        for arch in Architecture::ALL {
            let m = tiny(arch);
            let p = m.init_parameters(&mut rng_from_seed(8));
            let a = m.hidden_states(&p, &base).unwrap();
            let b = m.hidden_states(&p, &changed).unwrap();
            let prefix_same = (0..4).all(|r| a.row(r) == b.row(r));
            if arch.is_bidirectional() {
                assert!(!prefix_same, "bidirectional model ignored the future");
            } else {
                assert!(prefix_same, "{arch:?} leaked future input");
            }
            assert_ne!(a.row(4), b.row(4));
        }
    }

    #[test]
    fn all_pad_rows_are_zero() {
        for arch in Architecture::ALL {
            let m = tiny(arch);
            let p = m.init_parameters(&mut rng_from_seed(1));
            let h = m.hidden_states(&p, &[0; 12]).unwrap();
            assert!(h.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn scoring_paths_agree() {
        let m = tiny(Architecture::TransformerCausal);
        let p = m.init_parameters(&mut rng_from_seed(2));
        let h = m.hidden_states(&p, &[0, 0, 1, 2, 3, 4]).unwrap();
        let hv = h.row(5).to_vec();
        let full = score_full(&p, &hv);
        assert_eq!(full.len(), 12);
        let mut meter = Meter::default();
        let cands = [4, 4, 12, 1];
        let sc = score_candidates(&p, &hv, &cands, &mut meter).unwrap();
        for (c, s) in cands.iter().zip(&sc) {
            assert!((full[*c as usize - 1] - s).abs() < 1e-10);
        }
        assert_eq!(meter.score_evals, 4);
        assert!(matches!(
            score_candidates(&p, &hv, &[0], &mut meter),
            Err(Error::InvalidCandidate(0))
        ));
        assert!(score_full(&p, &vec![0.0; 8]).iter().all(|&s| s == 0.0));
        // h = e_k / |e_k|² scores exactly one on item k
        let e3 = p.item_embeddings().row(3).to_vec();
        let n2: f64 = e3.iter().map(|v| v * v).sum();
        let unit: Vec<f64> = e3.iter().map(|v| v / n2).collect();
        assert!((score_full(&p, &unit)[2] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dropout_changes_only_training_mode() {
        let mut m = tiny(Architecture::TransformerCausal);
        m.config.dropout = 0.5;
        let p = m.init_parameters(&mut rng_from_seed(2));
        let ids = [0, 0, 1, 2, 3, 4];
        assert_eq!(m.hidden_states(&p, &ids).unwrap(), m.hidden_states(&p, &ids).unwrap());
        let mut g = Graph::new();
        let b = m.bind(&mut g, &p);
        let mut rng = rng_from_seed(0);
        let h = m.forward(&mut g, &b, &ids, Some(&mut rng)).unwrap();
        assert_ne!(g.value(h), &m.hidden_states(&p, &ids).unwrap());
    }
}
