//! Training objectives as pure functions from scores to a scalar.
//!
//! Three target layouts are supported:
//!
//! * **last timestep** — one evaluated position per sequence (BPR, BPR-max,
//!   TOP1, TOP1-max, CE-last);
//! * **all timesteps** — every valid position predicts its next item (BCE and
//!   the all-timestep cross-entropy `ce-all`);
//! * **masked** — randomly masked positions predict their own item (MLM).
//!
//! Sampled objectives only ever see the scores of the requested candidates;
//! softmax objectives see complete rows over the catalog. Every function has a
//! `*_with_grad` twin returning the analytic gradient with respect to its
//! input scores. All arithmetic is done in `f64`.

mod mlm;
mod pairwise;
mod softmax;

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

pub use mlm::{apply_mlm_masking, mlm_inference_input, MaskedSequence};

use crate::data::ItemId;
use crate::{Error, Result};

use pairwise::RowKernel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    Bpr,
    BprMax,
    Top1,
    Top1Max,
    Bce,
    CeLast,
    CeAll,
    Mlm,
}

/// Which positions of a sequence a loss is attached to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    LastTimestep,
    AllTimesteps,
    Masked,
}

impl LossKind {
    pub const ALL: [LossKind; 8] = [
        LossKind::Bpr,
        LossKind::BprMax,
        LossKind::Top1,
        LossKind::Top1Max,
        LossKind::Bce,
        LossKind::CeLast,
        LossKind::CeAll,
        LossKind::Mlm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LossKind::Bpr => "bpr",
            LossKind::BprMax => "bpr-max",
            LossKind::Top1 => "top1",
            LossKind::Top1Max => "top1-max",
            LossKind::Bce => "bce",
            LossKind::CeLast => "ce-last",
            LossKind::CeAll => "ce-all",
            LossKind::Mlm => "mlm",
        }
    }

    /// Whether the loss consumes sampled negatives.
    pub fn is_sampled(self) -> bool {
        matches!(
            self,
            LossKind::Bpr | LossKind::BprMax | LossKind::Top1 | LossKind::Top1Max | LossKind::Bce
        )
    }

    pub fn layout(self) -> Layout {
        match self {
            LossKind::Bpr | LossKind::BprMax | LossKind::Top1 | LossKind::Top1Max | LossKind::CeLast => {
                Layout::LastTimestep
            }
            LossKind::Bce | LossKind::CeAll => Layout::AllTimesteps,
            LossKind::Mlm => Layout::Masked,
        }
    }

    fn row_kernel(self) -> Option<RowKernel> {
        Some(match self {
            LossKind::Bpr => pairwise::bpr_row,
            LossKind::BprMax => pairwise::bpr_max_row,
            LossKind::Top1 => pairwise::top1_row,
            LossKind::Top1Max => pairwise::top1_max_row,
            LossKind::Bce => pairwise::bce_row,
            _ => return None,
        })
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LossKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown loss `{s}`")))
    }
}

pub const DEFAULT_MASK_PROB: f64 = 0.2;

/// Fully determines a training objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossSpec {
    pub kind: LossKind,
    /// Negatives per evaluated position; present iff the kind is sampled.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub negatives: Option<usize>,
    /// Masking probability; present iff the kind is `mlm`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_prob: Option<f64>,
}

impl LossSpec {
    /// Spec with default parameters: one negative for sampled kinds, a mask
    /// probability of 0.2 for MLM.
    pub fn new(kind: LossKind) -> Self {
        Self {
            kind,
            negatives: kind.is_sampled().then_some(1),
            mask_prob: (kind == LossKind::Mlm).then_some(DEFAULT_MASK_PROB),
        }
    }

    pub fn with_negatives(kind: LossKind, negatives: usize) -> Result<Self> {
        let spec = Self {
            negatives: Some(negatives),
            ..Self::new(kind)
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_mask_prob(mask_prob: f64) -> Result<Self> {
        let spec = Self {
            mask_prob: Some(mask_prob),
            ..Self::new(LossKind::Mlm)
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn negatives(&self) -> usize {
        self.negatives.unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        match (self.kind.is_sampled(), self.negatives) {
            (true, Some(n)) if n >= 1 => {}
            (true, _) => return Err(Error::Config(format!("{} needs negatives >= 1", self.kind))),
            (false, Some(_)) => {
                return Err(Error::Config(format!("{} does not take negatives", self.kind)))
            }
            (false, None) => {}
        }
        match (self.kind == LossKind::Mlm, self.mask_prob) {
            (true, Some(p)) if p > 0.0 && p < 1.0 => Ok(()),
            (true, _) => Err(Error::Config("mask_prob must lie in (0, 1)".into())),
            (false, Some(_)) => Err(Error::Config(format!("{} does not take mask_prob", self.kind))),
            (false, None) => Ok(()),
        }
    }

    /// Short label such as `bpr-max-100`, `ce-all` or `mlm`.
    pub fn label(&self) -> String {
        match self.negatives {
            Some(n) => format!("{}-{n}", self.kind),
            None => self.kind.to_string(),
        }
    }
}

impl fmt::Display for LossSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "loss={}", self.kind)?;
        if let Some(n) = self.negatives {
            write!(f, " negatives={n}")?;
        }
        if let Some(p) = self.mask_prob {
            write!(f, " mask_prob={p}")?;
        }
        Ok(())
    }
}

/// Parses `loss=<kind> [negatives=N] [mask_prob=P]`.
impl FromStr for LossSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut kind = None;
        let mut negatives = None;
        let mut mask_prob = None;
        for token in s.split_whitespace() {
            let (key, value) = token
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("expected key=value, got `{token}`")))?;
            let bad = |_| Error::Config(format!("bad value for {key}: `{value}`"));
            match key {
                "loss" => kind = Some(value.parse::<LossKind>()?),
                "negatives" => negatives = Some(value.parse::<usize>().map_err(bad)?),
                "mask_prob" => mask_prob = Some(value.parse::<f64>().map_err(|_| {
                    Error::Config(format!("bad value for mask_prob: `{value}`"))
                })?),
                other => return Err(Error::Config(format!("unknown loss option `{other}`"))),
            }
        }
        let kind = kind.ok_or_else(|| Error::Config("missing loss=<kind>".into()))?;
        let mut spec = LossSpec::new(kind);
        if negatives.is_some() {
            spec.negatives = negatives;
        }
        if mask_prob.is_some() {
            spec.mask_prob = mask_prob;
        }
        spec.validate()?;
        Ok(spec)
    }
}

/// Positive and negative scores at one evaluated position.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateScores {
    pub pos: f64,
    pub neg: Vec<f64>,
}

impl CandidateScores {
    pub fn new(pos: f64, neg: Vec<f64>) -> Self {
        Self { pos, neg }
    }

    fn check(&self) -> Result<()> {
        if self.neg.is_empty() {
            return Err(Error::Config("at least one negative score is required".into()));
        }
        check_finite(std::iter::once(self.pos).chain(self.neg.iter().copied()))
    }
}

/// Gradient of a sampled loss with respect to one position's scores.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateGrad {
    pub pos: f64,
    pub neg: Vec<f64>,
}

/// Scores of every real item (column `k − 1` ↔ item `k`) at a set of
/// positions, with a per-row validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct FullScores {
    pub scores: Array2<f64>,
    pub valid: Vec<bool>,
}

impl FullScores {
    pub fn new(scores: Array2<f64>, valid: Vec<bool>) -> Self {
        assert_eq!(scores.nrows(), valid.len(), "one validity flag per row");
        Self { scores, valid }
    }

    /// All rows valid.
    pub fn dense(scores: Array2<f64>) -> Self {
        let valid = vec![true; scores.nrows()];
        Self { scores, valid }
    }

    pub fn num_items(&self) -> usize {
        self.scores.ncols()
    }
}

fn check_finite(values: impl IntoIterator<Item = f64>) -> Result<()> {
    for (index, value) in values.into_iter().enumerate() {
        if !value.is_finite() {
            return Err(Error::NonFiniteScore { index, value });
        }
    }
    Ok(())
}

fn sampled_with_grad(kind: LossKind, c: &CandidateScores) -> Result<(f64, CandidateGrad)> {
    c.check()?;
    let kernel = kind.row_kernel().expect("sampled kind");
    let mut grad = CandidateGrad {
        pos: 0.0,
        neg: vec![0.0; c.neg.len()],
    };
    let loss = kernel(c.pos, &c.neg, &mut grad.pos, &mut grad.neg);
    Ok((loss, grad))
}

pub fn bpr_loss(c: &CandidateScores) -> Result<f64> {
    bpr_loss_with_grad(c).map(|(l, _)| l)
}

pub fn bpr_loss_with_grad(c: &CandidateScores) -> Result<(f64, CandidateGrad)> {
    sampled_with_grad(LossKind::Bpr, c)
}

pub fn bpr_max_loss(c: &CandidateScores) -> Result<f64> {
    bpr_max_loss_with_grad(c).map(|(l, _)| l)
}

pub fn bpr_max_loss_with_grad(c: &CandidateScores) -> Result<(f64, CandidateGrad)> {
    sampled_with_grad(LossKind::BprMax, c)
}

pub fn top1_loss(c: &CandidateScores) -> Result<f64> {
    top1_loss_with_grad(c).map(|(l, _)| l)
}

pub fn top1_loss_with_grad(c: &CandidateScores) -> Result<(f64, CandidateGrad)> {
    sampled_with_grad(LossKind::Top1, c)
}

pub fn top1_max_loss(c: &CandidateScores) -> Result<f64> {
    top1_max_loss_with_grad(c).map(|(l, _)| l)
}

pub fn top1_max_loss_with_grad(c: &CandidateScores) -> Result<(f64, CandidateGrad)> {
    sampled_with_grad(LossKind::Top1Max, c)
}

/// BCE over all valid positions, each with its own negatives; summed within
/// a position and averaged over positions.
pub fn bce_loss(positions: &[CandidateScores]) -> Result<f64> {
    bce_loss_with_grad(positions).map(|(l, _)| l)
}

pub fn bce_loss_with_grad(positions: &[CandidateScores]) -> Result<(f64, Vec<CandidateGrad>)> {
    if positions.is_empty() {
        return Err(Error::EmptyLoss);
    }
    let n = positions.len() as f64;
    let mut total = 0.0;
    let mut grads = Vec::with_capacity(positions.len());
    for c in positions {
        let (l, mut g) = sampled_with_grad(LossKind::Bce, c)?;
        total += l;
        g.pos /= n;
        g.neg.iter_mut().for_each(|x| *x /= n);
        grads.push(g);
    }
    Ok((total / n, grads))
}

/// Softmax weights a `-max` loss assigns to its negatives.
pub fn negative_weights(neg: &[f64]) -> Vec<f64> {
    crate::numerics::softmax(neg)
}

fn target_column(target: ItemId, num_items: usize) -> Result<usize> {
    if target == 0 || target as usize > num_items {
        return Err(Error::InvalidTarget(target));
    }
    Ok(target as usize - 1)
}

/// Cross-entropy at the single valid row.
pub fn ce_last_loss(f: &FullScores, target: ItemId) -> Result<f64> {
    ce_last_loss_with_grad(f, target).map(|(l, _)| l)
}

pub fn ce_last_loss_with_grad(f: &FullScores, target: ItemId) -> Result<(f64, Array2<f64>)> {
    let valid: Vec<usize> = (0..f.valid.len()).filter(|&r| f.valid[r]).collect();
    if valid.len() != 1 {
        return Err(Error::Usage(format!(
            "ce-last expects exactly one valid row, found {}",
            valid.len()
        )));
    }
    let mut targets = vec![0; f.valid.len()];
    targets[valid[0]] = target;
    enhanced_ce_loss_with_grad(f, &targets)
}

/// Mean cross-entropy over the valid rows, each against its own target.
pub fn enhanced_ce_loss(f: &FullScores, targets: &[ItemId]) -> Result<f64> {
    enhanced_ce_loss_with_grad(f, targets).map(|(l, _)| l)
}

pub fn enhanced_ce_loss_with_grad(f: &FullScores, targets: &[ItemId]) -> Result<(f64, Array2<f64>)> {
    let rows: Vec<usize> = (0..f.valid.len()).filter(|&r| f.valid[r]).collect();
    if rows.is_empty() {
        return Err(Error::EmptyLoss);
    }
    check_finite(rows.iter().flat_map(|&r| f.scores.row(r).to_vec()))?;
    let cols = rows
        .iter()
        .map(|&r| target_column(targets[r], f.num_items()))
        .collect::<Result<Vec<_>>>()?;
    let (loss, grad_rows) = softmax_rows_loss(f.scores.view(), &rows, &cols);
    let mut grad = Array2::zeros(f.scores.raw_dim());
    for (i, &r) in rows.iter().enumerate() {
        grad.row_mut(r).assign(&grad_rows.row(i));
    }
    Ok((loss, grad))
}

/// Cross-entropy restricted to masked positions; rows are the masked
/// positions and `originals` their true items.
pub fn mlm_loss(f: &FullScores, originals: &[ItemId]) -> Result<f64> {
    enhanced_ce_loss(f, originals)
}

pub fn mlm_loss_with_grad(f: &FullScores, originals: &[ItemId]) -> Result<(f64, Array2<f64>)> {
    enhanced_ce_loss_with_grad(f, originals)
}

/// Batched sampled loss: row `i` of `scores` is `[pos, neg_1..neg_N]`.
/// Returns the mean per-row loss and its gradient.
pub fn sampled_rows_loss(kind: LossKind, scores: ArrayView2<f64>) -> (f64, Array2<f64>) {
    let kernel = kind.row_kernel().expect("sampled kind");
    let rows = scores.nrows();
    let width = scores.ncols();
    let mut grad = Array2::zeros((rows, width));
    let mut total = 0.0;
    let src = scores.as_standard_layout();
    let src = src.as_slice().expect("standard layout");
    let dst = grad.as_slice_mut().expect("standard layout");
    for r in 0..rows {
        let row = &src[r * width..(r + 1) * width];
        let (g_pos, g_neg) = dst[r * width..(r + 1) * width].split_at_mut(1);
        total += kernel(row[0], &row[1..], &mut g_pos[0], g_neg);
    }
    let n = rows.max(1) as f64;
    grad.mapv_inplace(|g| g / n);
    (total / n, grad)
}

/// Batched softmax cross-entropy over `rows` of `scores`, each against the
/// column in `cols`. Gradient rows are aligned with `rows`.
pub fn softmax_rows_loss(scores: ArrayView2<f64>, rows: &[usize], cols: &[usize]) -> (f64, Array2<f64>) {
    let width = scores.ncols();
    let mut grad = Array2::zeros((rows.len(), width));
    let mut total = 0.0;
    let mut buf = vec![0.0; width];
    for (i, (&r, &c)) in rows.iter().zip(cols).enumerate() {
        buf.iter_mut().zip(scores.row(r)).for_each(|(b, &s)| *b = s);
        let mut g = grad.row_mut(i);
        let g = g.as_slice_mut().expect("contiguous row");
        total += softmax::ce_row(&buf, c, g);
    }
    let n = rows.len().max(1) as f64;
    grad.mapv_inplace(|g| g / n);
    (total / n, grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    const LN2: f64 = std::f64::consts::LN_2;

    fn c(pos: f64, neg: &[f64]) -> CandidateScores {
        CandidateScores::new(pos, neg.to_vec())
    }

    #[test]
    fn spec_strings() {
        let s: LossSpec = "loss=bpr-max negatives=100".parse().unwrap();
        assert_eq!(s.kind, LossKind::BprMax);
        assert_eq!(s.negatives, Some(100));
        let s: LossSpec = "loss=ce-all".parse().unwrap();
        assert_eq!(s, LossSpec::new(LossKind::CeAll));
        let s: LossSpec = "loss=mlm mask_prob=0.2".parse().unwrap();
        assert_eq!(s.mask_prob, Some(0.2));
        assert!("loss=ce-all negatives=3".parse::<LossSpec>().is_err());
        assert!("loss=mlm mask_prob=1.0".parse::<LossSpec>().is_err());
        assert!("loss=bpr negatives=0".parse::<LossSpec>().is_err());
        assert!("negatives=3".parse::<LossSpec>().is_err());
    }

    #[test]
    fn non_finite_rejected() {
        assert!(matches!(
            bpr_loss(&c(f64::NAN, &[0.0])),
            Err(Error::NonFiniteScore { index: 0, .. })
        ));
        assert!(top1_loss(&c(0.0, &[f64::INFINITY])).is_err());
    }

    #[test]
    fn bce_limits() {
        assert!((bce_loss(&[c(0.0, &[0.0])]).unwrap() - 2.0 * LN2).abs() < 1e-12);
        assert!(bce_loss(&[c(60.0, &[-60.0])]).unwrap() < 1e-20);
        assert!(matches!(bce_loss(&[]), Err(Error::EmptyLoss)));
    }

    #[test]
    fn ce_rejects_pad_and_mask_targets() {
        let f = FullScores::dense(array![[0.0, 0.0, 0.0]]);
        assert!(matches!(ce_last_loss(&f, 0), Err(Error::InvalidTarget(0))));
        assert!(matches!(ce_last_loss(&f, 4), Err(Error::InvalidTarget(4))));
    }

    #[test]
    fn ce_excludes_masked_rows() {
        let f = FullScores::new(array![[100.0, -5.0], [0.0, 0.0]], vec![false, true]);
        assert!((enhanced_ce_loss(&f, &[0, 1]).unwrap() - LN2).abs() < 1e-12);
        let none = FullScores::new(array![[0.0, 0.0]], vec![false]);
        assert!(matches!(enhanced_ce_loss(&none, &[1]), Err(Error::EmptyLoss)));
    }

    #[test]
    fn negative_weights_increase_with_score() {
        let w = negative_weights(&[-1.0, 0.5, 0.7, 3.0]);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        assert!(w.windows(2).all(|p| p[0] < p[1]));
    }
}
