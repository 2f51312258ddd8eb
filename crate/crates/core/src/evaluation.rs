//! Ranking metrics over held-out targets.
//!
//! Ranks are computed against every real item with a deterministic tie rule:
//! an item with the same score as the target and a smaller ID is ranked
//! ahead of it.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::Path;

use ndarray::Array2;
use rand::seq::index;
use rand::Rng as _;
use serde::de::Error as _;
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::autograd::Tensor;
use crate::data::{left_pad, pad_and_truncate, ExcludeSet, ItemId, SplitDataset, PAD};
use crate::losses::mlm_inference_input;
use crate::metering::Meter;
use crate::models::{score_candidates, score_full_batch, ParameterSet, SeqModel};
use crate::{derived_rng, Error, Result};

/// Cut-offs reported unless asked otherwise.
pub const DEFAULT_KS: [usize; 4] = [1, 5, 10, 20];
/// Negatives per user for sampled metrics.
pub const SAMPLED_NEGATIVES: usize = 100;

const EVAL_BATCH: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Valid,
    Test,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Valid => "valid",
            Phase::Test => "test",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankResult {
    pub user: u32,
    pub target: ItemId,
    pub rank: usize,
}

/// 1-based rank of `target` in a row of real-item scores (`scores[k - 1]`
/// belongs to item `k`).
pub fn rank_of_target(scores: &[f64], target: ItemId) -> Result<usize> {
    if target == PAD || target as usize > scores.len() {
        return Err(Error::InvalidTarget(target));
    }
    let t = target as usize - 1;
    let st = scores[t];
    let ahead = scores
        .iter()
        .enumerate()
        .filter(|&(i, &s)| s > st || (s == st && i < t))
        .count();
    Ok(1 + ahead)
}

/// Rank of the candidate at index 0 among `candidates`, tie-broken by item
/// ID.
pub fn rank_among(scores: &[f64], candidates: &[ItemId]) -> usize {
    let (st, target) = (scores[0], candidates[0]);
    1 + scores
        .iter()
        .zip(candidates)
        .skip(1)
        .filter(|&(&s, &c)| s > st || (s == st && c < target))
        .count()
}

/// `1 / log2(rank + 1)` inside the cut-off, else 0.
pub fn ndcg_gain(rank: usize, k: usize) -> f64 {
    if rank <= k {
        1.0 / ((rank + 1) as f64).log2()
    } else {
        0.0
    }
}

/// HIT@k and NDCG@k averaged over users.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub phase: Phase,
    pub users: usize,
    /// Number of sampled negatives, or `None` for full ranking.
    pub sampled: Option<usize>,
    pub ks: Vec<usize>,
    pub hit: Vec<f64>,
    pub ndcg: Vec<f64>,
}

impl MetricsReport {
    pub fn from_ranks(phase: Phase, ranks: &[usize], ks: &[usize]) -> Self {
        let n = ranks.len();
        let mean = |f: &dyn Fn(usize) -> f64| {
            if n == 0 {
                0.0
            } else {
                ranks.iter().map(|&r| f(r)).sum::<f64>() / n as f64
            }
        };
        Self {
            phase,
            users: n,
            sampled: None,
            ks: ks.to_vec(),
            hit: ks.iter().map(|&k| mean(&|r| (r <= k) as u8 as f64)).collect(),
            ndcg: ks.iter().map(|&k| mean(&|r| ndcg_gain(r, k))).collect(),
        }
    }

    fn position(&self, k: usize) -> usize {
        self.ks
            .iter()
            .position(|&x| x == k)
            .unwrap_or_else(|| panic!("k={k} was not evaluated"))
    }

    /// # Panics
    /// If `k` is not among the evaluated cut-offs.
    pub fn hit(&self, k: usize) -> f64 {
        self.hit[self.position(k)]
    }

    /// # Panics
    /// If `k` is not among the evaluated cut-offs.
    pub fn ndcg(&self, k: usize) -> f64 {
        self.ndcg[self.position(k)]
    }
}

impl Serialize for MetricsReport {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(None)?;
        map.serialize_entry("phase", &self.phase)?;
        map.serialize_entry("users", &self.users)?;
        if let Some(n) = self.sampled {
            map.serialize_entry("sampled_negatives", &n)?;
        }
        for (i, k) in self.ks.iter().enumerate() {
            map.serialize_entry(&format!("hit@{k}"), &self.hit[i])?;
            map.serialize_entry(&format!("ndcg@{k}"), &self.ndcg[i])?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for MetricsReport {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw: BTreeMap<String, serde_json::Value> = BTreeMap::deserialize(d)?;
        let phase = raw
            .get("phase")
            .ok_or_else(|| D::Error::missing_field("phase"))
            .and_then(|v| Phase::deserialize(v).map_err(D::Error::custom))?;
        let users = raw
            .get("users")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| D::Error::missing_field("users"))? as usize;
        let sampled = raw
            .get("sampled_negatives")
            .and_then(|v| v.as_u64())
            .map(|n| n as usize);
        let mut ks: Vec<usize> = raw
            .keys()
            .filter_map(|key| key.strip_prefix("hit@")?.parse().ok())
            .collect();
        ks.sort_unstable();
        let metric = |name: &str, k: usize| {
            raw.get(&format!("{name}@{k}"))
                .and_then(|v| v.as_f64())
                .ok_or_else(|| D::Error::custom(format!("missing {name}@{k}")))
        };
        let hit = ks.iter().map(|&k| metric("hit", k)).collect::<Result<_, _>>()?;
        let ndcg = ks.iter().map(|&k| metric("ndcg", k)).collect::<Result<_, _>>()?;
        Ok(Self {
            phase,
            users,
            sampled,
            ks,
            hit,
            ndcg,
        })
    }
}

/// Evaluation-mode model input for predicting the item after `prefix`.
pub fn inference_input(model: &SeqModel, prefix: &[ItemId]) -> Vec<ItemId> {
    let t = model.config.max_len;
    if model.config.architecture.is_bidirectional() {
        mlm_inference_input(prefix, t, model.mask_id())
    } else {
        left_pad(prefix, t)
    }
}

/// Hidden vector used to score the next item after each prefix
/// (`prefixes.len() × dim`).
pub fn next_item_hidden(
    model: &SeqModel,
    params: &ParameterSet,
    prefixes: &[&[ItemId]],
) -> Result<Tensor> {
    let t = model.config.max_len;
    let mut out = Array2::zeros((prefixes.len(), model.config.dim));
    for (chunk_idx, chunk) in prefixes.chunks(EVAL_BATCH).enumerate() {
        let ids: Vec<ItemId> = chunk.iter().flat_map(|p| inference_input(model, p)).collect();
        let h = model.hidden_states(params, &ids)?;
        for b in 0..chunk.len() {
            out.row_mut(chunk_idx * EVAL_BATCH + b).assign(&h.row(b * t + t - 1));
        }
    }
    Ok(out)
}

/// Full-rank ranks for arbitrary (prefix, target) queries.
pub fn full_ranks(
    model: &SeqModel,
    params: &ParameterSet,
    queries: &[(&[ItemId], ItemId)],
) -> Result<Vec<usize>> {
    let mut ranks = Vec::with_capacity(queries.len());
    for chunk in queries.chunks(EVAL_BATCH) {
        let prefixes: Vec<&[ItemId]> = chunk.iter().map(|q| q.0).collect();
        let hidden = next_item_hidden(model, params, &prefixes)?;
        let scores = score_full_batch(params, &hidden);
        for (row, &(_, target)) in scores.outer_iter().zip(chunk) {
            let row = row.as_slice().expect("standard layout");
            if crate::numerics::debug_numerics() {
                if let Some(i) = row.iter().position(|v| !v.is_finite()) {
                    return Err(Error::NonFiniteScore { index: i, value: row[i] });
                }
            }
            ranks.push(rank_of_target(row, target)?);
        }
    }
    Ok(ranks)
}

fn phase_queries(split: &SplitDataset, phase: Phase) -> Vec<(Vec<ItemId>, ItemId)> {
    split
        .users
        .iter()
        .map(|u| match phase {
            Phase::Valid => (u.train.clone(), u.valid),
            Phase::Test => (u.test_prefix(), u.test),
        })
        .collect()
}

/// Per-user full-rank results for `phase`.
pub fn user_ranks(
    model: &SeqModel,
    params: &ParameterSet,
    split: &SplitDataset,
    phase: Phase,
) -> Result<Vec<RankResult>> {
    let owned = phase_queries(split, phase);
    let queries: Vec<(&[ItemId], ItemId)> = owned.iter().map(|(p, t)| (p.as_slice(), *t)).collect();
    let ranks = full_ranks(model, params, &queries)?;
    Ok(split
        .users
        .iter()
        .zip(&owned)
        .zip(ranks)
        .map(|((u, (_, target)), rank)| RankResult {
            user: u.user,
            target: *target,
            rank,
        })
        .collect())
}

/// HIT@k / NDCG@k ranking the held-out item against the whole catalog. The
/// input is the training part (validation) or training part plus the
/// validation item (test), truncated to the model's window.
pub fn full_rank_metrics(
    model: &SeqModel,
    params: &ParameterSet,
    split: &SplitDataset,
    phase: Phase,
    ks: &[usize],
) -> Result<MetricsReport> {
    let ranks: Vec<usize> = user_ranks(model, params, split, phase)?
        .into_iter()
        .map(|r| r.rank)
        .collect();
    Ok(MetricsReport::from_ranks(phase, &ranks, ks))
}

/// Up to `n` distinct real items outside `exclude`, without replacement.
pub fn sample_without_replacement(
    rng: &mut crate::Rng,
    num_items: usize,
    exclude: &ExcludeSet,
    n: usize,
) -> Vec<ItemId> {
    let available = num_items - exclude.len();
    let n = n.min(available);
    if available > 4 * n {
        let mut chosen: Vec<ItemId> = Vec::with_capacity(n);
        while chosen.len() < n {
            let c = rng.gen_range(1..=num_items as ItemId);
            if !exclude.contains(c) && !chosen.contains(&c) {
                chosen.push(c);
            }
        }
        chosen
    } else {
        let pool: Vec<ItemId> = (1..=num_items as ItemId).filter(|&i| !exclude.contains(i)).collect();
        index::sample(rng, pool.len(), n)
            .into_iter()
            .map(|i| pool[i])
            .collect()
    }
}

/// HIT@k / NDCG@k on the test item ranked against `negatives` items the user
/// never interacted with. Each user draws from its own stream derived from
/// `(seed, user)`.
pub fn sampled_metrics(
    model: &SeqModel,
    params: &ParameterSet,
    split: &SplitDataset,
    seed: u64,
    negatives: usize,
    ks: &[usize],
    meter: &mut Meter,
) -> Result<MetricsReport> {
    let owned = phase_queries(split, Phase::Test);
    let prefixes: Vec<&[ItemId]> = owned.iter().map(|(p, _)| p.as_slice()).collect();
    let mut ranks = Vec::with_capacity(owned.len());
    let mut reduced = 0usize;
    for (c, chunk) in prefixes.chunks(EVAL_BATCH).enumerate() {
        let hidden = next_item_hidden(model, params, chunk)?;
        for (b, h) in hidden.outer_iter().enumerate() {
            let u = &split.users[c * EVAL_BATCH + b];
            let exclude = ExcludeSet::new(u.full_sequence());
            let mut rng = derived_rng(seed, u.user as u64);
            let negs = sample_without_replacement(&mut rng, model.num_items, &exclude, negatives);
            if negs.len() < negatives {
                reduced += 1;
            }
            let mut candidates = Vec::with_capacity(negs.len() + 1);
            candidates.push(u.test);
            candidates.extend(negs);
            let h = h.to_vec();
            let scores = score_candidates(params, &h, &candidates, meter)?;
            ranks.push(rank_among(&scores, &candidates));
        }
    }
    if reduced > 0 {
        log::warn!("{reduced} users had fewer than {negatives} unseen items to sample");
    }
    let mut report = MetricsReport::from_ranks(Phase::Test, &ranks, ks);
    report.sampled = Some(negatives);
    Ok(report)
}

/// HIT@10 / NDCG@10 at one sequence position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PositionMetrics {
    pub position: usize,
    pub hit10: f64,
    pub ndcg10: f64,
    pub count: usize,
}

/// Accuracy by position of the predicted item.
///
/// Every sequence is right-aligned on a frame of `T + 3` positions: the
/// training window (`T + 1` items) followed by the validation and test
/// items. Position `T + 1` is therefore the last training target, `T + 2`
/// the validation item and `T + 3` the test item. Position 1 has no history
/// and is not reported.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerTimestampReport {
    pub max_len: usize,
    pub positions: Vec<PositionMetrics>,
}

impl PerTimestampReport {
    pub fn get(&self, position: usize) -> Option<&PositionMetrics> {
        self.positions.iter().find(|p| p.position == position)
    }

    pub fn last_train_position(&self) -> usize {
        self.max_len + 1
    }

    pub fn valid_position(&self) -> usize {
        self.max_len + 2
    }

    pub fn test_position(&self) -> usize {
        self.max_len + 3
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("position,hit_at_10,ndcg_at_10,count\n");
        for p in &self.positions {
            out.push_str(&format!(
                "{},{:.6},{:.6},{}\n",
                p.position, p.hit10, p.ndcg10, p.count
            ));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_file(path, self.to_csv().as_bytes())
    }
}

/// Per-position HIT@10 / NDCG@10.
///
/// Training positions of a left-to-right model are read off one forward pass
/// over the user's training window, laid out exactly as in training, so each
/// position sees only the items before it. The validation and test positions
/// use the same inputs as [`full_rank_metrics`]. A bidirectional model
/// predicts every position from its own history followed by the mask token.
pub fn per_timestamp_eval(
    model: &SeqModel,
    params: &ParameterSet,
    split: &SplitDataset,
) -> Result<PerTimestampReport> {
    let t = model.config.max_len;
    let frame = t + 3;
    let mut acc = vec![(0.0, 0.0, 0usize); frame + 1];
    let mut record = |position: usize, rank: usize| {
        let slot = &mut acc[position];
        slot.0 += (rank <= 10) as u8 as f64;
        slot.1 += ndcg_gain(rank, 10);
        slot.2 += 1;
    };

    if model.config.architecture.is_bidirectional() {
        let mut queries: Vec<(usize, Vec<ItemId>, ItemId)> = Vec::new();
        for u in &split.users {
            let full = u.full_sequence();
            let n = full.len();
            for (i, &item) in full.iter().enumerate().skip(1) {
                if n - i < frame {
                    queries.push((frame - (n - 1 - i), full[..i].to_vec(), item));
                }
            }
        }
        let borrowed: Vec<(&[ItemId], ItemId)> =
            queries.iter().map(|(_, p, x)| (p.as_slice(), *x)).collect();
        for ((position, _, _), rank) in queries.iter().zip(full_ranks(model, params, &borrowed)?) {
            record(*position, rank);
        }
    } else {
        for chunk in split.users.chunks(EVAL_BATCH) {
            let rows: Vec<_> = chunk.iter().map(|u| pad_and_truncate(&u.train, t)).collect();
            let ids: Vec<ItemId> = rows.iter().flat_map(|r| r.input.iter().copied()).collect();
            let hidden = model.hidden_states(params, &ids)?;
            let scores = score_full_batch(params, &hidden);
            for (b, row) in rows.iter().enumerate() {
                for j in (0..t).filter(|&j| row.mask[j]) {
                    let s = scores.row(b * t + j);
                    let rank = rank_of_target(s.as_slice().expect("standard layout"), row.target[j])?;
                    record(j + 2, rank);
                }
            }
        }
        for (phase, position) in [(Phase::Valid, t + 2), (Phase::Test, t + 3)] {
            for r in user_ranks(model, params, split, phase)? {
                record(position, r.rank);
            }
        }
    }

    let positions = (2..=frame)
        .map(|p| {
            let (h, g, c) = acc[p];
            let d = c.max(1) as f64;
            PositionMetrics {
                position: p,
                hit10: h / d,
                ndcg10: g / d,
                count: c,
            }
        })
        .collect();
    Ok(PerTimestampReport { max_len: t, positions })
}

/// Cost of one training run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ResourceReport {
    pub train_seconds: f64,
    pub score_evals: u64,
    pub negative_samples: u64,
}

impl ResourceReport {
    pub fn new(train_seconds: f64, meter: Meter) -> Self {
        Self {
            train_seconds,
            score_evals: meter.score_evals,
            negative_samples: meter.negative_samples,
        }
    }
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tie_rule() {
        assert_eq!(rank_of_target(&[0.1, 0.9, 0.3], 2).unwrap(), 1);
        assert_eq!(rank_of_target(&[1.0, 1.0, 1.0], 2).unwrap(), 2);
        assert_eq!(rank_of_target(&[5.0, 3.0, 4.0, 3.0], 4).unwrap(), 4);
        assert!(matches!(rank_of_target(&[1.0], 2), Err(Error::InvalidTarget(2))));
        assert!(matches!(rank_of_target(&[1.0], 0), Err(Error::InvalidTarget(0))));
    }

    #[test]
    fn rank_among_candidates() {
        assert_eq!(rank_among(&[2.0, 1.0, 3.0], &[5, 1, 9]), 2);
        assert_eq!(rank_among(&[2.0, 2.0, 2.0], &[5, 1, 9]), 2);
    }

    #[test]
    fn discount() {
        let r = MetricsReport::from_ranks(Phase::Test, &[3], &[10]);
        assert!((r.ndcg(10) - 0.5).abs() < 1e-15);
        assert_eq!(r.hit(10), 1.0);
        let r = MetricsReport::from_ranks(Phase::Test, &[11], &[10]);
        assert_eq!((r.hit(10), r.ndcg(10)), (0.0, 0.0));
        let r = MetricsReport::from_ranks(Phase::Valid, &[1, 1], &DEFAULT_KS);
        assert!(r.hit.iter().chain(&r.ndcg).all(|&v| v == 1.0));
    }

    #[test]
    fn report_json_roundtrip() {
        let mut r = MetricsReport::from_ranks(Phase::Valid, &[1, 4, 30, 2], &DEFAULT_KS);
        r.sampled = Some(100);
        let text = serde_json::to_string(&r).unwrap();
        assert!(text.contains("\"hit@10\"") && text.contains("\"ndcg@20\""));
        assert!(text.contains("\"phase\":\"valid\"") && text.contains("\"users\":4"));
        let back: MetricsReport = serde_json::from_str(&text).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn sampling_without_replacement_respects_exclusions() {
        let mut rng = crate::rng_from_seed(3);
        let ex = ExcludeSet::new([1, 2, 3]);
        for n in [2, 5, 7, 20] {
            let s = sample_without_replacement(&mut rng, 10, &ex, n);
            assert_eq!(s.len(), n.min(7));
            let mut d = s.clone();
            d.sort_unstable();
            d.dedup();
            assert_eq!(d.len(), s.len());
            assert!(s.iter().all(|&i| i > 3 && i <= 10));
        }
        let big = sample_without_replacement(&mut rng, 1000, &ex, 100);
        assert_eq!(big.len(), 100);
    }
}
