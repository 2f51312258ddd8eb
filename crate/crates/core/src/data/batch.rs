use rand::seq::SliceRandom;

use super::sequences::SplitDataset;
use super::{ItemId, PAD};
use crate::Rng;

/// One left-padded next-item row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PaddedRow {
    pub input: Vec<ItemId>,
    pub target: Vec<ItemId>,
    pub mask: Vec<bool>,
}

/// Lay out `items` as (input, next-item target) of width `max_len`, keeping
/// the most recent `max_len + 1` items.
pub fn pad_and_truncate(items: &[ItemId], max_len: usize) -> PaddedRow {
    let window = &items[items.len().saturating_sub(max_len + 1)..];
    let mut row = PaddedRow {
        input: vec![PAD; max_len],
        target: vec![PAD; max_len],
        mask: vec![false; max_len],
    };
    if window.len() < 2 {
        return row;
    }
    let n = window.len() - 1;
    let offset = max_len - n;
    row.input[offset..].copy_from_slice(&window[..n]);
    row.target[offset..].copy_from_slice(&window[1..]);
    row.mask[offset..].iter_mut().for_each(|m| *m = true);
    row
}

/// Left-pad (or truncate from the left) to exactly `max_len` slots.
pub fn left_pad(items: &[ItemId], max_len: usize) -> Vec<ItemId> {
    let window = &items[items.len().saturating_sub(max_len)..];
    let mut row = vec![PAD; max_len - window.len()];
    row.extend_from_slice(window);
    row
}

/// A `B × T` training batch stored row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainingBatch {
    /// Indices into `SplitDataset::users`.
    pub users: Vec<usize>,
    pub max_len: usize,
    pub input: Vec<ItemId>,
    pub target: Vec<ItemId>,
    pub mask: Vec<bool>,
}

impl TrainingBatch {
    pub fn from_rows(users: Vec<usize>, rows: Vec<PaddedRow>, max_len: usize) -> Self {
        let mut batch = TrainingBatch {
            users,
            max_len,
            input: Vec::with_capacity(rows.len() * max_len),
            target: Vec::with_capacity(rows.len() * max_len),
            mask: Vec::with_capacity(rows.len() * max_len),
        };
        for row in rows {
            batch.input.extend(row.input);
            batch.target.extend(row.target);
            batch.mask.extend(row.mask);
        }
        batch
    }

    pub fn size(&self) -> usize {
        self.users.len()
    }

    /// Number of valid (position, target) pairs.
    pub fn valid_positions(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

/// Shuffle eligible users with `rng` and cut them into batches of
/// `batch_size`. Users whose training part has no next-item target are
/// skipped.
pub fn epoch_batches<'a>(
    split: &'a SplitDataset,
    max_len: usize,
    batch_size: usize,
    rng: &mut Rng,
) -> impl Iterator<Item = TrainingBatch> + 'a {
    let mut order: Vec<usize> = (0..split.users.len())
        .filter(|&u| split.users[u].train.len() >= 2)
        .collect();
    order.shuffle(rng);
    let batch_size = batch_size.max(1);
    let chunks: Vec<Vec<usize>> = order.chunks(batch_size).map(<[usize]>::to_vec).collect();
    chunks.into_iter().map(move |users| {
        let rows = users
            .iter()
            .map(|&u| pad_and_truncate(&split.users[u].train, max_len))
            .collect();
        TrainingBatch::from_rows(users, rows, max_len)
    })
}
