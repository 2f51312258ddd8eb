use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::ingest::InteractionRecord;
use super::vocab::ItemVocabulary;
use super::ItemId;
use crate::{Error, Result};

/// Minimum length that still yields train, valid and test parts.
pub const MIN_SEQUENCE_LEN: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserSequence {
    pub user: u32,
    pub items: Vec<ItemId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserSplit {
    pub user: u32,
    pub train: Vec<ItemId>,
    pub valid: ItemId,
    pub test: ItemId,
}

impl UserSplit {
    pub fn full_sequence(&self) -> Vec<ItemId> {
        let mut items = self.train.clone();
        items.push(self.valid);
        items.push(self.test);
        items
    }

    /// Training items followed by the validation target.
    pub fn test_prefix(&self) -> Vec<ItemId> {
        let mut items = self.train.clone();
        items.push(self.valid);
        items
    }
}

/// Leave-one-out partition of every user's sequence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitDataset {
    pub num_items: usize,
    pub users: Vec<UserSplit>,
}

impl SplitDataset {
    pub fn len(&self) -> usize {
        self.users.len()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }

    pub fn mean_train_len(&self) -> f64 {
        let total: usize = self.users.iter().map(|u| u.train.len()).sum();
        total as f64 / self.users.len().max(1) as f64
    }
}

/// Keep the first occurrence of every (user, item) pair.
pub fn dedup_interactions(records: Vec<InteractionRecord>) -> Vec<InteractionRecord> {
    let mut seen = HashSet::new();
    records
        .into_iter()
        .filter(|r| seen.insert((r.user.clone(), r.item.clone())))
        .collect()
}

/// Iteratively drop users and items with fewer than `k` interactions until
/// nothing changes. Record order is preserved.
pub fn k_core_filter(records: Vec<InteractionRecord>, k: usize) -> Result<Vec<InteractionRecord>> {
    if k == 0 {
        return Err(Error::Config("k-core threshold must be at least 1".into()));
    }
    let mut records = records;
    loop {
        let mut user_counts: HashMap<&str, usize> = HashMap::new();
        let mut item_counts: HashMap<&str, usize> = HashMap::new();
        for r in &records {
            *user_counts.entry(&r.user).or_default() += 1;
            *item_counts.entry(&r.item).or_default() += 1;
        }
        let keep: Vec<bool> = records
            .iter()
            .map(|r| user_counts[r.user.as_str()] >= k && item_counts[r.item.as_str()] >= k)
            .collect();
        if keep.iter().all(|&b| b) {
            break;
        }
        let mut flags = keep.into_iter();
        records.retain(|_| flags.next().unwrap_or(false));
    }
    if records.is_empty() {
        return Err(Error::EmptyAfterFilter { k });
    }
    Ok(records)
}

/// Group records by user (first-appearance order), sort each group by
/// timestamp with file order breaking ties, and drop users shorter than 3.
pub fn chronological(records: &[InteractionRecord]) -> Vec<InteractionRecord> {
    let mut order: Vec<&str> = Vec::new();
    let mut groups: HashMap<&str, Vec<&InteractionRecord>> = HashMap::new();
    for r in records {
        groups
            .entry(&r.user)
            .or_insert_with(|| {
                order.push(&r.user);
                Vec::new()
            })
            .push(r);
    }
    let mut out = Vec::with_capacity(records.len());
    for user in order {
        let mut group = groups.remove(user).unwrap_or_default();
        if group.len() < MIN_SEQUENCE_LEN {
            continue;
        }
        group.sort_by_key(|r| r.timestamp);
        out.extend(group.into_iter().cloned());
    }
    out
}

/// Map records to integer sequences. Returns user names (indexed by the
/// sequence's `user` field) alongside the sequences.
pub fn build_sequences(
    records: &[InteractionRecord],
    vocab: &ItemVocabulary,
) -> (Vec<String>, Vec<UserSequence>) {
    let ordered = chronological(records);
    let mut names: Vec<String> = Vec::new();
    let mut sequences: Vec<UserSequence> = Vec::new();
    for r in &ordered {
        let Some(item) = vocab.id(&r.item) else {
            continue;
        };
        if names.last() != Some(&r.user) {
            names.push(r.user.clone());
            sequences.push(UserSequence {
                user: names.len() as u32 - 1,
                items: Vec::new(),
            });
        }
        if let Some(seq) = sequences.last_mut() {
            seq.items.push(item);
        }
    }
    (names, sequences)
}

pub fn leave_one_out_split(sequences: &[UserSequence], num_items: usize) -> Result<SplitDataset> {
    let users = sequences
        .iter()
        .map(|s| {
            let l = s.items.len();
            if l < MIN_SEQUENCE_LEN {
                return Err(Error::Usage(format!(
                    "user {} has {l} items; leave-one-out needs at least {MIN_SEQUENCE_LEN}",
                    s.user
                )));
            }
            Ok(UserSplit {
                user: s.user,
                train: s.items[..l - 2].to_vec(),
                valid: s.items[l - 2],
                test: s.items[l - 1],
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SplitDataset { num_items, users })
}
