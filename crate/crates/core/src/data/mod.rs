//! Interaction logs → per-user chronological sequences → leave-one-out splits
//! → padded training batches.

mod batch;
mod ingest;
mod negatives;
mod sequences;
mod vocab;

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use batch::{epoch_batches, left_pad, pad_and_truncate, PaddedRow, TrainingBatch};
pub use ingest::{
    ingest_interactions, parse_csv_triples, parse_sequence_lines, write_sequence_lines,
    write_vocabulary, InputFormat, Ingested, InteractionRecord, RawSequence,
};
pub use negatives::{sample_negatives, ExcludeSet, NegativeMode};
pub use sequences::{
    build_sequences, chronological, dedup_interactions, k_core_filter, leave_one_out_split,
    SplitDataset, UserSequence, UserSplit,
};
pub use vocab::{build_vocabulary, ItemVocabulary};

use crate::Result;

/// Integer item identifier. `0` is padding, `num_items + 1` is the mask token.
pub type ItemId = u32;

pub const PAD: ItemId = 0;

/// Options for turning raw logs into sequences.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    pub k_core: usize,
    /// Keep only the first interaction of every (user, item) pair.
    pub dedup: bool,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            k_core: 5,
            dedup: false,
        }
    }
}

/// A preprocessed dataset: vocabulary, user names and integer sequences.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub vocab: ItemVocabulary,
    pub users: Vec<String>,
    pub sequences: Vec<UserSequence>,
}

impl Dataset {
    /// Run dedup, k-core filtering, chronological ordering and ID mapping.
    pub fn from_ingested(ingested: Ingested, config: &PreprocessConfig) -> Result<Self> {
        let mut records = ingested.into_records();
        if config.dedup {
            records = dedup_interactions(records);
        }
        let records = k_core_filter(records, config.k_core)?;
        let ordered = chronological(&records);
        if ordered.is_empty() {
            return Err(crate::Error::EmptyAfterFilter { k: config.k_core });
        }
        let vocab = build_vocabulary(ordered.iter().map(|r| r.item.as_str()));
        vocab.ensure_trainable()?;
        let (users, sequences) = build_sequences(&ordered, &vocab);
        Ok(Self {
            vocab,
            users,
            sequences,
        })
    }

    pub fn load(path: &Path, format: InputFormat, config: &PreprocessConfig) -> Result<Self> {
        Self::from_ingested(ingest_interactions(path, format)?, config)
    }

    pub fn num_items(&self) -> usize {
        self.vocab.len()
    }

    pub fn stats(&self) -> DatasetStats {
        let interactions: usize = self.sequences.iter().map(|s| s.items.len()).sum();
        DatasetStats {
            users: self.sequences.len(),
            items: self.vocab.len(),
            interactions,
        }
    }

    pub fn split(&self) -> Result<SplitDataset> {
        leave_one_out_split(&self.sequences, self.vocab.len())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub users: usize,
    pub items: usize,
    pub interactions: usize,
}

impl DatasetStats {
    pub fn average_length(&self) -> f64 {
        self.interactions as f64 / self.users as f64
    }

    /// Fraction of the user × item matrix that is observed.
    pub fn density(&self) -> f64 {
        self.interactions as f64 / (self.users as f64 * self.items as f64)
    }
}

impl fmt::Display for DatasetStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Users           {}", self.users)?;
        writeln!(f, "Items           {}", self.items)?;
        writeln!(f, "Interactions    {}", self.interactions)?;
        writeln!(f, "Average Length  {:.2}", self.average_length())?;
        write!(f, "Density         {:.2}%", 100.0 * self.density())
    }
}
