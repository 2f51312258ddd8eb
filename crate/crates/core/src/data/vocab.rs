use std::collections::HashMap;

use super::{ItemId, PAD};
use crate::{Error, Result};

/// Bijection between item strings and contiguous IDs `1..=len`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ItemVocabulary {
    names: Vec<String>,
    ids: HashMap<String, ItemId>,
}

/// Assign IDs in order of first appearance.
pub fn build_vocabulary<'a>(items: impl IntoIterator<Item = &'a str>) -> ItemVocabulary {
    let mut vocab = ItemVocabulary::default();
    for item in items {
        vocab.insert(item);
    }
    vocab
}

impl ItemVocabulary {
    fn insert(&mut self, item: &str) -> ItemId {
        if let Some(&id) = self.ids.get(item) {
            return id;
        }
        self.names.push(item.to_string());
        let id = self.names.len() as ItemId;
        self.ids.insert(item.to_string(), id);
        id
    }

    /// Number of real items.
    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn pad_id(&self) -> ItemId {
        PAD
    }

    pub fn mask_id(&self) -> ItemId {
        self.names.len() as ItemId + 1
    }

    pub fn id(&self, item: &str) -> Option<ItemId> {
        self.ids.get(item).copied()
    }

    pub fn name(&self, id: ItemId) -> Option<&str> {
        if id == PAD {
            return None;
        }
        self.names.get(id as usize - 1).map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ItemId, &str)> {
        self.names
            .iter()
            .enumerate()
            .map(|(i, n)| (i as ItemId + 1, n.as_str()))
    }

    pub fn ensure_trainable(&self) -> Result<()> {
        if self.len() > 1 {
            Ok(())
        } else {
            Err(Error::DegenerateCatalog(self.len()))
        }
    }
}
