use rand::Rng as _;

use crate::data::{ItemId, PAD};
use crate::{Error, Result, Rng};

/// A row with some real positions replaced by the mask token.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskedSequence {
    pub input: Vec<ItemId>,
    /// Masked positions in increasing order.
    pub positions: Vec<usize>,
    /// Original items at `positions`.
    pub originals: Vec<ItemId>,
}

/// Mask every non-padding position independently with probability
/// `mask_prob`; if nothing was selected, one uniformly chosen real position is
/// masked instead.
pub fn apply_mlm_masking(
    rng: &mut Rng,
    items: &[ItemId],
    mask_prob: f64,
    mask_id: ItemId,
) -> Result<MaskedSequence> {
    let real: Vec<usize> = (0..items.len()).filter(|&i| items[i] != PAD).collect();
    if real.is_empty() {
        return Err(Error::Usage("cannot mask a sequence without items".into()));
    }
    let mut positions: Vec<usize> = real
        .iter()
        .copied()
        .filter(|_| rng.gen::<f64>() < mask_prob)
        .collect();
    if positions.is_empty() {
        positions.push(real[rng.gen_range(0..real.len())]);
    }
    let mut input = items.to_vec();
    let originals = positions.iter().map(|&p| items[p]).collect();
    for &p in &positions {
        input[p] = mask_id;
    }
    Ok(MaskedSequence {
        input,
        positions,
        originals,
    })
}

/// Inference layout for a bidirectional model: the most recent
/// `max_len − 1` items followed by the mask token, left-padded.
pub fn mlm_inference_input(history: &[ItemId], max_len: usize, mask_id: ItemId) -> Vec<ItemId> {
    let keep = max_len.saturating_sub(1);
    let window = &history[history.len().saturating_sub(keep)..];
    let mut row = vec![PAD; max_len - window.len() - 1];
    row.extend_from_slice(window);
    row.push(mask_id);
    row
}
