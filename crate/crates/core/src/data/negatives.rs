use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::ItemId;
use crate::{Error, Result, Rng};

/// Which items a sampled negative must avoid.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NegativeMode {
    /// Only the positive item at that position.
    #[default]
    TargetOnly,
    /// Every item of the user's training sequence.
    UserHistory,
}

/// Sorted, deduplicated set of real item IDs to exclude.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExcludeSet(Vec<ItemId>);

impl ExcludeSet {
    pub fn new(items: impl IntoIterator<Item = ItemId>) -> Self {
        let mut v: Vec<ItemId> = items.into_iter().filter(|&i| i != 0).collect();
        v.sort_unstable();
        v.dedup();
        ExcludeSet(v)
    }

    pub fn single(item: ItemId) -> Self {
        Self::new([item])
    }

    pub fn contains(&self, item: ItemId) -> bool {
        self.0.binary_search(&item).is_ok()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Draw `n` items uniformly with replacement from `1..=num_items` minus
/// `exclude`.
pub fn sample_negatives(
    rng: &mut Rng,
    num_items: usize,
    exclude: &ExcludeSet,
    n: usize,
) -> Result<Vec<ItemId>> {
    let excluded = exclude.0.iter().filter(|&&i| (i as usize) <= num_items).count();
    if excluded >= num_items {
        return Err(Error::Unsampleable { catalog: num_items });
    }
    let mut out = Vec::with_capacity(n);
    if excluded * 2 > num_items {
        let allowed: Vec<ItemId> = (1..=num_items as ItemId)
            .filter(|&i| !exclude.contains(i))
            .collect();
        for _ in 0..n {
            out.push(allowed[rng.gen_range(0..allowed.len())]);
        }
    } else {
        while out.len() < n {
            let item = rng.gen_range(1..=num_items as ItemId);
            if !exclude.contains(item) {
                out.push(item);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng_from_seed;

    #[test]
    fn forced_outcome() {
        let got = sample_negatives(&mut rng_from_seed(0), 2, &ExcludeSet::single(1), 3).unwrap();
        assert_eq!(got, [2, 2, 2]);
    }

    #[test]
    fn full_exclusion_is_unsampleable() {
        let err = sample_negatives(&mut rng_from_seed(0), 3, &ExcludeSet::new([1, 2, 3]), 1);
        assert!(matches!(err, Err(Error::Unsampleable { catalog: 3 })));
    }

    #[test]
    fn deterministic_per_seed() {
        let ex = ExcludeSet::single(4);
        let a = sample_negatives(&mut rng_from_seed(5), 50, &ex, 20).unwrap();
        let b = sample_negatives(&mut rng_from_seed(5), 50, &ex, 20).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|&i| i != 4 && (1..=50).contains(&i)));
    }

    #[test]
    fn uniform_frequencies() {
        let draws = sample_negatives(&mut rng_from_seed(11), 10, &ExcludeSet::default(), 100_000)
            .unwrap();
        let mut counts = [0usize; 11];
        for d in draws {
            counts[d as usize] += 1;
        }
        assert_eq!(counts[0], 0);
        let mut chi2 = 0.0;
        for &c in &counts[1..] {
            let freq = c as f64 / 100_000.0;
            assert!((freq - 0.1).abs() < 0.01, "frequency {freq}");
            chi2 += (c as f64 - 10_000.0).powi(2) / 10_000.0;
        }
        // 9 degrees of freedom, 0.999 quantile
        assert!(chi2 < 27.88, "chi-square {chi2}");
    }

    #[test]
    fn dense_exclusion_path() {
        let ex = ExcludeSet::new(1..=8);
        let got = sample_negatives(&mut rng_from_seed(3), 10, &ex, 100).unwrap();
        assert!(got.iter().all(|&i| i == 9 || i == 10));
    }
}
