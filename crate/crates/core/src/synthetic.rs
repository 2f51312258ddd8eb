//! Synthetic interaction logs with known structure.

use std::fmt::Write as _;

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::index;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data::RawSequence;
use crate::{derived_rng, Error, Result};

fn user_name(u: usize) -> String {
    format!("u{u}")
}

fn item_name(i: usize) -> String {
    format!("i{i}")
}

/// Every user walks the cycle `1 → 2 → … → items → 1` from a random start,
/// so each item has exactly one successor.
pub fn planted_pattern(
    users: usize,
    items: usize,
    min_len: usize,
    max_len: usize,
    seed: u64,
) -> Result<Vec<RawSequence>> {
    if items < 2 || min_len < 3 || max_len < min_len {
        return Err(Error::Config(
            "planted pattern needs ≥2 items and 3 ≤ min_len ≤ max_len".into(),
        ));
    }
    let mut rng = derived_rng(seed, 0x5e9);
    Ok((0..users)
        .map(|u| {
            let start = rng.gen_range(0..items);
            let len = rng.gen_range(min_len..=max_len);
            RawSequence {
                user: user_name(u),
                items: (0..len).map(|k| item_name((start + k) % items + 1)).collect(),
            }
        })
        .collect())
}

/// First-order Markov log: each item has a few fixed successors, and with
/// probability `noise` the next item is instead drawn from a Zipf-like
/// popularity distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarkovConfig {
    pub users: usize,
    pub items: usize,
    pub successors: usize,
    pub noise: f64,
    pub min_len: usize,
    pub max_len: usize,
}

impl Default for MarkovConfig {
    fn default() -> Self {
        Self {
            users: 2000,
            items: 400,
            successors: 8,
            noise: 0.2,
            min_len: 5,
            max_len: 30,
        }
    }
}

pub fn markov_log(config: &MarkovConfig, seed: u64) -> Result<Vec<RawSequence>> {
    let c = config;
    if c.items <= c.successors || c.successors == 0 {
        return Err(Error::Config("need 1 ≤ successors < items".into()));
    }
    if c.min_len < 3 || c.max_len < c.min_len || !(0.0..=1.0).contains(&c.noise) {
        return Err(Error::Config("need 3 ≤ min_len ≤ max_len and noise in [0, 1]".into()));
    }
    let mut rng = derived_rng(seed, 0x3a7c);
    let table: Vec<Vec<usize>> = (0..c.items)
        .map(|i| {
            index::sample(&mut rng, c.items - 1, c.successors)
                .into_iter()
                .map(|j| if j >= i { j + 1 } else { j })
                .collect()
        })
        .collect();
    // successor k is chosen with weight 2^-k
    let succ_weights: Vec<f64> = (0..c.successors).map(|k| 0.5f64.powi(k as i32)).collect();
    let succ = WeightedIndex::new(&succ_weights).expect("positive weights");
    let popularity =
        WeightedIndex::new((0..c.items).map(|i| 1.0 / (i + 1) as f64)).expect("positive weights");

    Ok((0..c.users)
        .map(|u| {
            let len = rng.gen_range(c.min_len..=c.max_len);
            let mut cur = popularity.sample(&mut rng);
            let mut items = Vec::with_capacity(len);
            items.push(item_name(cur + 1));
            while items.len() < len {
                cur = if rng.gen::<f64>() < c.noise {
                    popularity.sample(&mut rng)
                } else {
                    table[cur][succ.sample(&mut rng)]
                };
                items.push(item_name(cur + 1));
            }
            RawSequence {
                user: user_name(u),
                items,
            }
        })
        .collect())
}

/// Render as `user item1 item2 ...` lines.
pub fn to_sequence_lines(sequences: &[RawSequence]) -> String {
    let mut out = String::new();
    for s in sequences {
        out.push_str(&s.user);
        for item in &s.items {
            let _ = write!(out, " {item}");
        }
        out.push('\n');
    }
    out
}
