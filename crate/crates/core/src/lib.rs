//! Sequential next-item recommendation laboratory.
//!
//! The crate is organised around the data flow of an experiment:
//!
//! * [`data`] turns interaction logs into leave-one-out splits, padded
//!   batches and negative samples.
//! * [`losses`] holds every training objective as a pure function from
//!   scores to a scalar, together with its analytic gradient.
//! * [`autograd`] is a small reverse-mode tape used by [`models`] (GRU,
//!   causal transformer and bidirectional transformer, all with tied item
//!   embeddings).
//! * [`training`] dispatches a [`losses::LossSpec`] onto a model and runs
//!   Adam with early stopping and deterministic cost counters.
//! * [`evaluation`] computes full-rank and sampled HIT@k / NDCG@k as well as
//!   the per-position diagnostic curve.

pub mod autograd;
pub mod checkpoint;
pub mod data;
mod error;
pub mod evaluation;
pub mod losses;
pub mod metering;
pub mod models;
pub mod numerics;
pub mod synthetic;
pub mod training;

pub use error::{Error, Result};

/// Seedable generator used everywhere randomness is needed.
pub type Rng = rand_chacha::ChaCha8Rng;

/// Construct the crate's generator from a seed.
pub fn rng_from_seed(seed: u64) -> Rng {
    use rand::SeedableRng;
    Rng::seed_from_u64(seed)
}

/// Derive an independent stream from a base seed and a stream key.
pub fn derived_rng(seed: u64, key: u64) -> Rng {
    // splitmix64 finaliser over the combined key
    let mut z = seed ^ key.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    rng_from_seed(z ^ (z >> 31))
}
