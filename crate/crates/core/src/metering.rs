//! Deterministic cost counters.

use serde::{Deserialize, Serialize};

/// Counts how many item scores were computed and how many negatives drawn.
/// A full-catalog row over `|I|` items counts `|I|` score evaluations.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Meter {
    pub score_evals: u64,
    pub negative_samples: u64,
}

impl Meter {
    pub fn add_scores(&mut self, n: usize) {
        self.score_evals += n as u64;
    }

    pub fn add_negatives(&mut self, n: usize) {
        self.negative_samples += n as u64;
    }
}

impl std::ops::AddAssign for Meter {
    fn add_assign(&mut self, rhs: Self) {
        self.score_evals += rhs.score_evals;
        self.negative_samples += rhs.negative_samples;
    }
}

/// Monotonic stopwatch. On targets without a clock it always reads zero.
#[derive(Debug, Clone, Copy)]
pub struct Stopwatch {
    #[cfg(not(target_arch = "wasm32"))]
    start: std::time::Instant,
}

impl Stopwatch {
    pub fn start() -> Self {
        Self {
            #[cfg(not(target_arch = "wasm32"))]
            start: std::time::Instant::now(),
        }
    }

    pub fn seconds(&self) -> f64 {
        #[cfg(not(target_arch = "wasm32"))]
        {
            self.start.elapsed().as_secs_f64()
        }
        #[cfg(target_arch = "wasm32")]
        {
            0.0
        }
    }
}
