//! Shared fixtures for the benchmarks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use safediff_core::denoiser::{ModelConfig, TinyDenoiser};
use safediff_core::tasks::synthetic_corpus;

/// Deterministic synthetic molecules.
pub fn molecules(n: usize) -> Vec<String> {
    synthetic_corpus(n, &mut ChaCha8Rng::seed_from_u64(7))
}

/// Untrained model with the default shape; the forward cost does not depend on the weights.
pub fn model() -> TinyDenoiser {
    TinyDenoiser::new(ModelConfig::default(), &mut ChaCha8Rng::seed_from_u64(7))
}
