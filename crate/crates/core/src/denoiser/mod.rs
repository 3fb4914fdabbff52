//! The denoiser contract and its implementations.

mod checkpoint;
mod model;
mod oracle;
mod train;

use std::sync::atomic::{AtomicUsize, Ordering};

use thiserror::Error;

use crate::diffusion::{DenoiserOutput, SeqState};
use crate::grammar::{K, MASK_ID, PAD_ID};

pub use checkpoint::{Checkpoint, CheckpointError, TrainingMeta};
pub use model::{ModelConfig, TinyDenoiser};
pub use oracle::OracleDenoiser;
pub use train::{grad_check, pad_corpus, smoothed, train, GradCheck, TrainBatch, TrainConfig, Trainer};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DenoiserError {
    #[error("sequence length {len} exceeds the model maximum {max}")]
    LengthExceeded { len: usize, max: usize },
    #[error("no corpus sequence has length {0}")]
    LengthMismatch(usize),
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("invalid corpus: {0}")]
    InvalidCorpus(String),
    #[error("training diverged at step {step}: loss {loss}")]
    DivergedLoss { step: usize, loss: f64 },
    #[error("precondition violated: {0}")]
    Precondition(String),
}

/// Maps a partially masked sequence to per-position categorical predictions
/// over the clean tokens. Implementations must be deterministic.
pub trait Denoiser: Sync {
    fn predict(&self, z: &SeqState) -> Result<DenoiserOutput, DenoiserError>;
}

impl<D: Denoiser + ?Sized> Denoiser for &D {
    fn predict(&self, z: &SeqState) -> Result<DenoiserOutput, DenoiserError> {
        (**self).predict(z)
    }
}

/// Uniform predictions over the `K - 2` emittable tokens; `[PAD]` and
/// `[MASK]` get zero mass.
#[derive(Debug, Clone, Copy, Default)]
pub struct UniformDenoiser;

impl UniformDenoiser {
    pub const CATEGORIES: usize = K - 2;
}

impl Denoiser for UniformDenoiser {
    fn predict(&self, z: &SeqState) -> Result<DenoiserOutput, DenoiserError> {
        let mut probs = vec![1.0 / Self::CATEGORIES as f64; z.len() * K];
        for row in probs.chunks_mut(K) {
            row[PAD_ID as usize] = 0.0;
            row[MASK_ID as usize] = 0.0;
        }
        Ok(DenoiserOutput::from_probs(z.len(), probs))
    }
}

/// Wraps a denoiser and counts `predict` calls.
pub struct CountingDenoiser<D> {
    inner: D,
    calls: AtomicUsize,
}

impl<D: Denoiser> CountingDenoiser<D> {
    pub fn new(inner: D) -> Self {
        Self {
            inner,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }

    pub fn reset(&self) {
        self.calls.store(0, Ordering::Relaxed);
    }
}

impl<D: Denoiser> Denoiser for CountingDenoiser<D> {
    fn predict(&self, z: &SeqState) -> Result<DenoiserOutput, DenoiserError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.inner.predict(z)
    }
}
