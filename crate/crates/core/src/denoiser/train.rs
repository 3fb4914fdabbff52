use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::checkpoint::{Checkpoint, TrainingMeta};
use super::model::{round_to_f32, sequence_loss, ModelConfig, TinyDenoiser};
use super::DenoiserError;
use crate::diffusion::{stratified_times, NoiseSchedule};
use crate::grammar::{TokenId, MASK_ID, PAD_ID};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch: usize,
    pub lr: f64,
    pub seed: u64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// Global gradient-norm clip; `0` disables clipping.
    pub clip: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 2000,
            batch: 16,
            lr: 3e-3,
            seed: 0,
            weight_decay: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            clip: 1.0,
        }
    }
}

/// A fixed set of corrupted training examples.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainBatch {
    pub clean: Vec<Vec<TokenId>>,
    pub noisy: Vec<Vec<TokenId>>,
    pub t: Vec<f64>,
    /// Positive per-example NELBO weight `-alpha'(t) / (1 - alpha(t))`.
    pub weight: Vec<f64>,
}

impl TrainBatch {
    /// Draws `n` sequences with replacement, one stratified time each, and
    /// masks their non-pad positions with probability `1 - alpha(t)`.
    pub fn sample<R: Rng + ?Sized>(
        corpus: &[Vec<TokenId>],
        n: usize,
        sched: &NoiseSchedule,
        rng: &mut R,
    ) -> Self {
        let times = stratified_times(n, rng);
        let mut out = Self {
            clean: Vec::with_capacity(n),
            noisy: Vec::with_capacity(n),
            t: times.clone(),
            weight: times.iter().map(|&t| -sched.weight(t)).collect(),
        };
        for &t in &times {
            let x = corpus[rng.gen_range(0..corpus.len())].clone();
            let keep = sched.alpha(t);
            let z = x
                .iter()
                .map(|&id| {
                    if id == PAD_ID || rng.gen::<f64>() < keep {
                        id
                    } else {
                        MASK_ID
                    }
                })
                .collect();
            out.clean.push(x);
            out.noisy.push(z);
        }
        out
    }

    pub fn len(&self) -> usize {
        self.clean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clean.is_empty()
    }

    /// Mean per-example loss of `params` on this batch.
    pub fn loss(&self, cfg: &ModelConfig, params: &[f64]) -> f64 {
        (0..self.len())
            .into_par_iter()
            .map(|i| sequence_loss(cfg, params, &self.clean[i], &self.noisy[i], self.t[i], self.weight[i], None))
            .collect::<Vec<_>>()
            .iter()
            .sum::<f64>()
            / self.len() as f64
    }

    /// Mean loss and its gradient. Per-example work runs in parallel; results
    /// are reduced in example order so the outcome is thread-count independent.
    pub fn loss_and_grad(&self, cfg: &ModelConfig, params: &[f64]) -> (f64, Vec<f64>) {
        let parts: Vec<(f64, Vec<f64>)> = (0..self.len())
            .into_par_iter()
            .map(|i| {
                let mut g = vec![0.0; params.len()];
                let l = sequence_loss(
                    cfg,
                    params,
                    &self.clean[i],
                    &self.noisy[i],
                    self.t[i],
                    self.weight[i],
                    Some(&mut g),
                );
                (l, g)
            })
            .collect();
        let n = self.len() as f64;
        let mut grad = vec![0.0; params.len()];
        let mut loss = 0.0;
        for (l, g) in parts {
            loss += l;
            for (a, b) in grad.iter_mut().zip(g) {
                *a += b;
            }
        }
        grad.iter_mut().for_each(|g| *g /= n);
        (loss / n, grad)
    }
}

/// Pads with `[PAD]` or truncates every sequence to the longest length, capped at `max_len`.
pub fn pad_corpus(corpus: &[Vec<TokenId>], max_len: usize) -> Vec<Vec<TokenId>> {
    let width = corpus.iter().map(Vec::len).max().unwrap_or(0).min(max_len);
    corpus
        .iter()
        .map(|s| {
            let mut s: Vec<TokenId> = s.iter().copied().take(width).collect();
            s.resize(width, PAD_ID);
            s
        })
        .collect()
}

/// AdamW training loop over the weighted masked cross-entropy.
pub struct Trainer {
    model: TinyDenoiser,
    config: TrainConfig,
    sched: NoiseSchedule,
    corpus: Vec<Vec<TokenId>>,
    rng: ChaCha8Rng,
    m: Vec<f64>,
    v: Vec<f64>,
    step: usize,
    losses: Vec<f64>,
}

impl Trainer {
    pub fn new(
        corpus: &[Vec<TokenId>],
        model_config: ModelConfig,
        config: TrainConfig,
    ) -> Result<Self, DenoiserError> {
        if corpus.is_empty() || corpus.iter().all(Vec::is_empty) {
            return Err(DenoiserError::EmptyCorpus);
        }
        if corpus.iter().any(|s| s.contains(&MASK_ID)) {
            return Err(DenoiserError::InvalidCorpus("corpus contains mask tokens".into()));
        }
        if config.batch == 0 || !(config.lr >= 0.0) {
            return Err(DenoiserError::Precondition("batch must be positive and lr non-negative".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let model = TinyDenoiser::new(model_config, &mut rng);
        let n = model.param_count();
        Ok(Self {
            model,
            config,
            sched: NoiseSchedule::default(),
            corpus: pad_corpus(corpus, model_config.max_len),
            rng,
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
            losses: Vec::new(),
        })
    }

    /// Replaces the initial weights, e.g. to continue from a checkpoint.
    pub fn with_model(mut self, model: TinyDenoiser) -> Result<Self, DenoiserError> {
        if model.params.len() != self.model.params.len() {
            return Err(DenoiserError::Precondition("model shape differs".into()));
        }
        self.model = model;
        Ok(self)
    }

    pub fn model(&self) -> &TinyDenoiser {
        &self.model
    }

    pub fn losses(&self) -> &[f64] {
        &self.losses
    }

    pub fn steps_done(&self) -> usize {
        self.step
    }

    pub fn schedule(&self) -> &NoiseSchedule {
        &self.sched
    }

    /// One optimizer step; returns the batch loss before the update.
    pub fn step(&mut self) -> Result<f64, DenoiserError> {
        let batch = TrainBatch::sample(&self.corpus, self.config.batch, &self.sched, &mut self.rng);
        let (loss, mut grad) = batch.loss_and_grad(&self.model.config, &self.model.params);
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(DenoiserError::DivergedLoss {
                step: self.step,
                loss,
            });
        }
        let c = &self.config;
        if c.clip > 0.0 {
            let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            if norm > c.clip {
                grad.iter_mut().for_each(|g| *g *= c.clip / norm);
            }
        }
        self.step += 1;
        let b1t = 1.0 - c.beta1.powi(self.step as i32);
        let b2t = 1.0 - c.beta2.powi(self.step as i32);
        for (i, g) in grad.into_iter().enumerate() {
            self.m[i] = c.beta1 * self.m[i] + (1.0 - c.beta1) * g;
            self.v[i] = c.beta2 * self.v[i] + (1.0 - c.beta2) * g * g;
            let upd = (self.m[i] / b1t) / ((self.v[i] / b2t).sqrt() + 1e-8);
            let p = &mut self.model.params[i];
            *p -= c.lr * (upd + c.weight_decay * *p);
        }
        round_to_f32(&mut self.model.params);
        self.losses.push(loss);
        Ok(loss)
    }

    pub fn run(&mut self) -> Result<(), DenoiserError> {
        while self.step < self.config.steps {
            self.step()?;
        }
        Ok(())
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::from_model(
            &self.model,
            TrainingMeta {
                seed: self.config.seed,
                steps: self.step,
                final_loss: self.losses.last().copied(),
            },
        )
    }

    pub fn into_model(self) -> TinyDenoiser {
        self.model
    }
}

/// Trains from scratch and returns the checkpoint together with the loss trace.
pub fn train(
    corpus: &[Vec<TokenId>],
    model_config: ModelConfig,
    config: TrainConfig,
) -> Result<(Checkpoint, Vec<f64>), DenoiserError> {
    let mut trainer = Trainer::new(corpus, model_config, config)?;
    trainer.run()?;
    Ok((trainer.checkpoint(), trainer.losses.clone()))
}

/// Trailing moving average with window `w` (shorter at the start).
pub fn smoothed(losses: &[f64], w: usize) -> Vec<f64> {
    let w = w.max(1);
    let mut out = Vec::with_capacity(losses.len());
    let mut acc = 0.0;
    for i in 0..losses.len() {
        acc += losses[i];
        if i >= w {
            acc -= losses[i - w];
        }
        out.push(acc / (i + 1).min(w) as f64);
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub checked: usize,
}

/// Denominator floor for relative errors, so that parameters with tiny
/// gradients are judged on absolute error.
const REL_FLOOR: f64 = 1e-4;

/// Compares the analytic batch gradient with central differences on
/// `n_params` parameters: half drawn from all parameters, half from those
/// with a non-zero analytic gradient.
pub fn grad_check<R: Rng + ?Sized>(
    model: &TinyDenoiser,
    batch: &TrainBatch,
    eps: f64,
    n_params: usize,
    rng: &mut R,
) -> Result<GradCheck, DenoiserError> {
    if !(1e-6..=1e-3).contains(&eps) {
        return Err(DenoiserError::Precondition(format!("eps={eps} outside [1e-6, 1e-3]")));
    }
    if batch.is_empty() {
        return Err(DenoiserError::Precondition("empty batch".into()));
    }
    let cfg = &model.config;
    let (_, grad) = batch.loss_and_grad(cfg, &model.params);
    let n = model.params.len();
    let active: Vec<usize> = (0..n).filter(|&i| grad[i] != 0.0).collect();
    let half = n_params / 2;
    let mut idx: Vec<usize> = sample(rng, n, (n_params - half).min(n)).into_vec();
    if !active.is_empty() {
        idx.extend(sample(rng, active.len(), half.min(active.len())).into_iter().map(|i| active[i]));
    }
    let mut params = model.params.clone();
    let mut worst: f64 = 0.0;
    for &i in &idx {
        let p0 = params[i];
        params[i] = p0 + eps;
        let up = batch.loss(cfg, &params);
        params[i] = p0 - eps;
        let down = batch.loss(cfg, &params);
        params[i] = p0;
        let numeric = (up - down) / (2.0 * eps);
        if !numeric.is_finite() || !grad[i].is_finite() {
            return Ok(GradCheck {
                max_rel_error: f64::INFINITY,
                checked: idx.len(),
            });
        }
        let denom = grad[i].abs().max(numeric.abs()).max(REL_FLOOR);
        worst = worst.max((grad[i] - numeric).abs() / denom);
    }
    Ok(GradCheck {
        max_rel_error: worst,
        checked: idx.len(),
    })
}
