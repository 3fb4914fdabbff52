//! Generation loops: ancestral sampling of the exact reverse step and
//! confidence-ordered parallel decoding over (partially) masked templates.

use std::collections::BTreeMap;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::denoiser::{Denoiser, DenoiserError};
use crate::diffusion::{reverse_step_dist, softmax_rows, DiffusionError, NoiseSchedule, SeqState};
use crate::grammar::{fragment_spans, parse_ids, remask_serialization, TokenId, K, MASK_ID};
use crate::guidance::{corrupt, guided_logits, GuidanceError, GuidanceParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SamplerError {
    #[error("invalid sampler parameters: {0}")]
    InvalidParams(String),
    #[error("length histogram is empty")]
    EmptyHistogram,
    #[error(transparent)]
    Denoiser(#[from] DenoiserError),
    #[error(transparent)]
    Diffusion(#[from] DiffusionError),
    #[error(transparent)]
    Guidance(#[from] GuidanceError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerParams {
    /// Tokens confirmed per step.
    pub n: usize,
    pub tau: f64,
    pub r: f64,
    pub seed: u64,
}

impl Default for SamplerParams {
    fn default() -> Self {
        Self {
            n: 1,
            tau: 1.2,
            r: 2.0,
            seed: 0,
        }
    }
}

impl SamplerParams {
    pub fn validate(&self) -> Result<(), SamplerError> {
        if self.n == 0 {
            return Err(SamplerError::InvalidParams("N must be at least 1".into()));
        }
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return Err(SamplerError::InvalidParams(format!("tau={} must be positive", self.tau)));
        }
        if !(self.r >= 0.0) || !self.r.is_finite() {
            return Err(SamplerError::InvalidParams(format!("r={} must be non-negative", self.r)));
        }
        Ok(())
    }
}

/// Token ids where `[MASK]` marks the positions to fill.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Template {
    pub ids: Vec<TokenId>,
}

impl Template {
    pub fn new(ids: Vec<TokenId>) -> Self {
        Self { ids }
    }

    pub fn fully_masked(len: usize) -> Self {
        Self {
            ids: vec![MASK_ID; len],
        }
    }

    pub fn masked_count(&self) -> usize {
        self.ids.iter().filter(|&&id| id == MASK_ID).count()
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Empirical length histogram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthModel {
    lengths: Vec<usize>,
    probs: Vec<f64>,
}

impl LengthModel {
    pub fn from_lengths(lengths: impl IntoIterator<Item = usize>) -> Result<Self, SamplerError> {
        let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
        for l in lengths.into_iter().filter(|&l| l > 0) {
            *counts.entry(l).or_default() += 1;
        }
        let total: usize = counts.values().sum();
        if total == 0 {
            return Err(SamplerError::EmptyHistogram);
        }
        Ok(Self {
            lengths: counts.keys().copied().collect(),
            probs: counts.values().map(|&c| c as f64 / total as f64).collect(),
        })
    }

    pub fn from_weights(weights: &[(usize, f64)]) -> Result<Self, SamplerError> {
        let kept: Vec<(usize, f64)> = weights.iter().copied().filter(|&(l, w)| l > 0 && w > 0.0).collect();
        let total: f64 = kept.iter().map(|x| x.1).sum();
        if kept.is_empty() || !total.is_finite() {
            return Err(SamplerError::EmptyHistogram);
        }
        Ok(Self {
            lengths: kept.iter().map(|x| x.0).collect(),
            probs: kept.iter().map(|x| x.1 / total).collect(),
        })
    }

    /// Whole-sequence lengths, capped at `max_len`.
    pub fn from_corpus(corpus: &[Vec<TokenId>], max_len: usize) -> Result<Self, SamplerError> {
        Self::from_lengths(corpus.iter().map(Vec::len).filter(|&l| l <= max_len))
    }

    /// Token-span lengths of the fragments obtained by cutting every non-ring
    /// single bond. Sequences that do not parse are skipped.
    pub fn fragment_spans(corpus: &[Vec<TokenId>]) -> Result<Self, SamplerError> {
        let mut lengths = Vec::new();
        for ids in corpus {
            let Ok(g) = parse_ids(ids, false) else { continue };
            let Ok(ser) = remask_serialization(&g) else { continue };
            lengths.extend(fragment_spans(&ser).into_iter().map(|(a, b)| b - a));
        }
        Self::from_lengths(lengths)
    }

    pub fn support(&self) -> &[usize] {
        &self.lengths
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (&l, &p) in self.lengths.iter().zip(&self.probs) {
            acc += p;
            if u < acc {
                return l;
            }
        }
        *self.lengths.last().unwrap()
    }
}

pub fn sample_length<R: Rng + ?Sized>(model: &LengthModel, rng: &mut R) -> usize {
    model.sample(rng)
}

/// Row-wise `softmax(logits / tau)` over `K`-wide rows.
pub fn temperature_probs(logits: &[f64], tau: f64) -> Vec<f64> {
    softmax_rows(logits, K, tau)
}

/// `log p[l][sampled] + r * t * G` with an independent standard Gumbel draw
/// `G` per entry of `sampled`, which lists `(position, token)` pairs.
pub fn confidence_scores<R: Rng + ?Sized>(
    sampled: &[(usize, TokenId)],
    probs: &[f64],
    t: f64,
    r: f64,
    rng: &mut R,
) -> Vec<f64> {
    sampled
        .iter()
        .map(|&(l, id)| {
            let lp = probs[l * K + id as usize].ln();
            let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
            let g = -(-u.ln()).ln();
            lp + r * t * g
        })
        .collect()
}

fn draw_category<R: Rng + ?Sized>(row: &[f64], rng: &mut R) -> TokenId {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in row.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = i;
            if u < acc {
                return i as TokenId;
            }
        }
    }
    last as TokenId
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Generation {
    pub ids: Vec<TokenId>,
    /// Denoiser evaluations, counting the corrupted input under guidance.
    pub calls: usize,
}

fn predict_logits<D: Denoiser + ?Sized>(
    denoiser: &D,
    z: &SeqState,
    guidance: Option<(&GuidanceParams, &mut ChaCha8Rng)>,
    calls: &mut usize,
) -> Result<Vec<f64>, SamplerError> {
    let good = denoiser.predict(z)?;
    *calls += 1;
    match guidance {
        Some((g, grng)) if g.is_active() => {
            let poor_in = corrupt(z, g.gamma, grng)?;
            let poor = denoiser.predict(&poor_in)?;
            *calls += 1;
            Ok(guided_logits(&good.logits, &poor.logits, g.w)?)
        }
        _ => Ok(good.logits),
    }
}

/// Confidence-ordered decoding.
///
/// Runs `ceil(M / N)` steps over the grid `t_k = 1 - k / steps`. Every step
/// re-predicts all positions, samples a candidate for each masked position at
/// temperature `tau`, and confirms the `N` candidates with the highest
/// confidence (ties go to the lower position). Unconfirmed candidates are
/// discarded. Guidance corruption uses its own seeded stream.
pub fn generate<D: Denoiser + ?Sized, R: Rng + ?Sized>(
    denoiser: &D,
    template: &Template,
    params: &SamplerParams,
    guidance: Option<&GuidanceParams>,
    rng: &mut R,
) -> Result<Generation, SamplerError> {
    params.validate()?;
    if let Some(g) = guidance {
        g.validate()?;
    }
    let mut ids = template.ids.clone();
    let m = template.masked_count();
    if m == 0 {
        return Ok(Generation { ids, calls: 0 });
    }
    let steps = m.div_ceil(params.n);
    let mut grng = guidance.map(|g| ChaCha8Rng::seed_from_u64(g.seed));
    let mut calls = 0;
    for k in 0..steps {
        let t = 1.0 - k as f64 / steps as f64;
        let z = SeqState::new(ids.clone(), t);
        let logits = predict_logits(denoiser, &z, guidance.zip(grng.as_mut()), &mut calls)?;
        let probs = temperature_probs(&logits, params.tau);
        let masked = z.masked_positions();
        let sampled: Vec<(usize, TokenId)> = masked
            .iter()
            .map(|&l| (l, draw_category(&probs[l * K..(l + 1) * K], rng)))
            .collect();
        let scores = confidence_scores(&sampled, &probs, t, params.r, rng);
        let mut order: Vec<usize> = (0..sampled.len()).collect();
        order.sort_by(|&a, &b| {
            scores[b]
                .partial_cmp(&scores[a])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(sampled[a].0.cmp(&sampled[b].0))
        });
        for &i in order.iter().take(params.n) {
            let (l, id) = sampled[i];
            ids[l] = id;
        }
    }
    debug_assert!(!ids.contains(&MASK_ID));
    Ok(Generation { ids, calls })
}

/// Ancestral sampling of the exact reverse step over `steps` uniform intervals.
/// Steps that find no masked position skip the denoiser.
pub fn generate_standard<D: Denoiser + ?Sized, R: Rng + ?Sized>(
    denoiser: &D,
    template: &Template,
    sched: &NoiseSchedule,
    steps: usize,
    rng: &mut R,
) -> Result<Generation, SamplerError> {
    if steps == 0 {
        return Err(SamplerError::InvalidParams("steps must be at least 1".into()));
    }
    let mut z = SeqState::new(template.ids.clone(), 1.0);
    let mut calls = 0;
    for k in 0..steps {
        if !z.ids.contains(&MASK_ID) {
            break;
        }
        z.t = 1.0 - k as f64 / steps as f64;
        let s = 1.0 - (k + 1) as f64 / steps as f64;
        let out = denoiser.predict(&z)?;
        calls += 1;
        let dist = reverse_step_dist(&z, &out, s.max(0.0), sched)?;
        for l in z.masked_positions() {
            z.ids[l] = draw_category(&dist[l * K..(l + 1) * K], rng);
        }
    }
    Ok(Generation { ids: z.ids, calls })
}

/// Independent RNG stream `index` of a seed.
pub fn stream_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Runs `count` independent generations in parallel. Run `i` samples lengths
/// and tokens from stream `i` of `params.seed`, and its guidance corruption
/// from stream `i` of the guidance seed.
pub fn generate_batch<D: Denoiser + ?Sized>(
    denoiser: &D,
    lengths: &LengthModel,
    count: usize,
    params: &SamplerParams,
    guidance: Option<&GuidanceParams>,
) -> Result<Vec<Generation>, SamplerError> {
    (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(params.seed, i as u64);
            let template = Template::fully_masked(lengths.sample(&mut rng));
            let g = guidance.map(|g| GuidanceParams {
                seed: stream_rng(g.seed, i as u64).gen(),
                ..*g
            });
            generate(denoiser, &template, params, g.as_ref(), &mut rng)
        })
        .collect()
}

/// Empirical distribution of whole sequences.
pub fn histogram(samples: &[Vec<TokenId>]) -> BTreeMap<Vec<TokenId>, f64> {
    let mut h: BTreeMap<Vec<TokenId>, f64> = BTreeMap::new();
    for s in samples {
        *h.entry(s.clone()).or_default() += 1.0;
    }
    let n = samples.len() as f64;
    h.values_mut().for_each(|v| *v /= n);
    h
}

/// Total-variation distance between two distributions over sequences.
pub fn total_variation(
    p: &BTreeMap<Vec<TokenId>, f64>,
    q: &BTreeMap<Vec<TokenId>, f64>,
) -> f64 {
    let keys: std::collections::BTreeSet<&Vec<TokenId>> = p.keys().chain(q.keys()).collect();
    0.5 * keys
        .into_iter()
        .map(|k| (p.get(k).copied().unwrap_or(0.0) - q.get(k).copied().unwrap_or(0.0)).abs())
        .sum::<f64>()
}

/// Draws from a categorical over sequences; used by tests and tooling.
pub fn sample_weighted<R: Rng + ?Sized>(items: &[(Vec<TokenId>, f64)], rng: &mut R) -> Vec<TokenId> {
    let dist = WeightedIndex::new(items.iter().map(|x| x.1)).expect("positive weights");
    items[dist.sample(rng)].0.clone()
}
