//! Masked diffusion: noise schedule, forward masking, the exact reverse step,
//! its first-order CTMC counterpart, and the Monte Carlo NELBO.

use rand::Rng;
use thiserror::Error;

use crate::denoiser::{Denoiser, DenoiserError};
use crate::grammar::{TokenId, K, MASK_ID};

/// Stand-in for `log 0` in logit space; finite so linear logit combinations stay defined.
pub const LOG_ZERO: f64 = -1e30;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiffusionError {
    #[error("invalid time: {0}")]
    InvalidTime(String),
    #[error("clean sequence contains the mask token at position {0}")]
    MaskInClean(usize),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error(transparent)]
    Denoiser(#[from] DenoiserError),
}

/// Keep-probability schedule `alpha(t)`, decreasing from 1 at t=0 to ~0 at t=1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseSchedule {
    /// `alpha(t) = 1 - (1 - eps) t`
    Linear { eps: f64 },
    /// `alpha(t) = cos(pi t / 2)`
    Cosine,
}

impl Default for NoiseSchedule {
    fn default() -> Self {
        NoiseSchedule::Linear { eps: 1e-4 }
    }
}

impl NoiseSchedule {
    pub fn alpha(&self, t: f64) -> f64 {
        match *self {
            NoiseSchedule::Linear { eps } => 1.0 - (1.0 - eps) * t,
            NoiseSchedule::Cosine => (std::f64::consts::FRAC_PI_2 * t).cos(),
        }
    }

    pub fn alpha_prime(&self, t: f64) -> f64 {
        match *self {
            NoiseSchedule::Linear { eps } => -(1.0 - eps),
            NoiseSchedule::Cosine => {
                -std::f64::consts::FRAC_PI_2 * (std::f64::consts::FRAC_PI_2 * t).sin()
            }
        }
    }

    /// NELBO weight `alpha'(t) / (1 - alpha(t))`; negative for t in (0, 1].
    pub fn weight(&self, t: f64) -> f64 {
        self.alpha_prime(t) / (1.0 - self.alpha(t))
    }
}

/// The diffusion state `z_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct SeqState {
    pub ids: Vec<TokenId>,
    pub t: f64,
}

impl SeqState {
    pub fn new(ids: Vec<TokenId>, t: f64) -> Self {
        Self { ids, t }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn is_masked(&self, l: usize) -> bool {
        self.ids[l] == MASK_ID
    }

    pub fn masked_positions(&self) -> Vec<usize> {
        (0..self.ids.len()).filter(|&l| self.is_masked(l)).collect()
    }
}

/// Per-position categorical predictions, stored row-major as `L x K`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserOutput {
    pub len: usize,
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
}

impl DenoiserOutput {
    pub fn from_logits(len: usize, logits: Vec<f64>) -> Self {
        assert_eq!(logits.len(), len * K);
        let probs = softmax_rows(&logits, K, 1.0);
        Self { len, logits, probs }
    }

    /// Logits are `ln p`, with [`LOG_ZERO`] for impossible categories.
    pub fn from_probs(len: usize, probs: Vec<f64>) -> Self {
        assert_eq!(probs.len(), len * K);
        let logits = probs
            .iter()
            .map(|&p| if p > 0.0 { p.ln() } else { LOG_ZERO })
            .collect();
        Self { len, logits, probs }
    }

    pub fn row(&self, l: usize) -> &[f64] {
        &self.probs[l * K..(l + 1) * K]
    }

    pub fn logit_row(&self, l: usize) -> &[f64] {
        &self.logits[l * K..(l + 1) * K]
    }

    /// Row-normalized log-probabilities.
    pub fn log_probs(&self) -> Vec<f64> {
        let mut out = self.logits.clone();
        for row in out.chunks_mut(K) {
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + row.iter().map(|&x| (x - m).exp()).sum::<f64>().ln();
            for x in row.iter_mut() {
                *x -= lse;
            }
        }
        out
    }
}

/// Row-wise `softmax(x / tau)` over rows of width `k`.
pub fn softmax_rows(x: &[f64], k: usize, tau: f64) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for (row, dst) in x.chunks(k).zip(out.chunks_mut(k)) {
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for (d, &v) in dst.iter_mut().zip(row) {
            *d = ((v - m) / tau).exp();
            z += *d;
        }
        for d in dst.iter_mut() {
            *d /= z;
        }
    }
    out
}

fn check_time(t: f64) -> Result<(), DiffusionError> {
    if !(0.0..=1.0).contains(&t) || t.is_nan() {
        return Err(DiffusionError::InvalidTime(format!("t={t} outside [0, 1]")));
    }
    Ok(())
}

/// Keeps each token with probability `alpha(t)`, otherwise masks it.
pub fn forward_mask<R: Rng + ?Sized>(
    x: &[TokenId],
    t: f64,
    sched: &NoiseSchedule,
    rng: &mut R,
) -> Result<SeqState, DiffusionError> {
    check_time(t)?;
    if let Some(l) = x.iter().position(|&id| id == MASK_ID) {
        return Err(DiffusionError::MaskInClean(l));
    }
    let keep = sched.alpha(t);
    let ids = x
        .iter()
        .map(|&id| if rng.gen::<f64>() < keep { id } else { MASK_ID })
        .collect();
    Ok(SeqState::new(ids, t))
}

/// Exact reverse transition from `z_t` to time `s < t`, as an `L x K` matrix.
///
/// Unmasked positions are carried over. A masked position stays masked with
/// probability `(1 - a_s) / (1 - a_t)` and becomes category `i` with
/// probability `(a_s - a_t) / (1 - a_t) * probs[l][i]`.
pub fn reverse_step_dist(
    z: &SeqState,
    out: &DenoiserOutput,
    s: f64,
    sched: &NoiseSchedule,
) -> Result<Vec<f64>, DiffusionError> {
    check_time(s)?;
    check_time(z.t)?;
    if s >= z.t {
        return Err(DiffusionError::InvalidTime(format!(
            "target time {s} must precede {}",
            z.t
        )));
    }
    if out.len != z.len() {
        return Err(DiffusionError::Shape(format!(
            "{} predictions for {} positions",
            out.len,
            z.len()
        )));
    }
    let (a_s, a_t) = (sched.alpha(s), sched.alpha(z.t));
    let unmask = (a_s - a_t) / (1.0 - a_t);
    let stay = (1.0 - a_s) / (1.0 - a_t);
    let mut dist = vec![0.0; z.len() * K];
    for l in 0..z.len() {
        let row = &mut dist[l * K..(l + 1) * K];
        if z.is_masked(l) {
            for (d, &p) in row.iter_mut().zip(out.row(l)) {
                *d = unmask * p;
            }
            row[MASK_ID as usize] += stay;
        } else {
            row[z.ids[l] as usize] = 1.0;
        }
    }
    Ok(dist)
}

/// First-order step of the reverse CTMC over `[t - dt, t]`.
///
/// A masked position jumps to category `i` with probability
/// `-dt * alpha'(t) / (1 - alpha(t)) * probs[l][i]` and keeps the rest of
/// the mass on the mask; unmasked positions do not move.
pub fn rate_matrix_step(
    z: &SeqState,
    out: &DenoiserOutput,
    t: f64,
    dt: f64,
    sched: &NoiseSchedule,
) -> Result<Vec<f64>, DiffusionError> {
    check_time(t)?;
    if !(dt > 0.0 && dt <= 1e-3) || t - dt < 0.0 {
        return Err(DiffusionError::InvalidTime(format!(
            "step dt={dt} from t={t} not admissible"
        )));
    }
    if out.len != z.len() {
        return Err(DiffusionError::Shape(format!(
            "{} predictions for {} positions",
            out.len,
            z.len()
        )));
    }
    let rate = -dt * sched.weight(t);
    let mut dist = vec![0.0; z.len() * K];
    for l in 0..z.len() {
        let row = &mut dist[l * K..(l + 1) * K];
        if z.is_masked(l) {
            let mut moved = 0.0;
            for (i, (d, &p)) in row.iter_mut().zip(out.row(l)).enumerate() {
                if i != MASK_ID as usize {
                    *d = rate * p;
                    moved += *d;
                }
            }
            row[MASK_ID as usize] = 1.0 - moved;
        } else {
            row[z.ids[l] as usize] = 1.0;
        }
    }
    Ok(dist)
}

/// Stratified times `(i + u) / n` for `i in 0..n` with one shared uniform `u`.
pub fn stratified_times<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    let u: f64 = rng.gen();
    (0..n)
        .map(|i| ((i as f64 + u) / n as f64).clamp(f64::MIN_POSITIVE, 1.0))
        .collect()
}

/// Monte Carlo NELBO: the mean over `n_mc` stratified times of
/// `alpha'/(1 - alpha) * sum over masked l of log p_theta(x_l | z_t)`.
/// Both factors are non-positive, so the loss is non-negative.
pub fn nelbo<D: Denoiser + ?Sized, R: Rng + ?Sized>(
    x: &[TokenId],
    denoiser: &D,
    sched: &NoiseSchedule,
    n_mc: usize,
    rng: &mut R,
) -> Result<f64, DiffusionError> {
    assert!(n_mc >= 1, "n_mc must be positive");
    let mut acc = 0.0;
    for t in stratified_times(n_mc, rng) {
        let z = forward_mask(x, t, sched, rng)?;
        let masked = z.masked_positions();
        if masked.is_empty() {
            continue;
        }
        let out = denoiser.predict(&z)?;
        let ll: f64 = masked
            .iter()
            .map(|&l| out.row(l)[x[l] as usize].ln())
            .sum();
        acc += sched.weight(t) * ll;
    }
    Ok(acc / n_mc as f64)
}
