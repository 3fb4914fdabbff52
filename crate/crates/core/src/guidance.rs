//! Molecular context guidance: extrapolate from predictions on a further
//! corrupted input towards predictions on the actual input.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diffusion::{softmax_rows, NoiseSchedule, SeqState, LOG_ZERO};
use crate::grammar::{K, MASK_ID};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GuidanceError {
    #[error("logit shapes differ: {0} vs {1}")]
    ShapeMismatch(usize, usize),
    #[error("gamma={0} outside [0, 1]")]
    InvalidGamma(f64),
    #[error("invalid step: {0}")]
    InvalidStep(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GuidanceParams {
    pub w: f64,
    pub gamma: f64,
    /// Seed of the corruption stream, kept apart from the sampling stream.
    pub seed: u64,
}

impl Default for GuidanceParams {
    fn default() -> Self {
        Self {
            w: 2.0,
            gamma: 0.0,
            seed: 0,
        }
    }
}

impl GuidanceParams {
    pub fn validate(&self) -> Result<(), GuidanceError> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(GuidanceError::InvalidGamma(self.gamma));
        }
        Ok(())
    }

    /// Guidance changes nothing when `w == 1` or `gamma == 0`.
    pub fn is_active(&self) -> bool {
        self.w != 1.0 && self.gamma > 0.0
    }
}

/// Masks `ceil(gamma * U)` of the `U` unmasked positions, chosen uniformly.
pub fn corrupt<R: Rng + ?Sized>(
    z: &SeqState,
    gamma: f64,
    rng: &mut R,
) -> Result<SeqState, GuidanceError> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(GuidanceError::InvalidGamma(gamma));
    }
    let unmasked: Vec<usize> = (0..z.len()).filter(|&l| !z.is_masked(l)).collect();
    let u = unmasked.len();
    // the small offset keeps e.g. 0.3 * 10 from rounding up to 4
    let n = ((gamma * u as f64 - 1e-9).ceil().max(0.0) as usize).min(u);
    let mut out = z.clone();
    if n == 0 {
        return Ok(out);
    }
    for i in sample(rng, u, n) {
        out.ids[unmasked[i]] = MASK_ID;
    }
    Ok(out)
}

/// `w * good + (1 - w) * poor`, elementwise.
///
/// For `w > 0` a category that is impossible under the good prediction stays
/// impossible, which settles the `0 * inf` case of the power form.
pub fn guided_logits(good: &[f64], poor: &[f64], w: f64) -> Result<Vec<f64>, GuidanceError> {
    if good.len() != poor.len() {
        return Err(GuidanceError::ShapeMismatch(good.len(), poor.len()));
    }
    Ok(good
        .iter()
        .zip(poor)
        .map(|(&g, &p)| {
            if w > 0.0 && g <= LOG_ZERO {
                LOG_ZERO
            } else {
                w * g + (1.0 - w) * p
            }
        })
        .collect())
}

fn hadamard_row(good: &[f64], poor: &[f64], w: f64) -> Vec<f64> {
    let mut h: Vec<f64> = good
        .iter()
        .zip(poor)
        .map(|(&g, &p)| if g <= 0.0 { 0.0 } else { g.powf(w) * p.powf(1.0 - w) })
        .collect();
    let z: f64 = h.iter().sum();
    h.iter_mut().for_each(|x| *x /= z);
    h
}

/// Largest per-row total-variation gap between two discretizations of one
/// guided step from `t` to `t - dt` of a masked position.
///
/// Route one scales the guided rate `R_good^w * R_poor^(1-w)` (normalized
/// over target categories) by `dt`. Route two applies the exact reverse step
/// to `softmax(guided_logits)`. Rows are `K` wide probability vectors.
pub fn rate_guidance_check(
    probs_good: &[f64],
    probs_poor: &[f64],
    w: f64,
    t: f64,
    dt: f64,
    sched: &NoiseSchedule,
) -> Result<f64, GuidanceError> {
    if probs_good.len() != probs_poor.len() || !probs_good.len().is_multiple_of(K) {
        return Err(GuidanceError::ShapeMismatch(probs_good.len(), probs_poor.len()));
    }
    if !(dt > 0.0) || t - dt < 0.0 || t > 1.0 {
        return Err(GuidanceError::InvalidStep(format!("t={t}, dt={dt}")));
    }
    let rate = -sched.weight(t);
    let (a_t, a_s) = (sched.alpha(t), sched.alpha(t - dt));
    let unmask = (a_s - a_t) / (1.0 - a_t);

    let ln = |p: &f64| if *p > 0.0 { p.ln() } else { LOG_ZERO };
    let lg: Vec<f64> = probs_good.iter().map(ln).collect();
    let lp: Vec<f64> = probs_poor.iter().map(ln).collect();
    let soft = softmax_rows(&guided_logits(&lg, &lp, w)?, K, 1.0);

    let mut worst: f64 = 0.0;
    for (r, q) in soft.chunks(K).enumerate() {
        let h = hadamard_row(&probs_good[r * K..(r + 1) * K], &probs_poor[r * K..(r + 1) * K], w);
        let mut tv = 0.0;
        let (mut stay_a, mut stay_b) = (1.0, 1.0);
        for i in 0..K {
            if i == MASK_ID as usize {
                continue;
            }
            let a = dt * rate * h[i];
            let b = unmask * q[i];
            stay_a -= a;
            stay_b -= b;
            tv += (a - b).abs();
        }
        tv += (stay_a - stay_b).abs();
        worst = worst.max(0.5 * tv);
    }
    Ok(worst)
}
