use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Denoiser, DenoiserError};
use crate::diffusion::{DenoiserOutput, SeqState, LOG_ZERO};
use crate::grammar::{TokenId, K, MASK_ID, PAD_ID};

const LN_EPS: f64 = 1e-5;
const GELU_S: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_C: f64 = 0.044_715;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d_model: usize,
    pub heads: usize,
    pub hidden: usize,
    pub max_len: usize,
    pub t_bins: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d_model: 32,
            heads: 2,
            hidden: 64,
            max_len: 64,
            t_bins: 32,
        }
    }
}

/// Offsets of each parameter tensor inside the flat weight vector.
/// Matrices are stored `[in][out]` row-major.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Layout {
    pub tok: usize,
    pub pos: usize,
    pub time: usize,
    pub ln1_g: usize,
    pub ln1_b: usize,
    pub wq: usize,
    pub bq: usize,
    pub wk: usize,
    pub bk: usize,
    pub wv: usize,
    pub bv: usize,
    pub wo: usize,
    pub bo: usize,
    pub ln2_g: usize,
    pub ln2_b: usize,
    pub w1: usize,
    pub b1: usize,
    pub w2: usize,
    pub b2: usize,
    pub total: usize,
}

impl Layout {
    pub fn new(c: &ModelConfig) -> Self {
        let d = c.d_model;
        let mut at = 0;
        let mut take = |n: usize| {
            let o = at;
            at += n;
            o
        };
        let tok = take(K * d);
        let pos = take(c.max_len * d);
        let time = take(c.t_bins * d);
        let ln1_g = take(d);
        let ln1_b = take(d);
        let wq = take(d * d);
        let bq = take(d);
        let wk = take(d * d);
        let bk = take(d);
        let wv = take(d * d);
        let bv = take(d);
        let wo = take(d * d);
        let bo = take(d);
        let ln2_g = take(d);
        let ln2_b = take(d);
        let w1 = take(d * c.hidden);
        let b1 = take(c.hidden);
        let w2 = take(c.hidden * K);
        let b2 = take(K);
        Self {
            tok,
            pos,
            time,
            ln1_g,
            ln1_b,
            wq,
            bq,
            wk,
            bk,
            wv,
            bv,
            wo,
            bo,
            ln2_g,
            ln2_b,
            w1,
            b1,
            w2,
            b2,
            total: at,
        }
    }
}

/// Activations kept for the backward pass.
pub(crate) struct Forward {
    len: usize,
    bucket: usize,
    keys: Vec<bool>,
    a_hat: Vec<f64>,
    a_rstd: Vec<f64>,
    a: Vec<f64>,
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    att: Vec<f64>,
    o: Vec<f64>,
    c_hat: Vec<f64>,
    c_rstd: Vec<f64>,
    c: Vec<f64>,
    u: Vec<f64>,
    g: Vec<f64>,
    pub logits: Vec<f64>,
}

fn linear(x: &[f64], n_in: usize, w: &[f64], b: &[f64], n_out: usize) -> Vec<f64> {
    let rows = x.len() / n_in;
    let mut y = vec![0.0; rows * n_out];
    for r in 0..rows {
        let yr = &mut y[r * n_out..(r + 1) * n_out];
        yr.copy_from_slice(b);
        for (i, &xi) in x[r * n_in..(r + 1) * n_in].iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            for (yj, &wij) in yr.iter_mut().zip(&w[i * n_out..(i + 1) * n_out]) {
                *yj += xi * wij;
            }
        }
    }
    y
}

/// Accumulates weight/bias gradients and returns `dx`.
fn linear_back(
    x: &[f64],
    dy: &[f64],
    n_in: usize,
    n_out: usize,
    w: &[f64],
    dw: &mut [f64],
    db: &mut [f64],
) -> Vec<f64> {
    let rows = x.len() / n_in;
    let mut dx = vec![0.0; rows * n_in];
    for r in 0..rows {
        let dyr = &dy[r * n_out..(r + 1) * n_out];
        for (dbj, &g) in db.iter_mut().zip(dyr) {
            *dbj += g;
        }
        for i in 0..n_in {
            let xi = x[r * n_in + i];
            let wrow = &w[i * n_out..(i + 1) * n_out];
            let dwrow = &mut dw[i * n_out..(i + 1) * n_out];
            let mut acc = 0.0;
            for j in 0..n_out {
                dwrow[j] += xi * dyr[j];
                acc += wrow[j] * dyr[j];
            }
            dx[r * n_in + i] = acc;
        }
    }
    dx
}

fn layer_norm(x: &[f64], d: usize, gain: &[f64], bias: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let rows = x.len() / d;
    let mut hat = vec![0.0; x.len()];
    let mut rstd = vec![0.0; rows];
    let mut y = vec![0.0; x.len()];
    for r in 0..rows {
        let xr = &x[r * d..(r + 1) * d];
        let mean = xr.iter().sum::<f64>() / d as f64;
        let var = xr.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let rs = 1.0 / (var + LN_EPS).sqrt();
        rstd[r] = rs;
        for j in 0..d {
            let h = (xr[j] - mean) * rs;
            hat[r * d + j] = h;
            y[r * d + j] = gain[j] * h + bias[j];
        }
    }
    (y, hat, rstd)
}

fn layer_norm_back(
    dy: &[f64],
    hat: &[f64],
    rstd: &[f64],
    d: usize,
    gain: &[f64],
    dgain: &mut [f64],
    dbias: &mut [f64],
) -> Vec<f64> {
    let rows = dy.len() / d;
    let mut dx = vec![0.0; dy.len()];
    for r in 0..rows {
        let mut mean_dh = 0.0;
        let mut mean_dh_h = 0.0;
        for j in 0..d {
            let i = r * d + j;
            dgain[j] += dy[i] * hat[i];
            dbias[j] += dy[i];
            let dh = dy[i] * gain[j];
            mean_dh += dh;
            mean_dh_h += dh * hat[i];
        }
        mean_dh /= d as f64;
        mean_dh_h /= d as f64;
        for j in 0..d {
            let i = r * d + j;
            let dh = dy[i] * gain[j];
            dx[i] = rstd[r] * (dh - mean_dh - hat[i] * mean_dh_h);
        }
    }
    dx
}

fn gelu(u: f64) -> f64 {
    0.5 * u * (1.0 + (GELU_S * (u + GELU_C * u * u * u)).tanh())
}

fn gelu_grad(u: f64) -> f64 {
    let th = (GELU_S * (u + GELU_C * u * u * u)).tanh();
    0.5 * (1.0 + th) + 0.5 * u * (1.0 - th * th) * GELU_S * (1.0 + 3.0 * GELU_C * u * u)
}

pub(crate) fn time_bucket(t: f64, bins: usize) -> usize {
    ((t.clamp(0.0, 1.0) * bins as f64).floor() as usize).min(bins - 1)
}

/// Single-layer bidirectional transformer denoiser.
///
/// Token, position and bucketed-time embeddings are summed, passed through
/// one pre-norm multi-head self-attention block with a residual connection,
/// then a layer norm and a two-layer GELU MLP produce `K` logits per position.
/// `[PAD]` keys are excluded from attention; `[PAD]` and `[MASK]` logits are
/// pinned to `LOG_ZERO`. Weights are kept f32-representable so checkpoints
/// round-trip exactly; arithmetic is done in f64.
#[derive(Debug, Clone, PartialEq)]
pub struct TinyDenoiser {
    pub config: ModelConfig,
    pub params: Vec<f64>,
}

impl TinyDenoiser {
    pub fn new<R: Rng + ?Sized>(config: ModelConfig, rng: &mut R) -> Self {
        assert!(config.d_model.is_multiple_of(config.heads), "heads must divide d_model");
        let lay = Layout::new(&config);
        let mut params = vec![0.0; lay.total];
        let d = config.d_model;
        let mut fill = |start: usize, n: usize, bound: f64| {
            for p in &mut params[start..start + n] {
                *p = rng.gen_range(-bound..bound);
            }
        };
        let emb = 0.1;
        fill(lay.tok, K * d, emb);
        fill(lay.pos, config.max_len * d, emb);
        fill(lay.time, config.t_bins * d, emb);
        let xavier = |fi: usize, fo: usize| (6.0 / (fi + fo) as f64).sqrt();
        for w in [lay.wq, lay.wk, lay.wv, lay.wo] {
            fill(w, d * d, xavier(d, d));
        }
        fill(lay.w1, d * config.hidden, xavier(d, config.hidden));
        fill(lay.w2, config.hidden * K, xavier(config.hidden, K));
        for g in [lay.ln1_g, lay.ln2_g] {
            params[g..g + d].iter_mut().for_each(|p| *p = 1.0);
        }
        round_to_f32(&mut params);
        Self { config, params }
    }

    pub fn from_params(config: ModelConfig, params: Vec<f64>) -> Result<Self, DenoiserError> {
        let want = Layout::new(&config).total;
        if params.len() != want {
            return Err(DenoiserError::Precondition(format!(
                "expected {want} parameters, got {}",
                params.len()
            )));
        }
        Ok(Self { config, params })
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    #[cfg(test)]
    pub(crate) fn layout(&self) -> Layout {
        Layout::new(&self.config)
    }
}

pub(crate) fn round_to_f32(params: &mut [f64]) {
    for p in params {
        *p = *p as f32 as f64;
    }
}

/// Forward pass for one sequence.
pub(crate) fn forward(cfg: &ModelConfig, p: &[f64], ids: &[TokenId], t: f64) -> Forward {
    let lay = Layout::new(cfg);
    let (d, hid, heads) = (cfg.d_model, cfg.hidden, cfg.heads);
    let len = ids.len();
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let bucket = time_bucket(t, cfg.t_bins);

    let mut x0 = vec![0.0; len * d];
    for (l, &id) in ids.iter().enumerate() {
        let row = &mut x0[l * d..(l + 1) * d];
        let tok = &p[lay.tok + id as usize * d..][..d];
        let pos = &p[lay.pos + l * d..][..d];
        let tim = &p[lay.time + bucket * d..][..d];
        for j in 0..d {
            row[j] = tok[j] + pos[j] + tim[j];
        }
    }
    let (a, a_hat, a_rstd) = layer_norm(&x0, d, &p[lay.ln1_g..][..d], &p[lay.ln1_b..][..d]);
    let q = linear(&a, d, &p[lay.wq..][..d * d], &p[lay.bq..][..d], d);
    let k = linear(&a, d, &p[lay.wk..][..d * d], &p[lay.bk..][..d], d);
    let v = linear(&a, d, &p[lay.wv..][..d * d], &p[lay.bv..][..d], d);
    let keys: Vec<bool> = ids.iter().map(|&id| id != PAD_ID).collect();

    let mut att = vec![0.0; heads * len * len];
    let mut o = vec![0.0; len * d];
    for h in 0..heads {
        for l in 0..len {
            let row = &mut att[(h * len + l) * len..][..len];
            let mut m_max = f64::NEG_INFINITY;
            for m in 0..len {
                if !keys[m] {
                    continue;
                }
                let mut s = 0.0;
                for j in h * dh..(h + 1) * dh {
                    s += q[l * d + j] * k[m * d + j];
                }
                row[m] = s * scale;
                m_max = m_max.max(row[m]);
            }
            let mut z = 0.0;
            for m in 0..len {
                if keys[m] {
                    row[m] = (row[m] - m_max).exp();
                    z += row[m];
                } else {
                    row[m] = 0.0;
                }
            }
            for m in 0..len {
                row[m] /= z;
                if row[m] != 0.0 {
                    for j in h * dh..(h + 1) * dh {
                        o[l * d + j] += row[m] * v[m * d + j];
                    }
                }
            }
        }
    }
    let y = linear(&o, d, &p[lay.wo..][..d * d], &p[lay.bo..][..d], d);
    let x1: Vec<f64> = x0.iter().zip(&y).map(|(a, b)| a + b).collect();
    let (c, c_hat, c_rstd) = layer_norm(&x1, d, &p[lay.ln2_g..][..d], &p[lay.ln2_b..][..d]);
    let u = linear(&c, d, &p[lay.w1..][..d * hid], &p[lay.b1..][..hid], hid);
    let g: Vec<f64> = u.iter().map(|&x| gelu(x)).collect();
    let mut logits = linear(&g, hid, &p[lay.w2..][..hid * K], &p[lay.b2..][..K], K);
    for row in logits.chunks_mut(K) {
        row[PAD_ID as usize] = LOG_ZERO;
        row[MASK_ID as usize] = LOG_ZERO;
    }
    Forward {
        len,
        bucket,
        keys,
        a_hat,
        a_rstd,
        a,
        q,
        k,
        v,
        att,
        o,
        c_hat,
        c_rstd,
        c,
        u,
        g,
        logits,
    }
}

/// Backward pass: accumulates `d loss / d params` into `grad` given `dlogits`.
pub(crate) fn backward(
    cfg: &ModelConfig,
    p: &[f64],
    ids: &[TokenId],
    f: &Forward,
    dlogits: &[f64],
    grad: &mut [f64],
) {
    let lay = Layout::new(cfg);
    let (d, hid, heads) = (cfg.d_model, cfg.hidden, cfg.heads);
    let len = f.len;
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();

    let (gw2, rest) = grad[lay.w2..].split_at_mut(hid * K);
    let dg = linear_back(&f.g, dlogits, hid, K, &p[lay.w2..][..hid * K], gw2, &mut rest[..K]);
    let du: Vec<f64> = dg.iter().zip(&f.u).map(|(g, &u)| g * gelu_grad(u)).collect();
    let (gw1, rest) = grad[lay.w1..].split_at_mut(d * hid);
    let dc = linear_back(&f.c, &du, d, hid, &p[lay.w1..][..d * hid], gw1, &mut rest[..hid]);
    let (gg2, rest) = grad[lay.ln2_g..].split_at_mut(d);
    let dx1 = layer_norm_back(&dc, &f.c_hat, &f.c_rstd, d, &p[lay.ln2_g..][..d], gg2, &mut rest[..d]);

    // residual: x1 = x0 + attn(x0)
    let (gwo, rest) = grad[lay.wo..].split_at_mut(d * d);
    let d_o = linear_back(&f.o, &dx1, d, d, &p[lay.wo..][..d * d], gwo, &mut rest[..d]);

    let mut dq = vec![0.0; len * d];
    let mut dk = vec![0.0; len * d];
    let mut dv = vec![0.0; len * d];
    let mut datt = vec![0.0; len];
    for h in 0..heads {
        for l in 0..len {
            let row = &f.att[(h * len + l) * len..][..len];
            let mut dot = 0.0;
            for m in 0..len {
                if !f.keys[m] {
                    datt[m] = 0.0;
                    continue;
                }
                let mut s = 0.0;
                for j in h * dh..(h + 1) * dh {
                    s += d_o[l * d + j] * f.v[m * d + j];
                    dv[m * d + j] += row[m] * d_o[l * d + j];
                }
                datt[m] = s;
                dot += row[m] * s;
            }
            for m in 0..len {
                if !f.keys[m] {
                    continue;
                }
                let ds = row[m] * (datt[m] - dot) * scale;
                if ds == 0.0 {
                    continue;
                }
                for j in h * dh..(h + 1) * dh {
                    dq[l * d + j] += ds * f.k[m * d + j];
                    dk[m * d + j] += ds * f.q[l * d + j];
                }
            }
        }
    }
    let mut da = vec![0.0; len * d];
    for (w, b, dy) in [(lay.wq, lay.bq, &dq), (lay.wk, lay.bk, &dk), (lay.wv, lay.bv, &dv)] {
        let (gw, rest) = grad[w..].split_at_mut(d * d);
        let off = b - w - d * d;
        let part = linear_back(&f.a, dy, d, d, &p[w..][..d * d], gw, &mut rest[off..off + d]);
        for (x, y) in da.iter_mut().zip(part) {
            *x += y;
        }
    }
    let (gg1, rest) = grad[lay.ln1_g..].split_at_mut(d);
    let dx0_attn =
        layer_norm_back(&da, &f.a_hat, &f.a_rstd, d, &p[lay.ln1_g..][..d], gg1, &mut rest[..d]);

    for (l, &id) in ids.iter().enumerate() {
        for j in 0..d {
            let gx = dx1[l * d + j] + dx0_attn[l * d + j];
            grad[lay.tok + id as usize * d + j] += gx;
            grad[lay.pos + l * d + j] += gx;
            grad[lay.time + f.bucket * d + j] += gx;
        }
    }
}

/// Weighted masked cross-entropy for one sequence, optionally accumulating
/// its gradient. `weight` multiplies the sum over masked, non-pad positions.
pub(crate) fn sequence_loss(
    cfg: &ModelConfig,
    p: &[f64],
    clean: &[TokenId],
    noisy: &[TokenId],
    t: f64,
    weight: f64,
    grad: Option<&mut [f64]>,
) -> f64 {
    let f = forward(cfg, p, noisy, t);
    let mut dlogits = vec![0.0; f.len * K];
    let mut loss = 0.0;
    let mut any = false;
    for l in 0..f.len {
        if noisy[l] != MASK_ID || clean[l] == PAD_ID {
            continue;
        }
        any = true;
        let row = &f.logits[l * K..(l + 1) * K];
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = row.iter().map(|&x| (x - m).exp()).sum();
        let lse = m + z.ln();
        loss += weight * (lse - row[clean[l] as usize]);
        let drow = &mut dlogits[l * K..(l + 1) * K];
        for (i, dv) in drow.iter_mut().enumerate() {
            if i == PAD_ID as usize || i == MASK_ID as usize {
                continue;
            }
            *dv = weight * (row[i] - lse).exp();
        }
        drow[clean[l] as usize] -= weight;
    }
    if let (Some(grad), true) = (grad, any) {
        backward(cfg, p, noisy, &f, &dlogits, grad);
    }
    loss
}

impl Denoiser for TinyDenoiser {
    fn predict(&self, z: &SeqState) -> Result<DenoiserOutput, DenoiserError> {
        if z.len() > self.config.max_len {
            return Err(DenoiserError::LengthExceeded {
                len: z.len(),
                max: self.config.max_len,
            });
        }
        let f = forward(&self.config, &self.params, &z.ids, z.t);
        Ok(DenoiserOutput::from_logits(z.len(), f.logits))
    }
}
