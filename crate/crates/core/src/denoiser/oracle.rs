use super::{Denoiser, DenoiserError};
use crate::diffusion::{DenoiserOutput, SeqState};
use crate::grammar::{TokenId, K, MASK_ID};

/// Exact posterior over an enumerable weighted corpus.
///
/// For a state `z_t`, each position's prediction is the weight-renormalized
/// marginal over corpus sequences that agree with every unmasked position of
/// `z_t`. This is the Bayes-optimal denoiser for data drawn from the corpus.
#[derive(Debug, Clone)]
pub struct OracleDenoiser {
    corpus: Vec<(Vec<TokenId>, f64)>,
}

impl OracleDenoiser {
    pub fn new(corpus: Vec<(Vec<TokenId>, f64)>) -> Result<Self, DenoiserError> {
        if corpus.is_empty() {
            return Err(DenoiserError::EmptyCorpus);
        }
        let total: f64 = corpus.iter().map(|(_, w)| *w).sum();
        if !(total > 0.0) || corpus.iter().any(|(_, w)| *w < 0.0 || !w.is_finite()) {
            return Err(DenoiserError::InvalidCorpus("weights must be non-negative".into()));
        }
        if corpus.iter().any(|(s, _)| s.contains(&MASK_ID)) {
            return Err(DenoiserError::InvalidCorpus("corpus contains mask tokens".into()));
        }
        Ok(Self {
            corpus: corpus.into_iter().map(|(s, w)| (s, w / total)).collect(),
        })
    }

    /// Uniform weights over the given sequences (duplicates add weight).
    pub fn uniform(seqs: Vec<Vec<TokenId>>) -> Result<Self, DenoiserError> {
        Self::new(seqs.into_iter().map(|s| (s, 1.0)).collect())
    }

    pub fn corpus(&self) -> &[(Vec<TokenId>, f64)] {
        &self.corpus
    }

    /// Marginal distribution over whole sequences of a given length.
    pub fn sequence_distribution(&self) -> Vec<(Vec<TokenId>, f64)> {
        let mut out: Vec<(Vec<TokenId>, f64)> = Vec::new();
        for (s, w) in &self.corpus {
            match out.iter_mut().find(|(o, _)| o == s) {
                Some(entry) => entry.1 += w,
                None => out.push((s.clone(), *w)),
            }
        }
        out
    }

    fn accumulate<'a>(
        len: usize,
        seqs: impl Iterator<Item = &'a (Vec<TokenId>, f64)>,
    ) -> Option<Vec<f64>> {
        let mut probs = vec![0.0; len * K];
        let mut total = 0.0;
        for (s, w) in seqs {
            total += w;
            for (l, &id) in s.iter().enumerate() {
                probs[l * K + id as usize] += w;
            }
        }
        if total <= 0.0 {
            return None;
        }
        for p in &mut probs {
            *p /= total;
        }
        Some(probs)
    }
}

impl Denoiser for OracleDenoiser {
    fn predict(&self, z: &SeqState) -> Result<DenoiserOutput, DenoiserError> {
        let len = z.len();
        let same_len = || self.corpus.iter().filter(move |(s, _)| s.len() == len);
        let consistent = same_len().filter(|(s, _)| {
            s.iter()
                .zip(&z.ids)
                .all(|(&a, &b)| b == MASK_ID || a == b)
        });
        let probs = Self::accumulate(len, consistent)
            .or_else(|| Self::accumulate(len, same_len()))
            .ok_or(DenoiserError::LengthMismatch(len))?;
        Ok(DenoiserOutput::from_probs(len, probs))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const A: TokenId = 0;
    const B: TokenId = 1;
    const M: TokenId = MASK_ID;

    fn ab_ba() -> OracleDenoiser {
        OracleDenoiser::new(vec![(vec![A, B], 0.5), (vec![B, A], 0.5)]).unwrap()
    }

    #[test]
    fn conditions_on_unmasked_positions() {
        let out = ab_ba().predict(&SeqState::new(vec![M, B], 0.5)).unwrap();
        assert_eq!(out.row(0)[A as usize], 1.0);
        assert_eq!(out.row(1)[B as usize], 1.0);
    }

    #[test]
    fn fully_masked_gives_marginals() {
        let out = ab_ba().predict(&SeqState::new(vec![M, M], 1.0)).unwrap();
        for l in 0..2 {
            assert_eq!(out.row(l)[A as usize], 0.5);
            assert_eq!(out.row(l)[B as usize], 0.5);
        }
    }

    #[test]
    fn fully_unmasked_gives_one_hots() {
        let out = ab_ba().predict(&SeqState::new(vec![B, A], 0.0)).unwrap();
        assert_eq!(out.row(0)[B as usize], 1.0);
        assert_eq!(out.row(1)[A as usize], 1.0);
    }

    #[test]
    fn inconsistent_falls_back_to_marginals() {
        let out = ab_ba().predict(&SeqState::new(vec![A, A], 0.0)).unwrap();
        assert_eq!(out.row(0)[A as usize], 0.5);
    }

    #[test]
    fn errors() {
        assert!(OracleDenoiser::new(vec![]).is_err());
        assert!(OracleDenoiser::new(vec![(vec![M], 1.0)]).is_err());
        assert!(matches!(
            ab_ba().predict(&SeqState::new(vec![M], 1.0)),
            Err(DenoiserError::LengthMismatch(1))
        ));
    }
}
