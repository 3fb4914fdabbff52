use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;

use super::OptimizerError;
use crate::grammar::{decompose, CutRule, Fragment, GrammarError, MolGraph};

/// Fragment statistics: the score is `sum / count` over contributing molecules.
#[derive(Debug, Clone, PartialEq)]
pub struct VocabEntry {
    pub fragment: Fragment,
    pub sum: f64,
    pub count: usize,
}

impl VocabEntry {
    pub fn score(&self) -> f64 {
        self.sum / self.count as f64
    }
}

/// Scored fragment vocabulary keyed by canonical fragment string, capped at
/// `capacity` entries (`None` for no cap). An evicted fragment loses its
/// statistics and starts afresh if it comes back.
#[derive(Debug, Clone, PartialEq)]
pub struct FragmentVocab {
    entries: BTreeMap<String, VocabEntry>,
    capacity: Option<usize>,
}

impl FragmentVocab {
    pub fn new(capacity: Option<usize>) -> Self {
        Self {
            entries: BTreeMap::new(),
            capacity,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> Option<usize> {
        self.capacity
    }

    pub fn get(&self, key: &str) -> Option<&VocabEntry> {
        self.entries.get(key)
    }

    /// Entries in key order.
    pub fn entries(&self) -> impl Iterator<Item = (&String, &VocabEntry)> {
        self.entries.iter()
    }

    /// Credits `score` once to each distinct open fragment, then trims to capacity.
    pub fn add_fragments(&mut self, fragments: Vec<Fragment>, score: f64) {
        let mut seen = BTreeSet::new();
        for f in fragments {
            if !f.is_open() || !seen.insert(f.canonical_key.clone()) {
                continue;
            }
            let e = self
                .entries
                .entry(f.canonical_key.clone())
                .or_insert(VocabEntry {
                    fragment: f,
                    sum: 0.0,
                    count: 0,
                });
            e.sum += score;
            e.count += 1;
        }
        self.trim();
    }

    /// Decomposes a molecule with the vocabulary rule and credits its score.
    pub fn add_molecule<R: Rng + ?Sized>(
        &mut self,
        g: &MolGraph,
        score: f64,
        rng: &mut R,
    ) -> Result<(), GrammarError> {
        let frags = decompose(g, CutRule::Vocab, rng)?;
        self.add_fragments(frags, score);
        Ok(())
    }

    /// Keeps the best `capacity` entries by score, then count, then key.
    fn trim(&mut self) {
        let Some(cap) = self.capacity else { return };
        if self.entries.len() <= cap {
            return;
        }
        let mut ranked: Vec<(&String, &VocabEntry)> = self.entries.iter().collect();
        ranked.sort_by(|a, b| {
            b.1.score()
                .partial_cmp(&a.1.score())
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(b.1.count.cmp(&a.1.count))
                .then(a.0.cmp(b.0))
        });
        let keep: BTreeSet<String> = ranked.into_iter().take(cap).map(|(k, _)| k.clone()).collect();
        self.entries.retain(|k, _| keep.contains(k));
    }

    /// Uniform draw of two entries, distinct when at least two exist.
    pub fn draw_pair<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<(&VocabEntry, &VocabEntry)> {
        let n = self.entries.len();
        if n == 0 {
            return None;
        }
        let i = rng.gen_range(0..n);
        let j = if n >= 2 {
            let j = rng.gen_range(0..n - 1);
            if j >= i {
                j + 1
            } else {
                j
            }
        } else {
            i
        };
        let mut it = self.entries.values();
        let a = it.clone().nth(i)?;
        let b = it.nth(j)?;
        Some((a, b))
    }
}

/// Builds the initial vocabulary from scored molecules.
pub fn build_vocab<R: Rng + ?Sized>(
    corpus: &[(MolGraph, f64)],
    capacity: Option<usize>,
    rng: &mut R,
) -> Result<FragmentVocab, OptimizerError> {
    let mut vocab = FragmentVocab::new(capacity);
    for (g, y) in corpus {
        vocab.add_molecule(g, *y, rng)?;
    }
    if vocab.is_empty() {
        return Err(OptimizerError::EmptyVocabulary);
    }
    Ok(vocab)
}
