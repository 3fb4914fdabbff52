use std::collections::HashMap;

use crate::grammar::{parse, MolGraph};
use crate::metrics::{fingerprint, tanimoto_similarity, Fingerprint};

/// A property scorer with values in `[0, 1]`.
pub trait PropertyOracle: Sync {
    fn score(&self, g: &MolGraph) -> f64;
}

impl<F: Fn(&MolGraph) -> f64 + Sync> PropertyOracle for F {
    fn score(&self, g: &MolGraph) -> f64 {
        self(g)
    }
}

/// Tanimoto similarity to a reference molecule.
#[derive(Debug, Clone)]
pub struct SimilarityOracle {
    target: Fingerprint,
}

impl SimilarityOracle {
    pub fn new(target: &MolGraph) -> Self {
        Self {
            target: fingerprint(target),
        }
    }

    pub fn parse(target: &str) -> Result<Self, crate::grammar::GrammarError> {
        Ok(Self::new(&parse(target, true)?))
    }
}

impl PropertyOracle for SimilarityOracle {
    fn score(&self, g: &MolGraph) -> f64 {
        tanimoto_similarity(&fingerprint(g), &self.target)
    }
}

/// `exp(-d / scale)` for the L1 distance `d` between element counts
/// `[C, N, O, F]` and a target composition.
#[derive(Debug, Clone, Copy)]
pub struct CompositionOracle {
    pub target: [usize; 4],
    pub scale: f64,
}

impl CompositionOracle {
    pub fn new(target: [usize; 4]) -> Self {
        Self { target, scale: 5.0 }
    }
}

impl PropertyOracle for CompositionOracle {
    fn score(&self, g: &MolGraph) -> f64 {
        let c = g.element_counts();
        let d: usize = c.iter().zip(&self.target).map(|(a, b)| a.abs_diff(*b)).sum();
        (-(d as f64) / self.scale).exp()
    }
}

/// Heteroatom fraction near 0.3 with a bonus for up to two rings.
#[derive(Debug, Clone, Copy, Default)]
pub struct HeteroRingOracle;

impl PropertyOracle for HeteroRingOracle {
    fn score(&self, g: &MolGraph) -> f64 {
        if g.atoms.is_empty() {
            return 0.0;
        }
        let h = g.heteroatom_count() as f64 / g.atoms.len() as f64;
        let rings = g.ring_count().min(2) as f64;
        0.7 * (-((h - 0.3) / 0.15).powi(2)).exp() + 0.15 * rings
    }
}

/// Outcome of asking the budgeted oracle about one molecule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Evaluation {
    /// A new oracle call was made.
    Fresh(f64),
    /// Seen before in this run; no budget used.
    Cached(f64),
    /// Unseen molecule but no budget left.
    Exhausted,
}

/// Wraps an oracle with a call budget, a canonical-key cache and the call history.
pub struct BudgetedOracle<'a> {
    inner: &'a dyn PropertyOracle,
    budget: usize,
    cache: HashMap<String, f64>,
    history: Vec<f64>,
}

impl<'a> BudgetedOracle<'a> {
    pub fn new(inner: &'a dyn PropertyOracle, budget: usize) -> Self {
        Self {
            inner,
            budget,
            cache: HashMap::new(),
            history: Vec::new(),
        }
    }

    pub fn evaluate(&mut self, key: &str, g: &MolGraph) -> Evaluation {
        if let Some(&y) = self.cache.get(key) {
            return Evaluation::Cached(y);
        }
        if self.history.len() >= self.budget {
            return Evaluation::Exhausted;
        }
        let y = self.inner.score(g).clamp(0.0, 1.0);
        self.cache.insert(key.to_string(), y);
        self.history.push(y);
        Evaluation::Fresh(y)
    }

    pub fn calls(&self) -> usize {
        self.history.len()
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    pub fn exhausted(&self) -> bool {
        self.history.len() >= self.budget
    }

    pub fn history(&self) -> &[f64] {
        &self.history
    }
}

/// Area under the running mean of the best `k` scores against call index,
/// by the trapezoid rule over calls `0..=budget`, divided by `budget`.
/// The curve is flat before the first call and after the last one.
pub fn auc_topk(history: &[f64], k: usize, budget: usize) -> f64 {
    assert!(k >= 1 && budget >= 1, "k and budget must be positive");
    if history.is_empty() {
        return 0.0;
    }
    let mut top: Vec<f64> = Vec::with_capacity(k + 1);
    let mut curve = Vec::with_capacity(budget + 1);
    for &y in history.iter().take(budget) {
        let at = top.partition_point(|&v| v >= y);
        top.insert(at, y);
        top.truncate(k);
        curve.push(top.iter().sum::<f64>() / top.len() as f64);
    }
    let last = *curve.last().unwrap();
    let first = curve[0];
    let f = |i: usize| -> f64 {
        if i == 0 {
            first
        } else {
            curve.get(i - 1).copied().unwrap_or(last)
        }
    };
    let area: f64 = (1..=budget).map(|i| 0.5 * (f(i - 1) + f(i))).sum();
    area / budget as f64
}
