//! Set-level generation metrics and stand-in molecular scores.
//!
//! `pseudo_qed` and `pseudo_sa` are simple graph heuristics used in place of
//! real drug-likeness and synthesizability estimators; only their thresholds
//! (0.6 and 4) follow common practice.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::grammar::{canonicalize, check, MolGraph};

pub const FP_BITS: usize = 1024;
pub const QED_THRESHOLD: f64 = 0.6;
pub const SA_THRESHOLD: f64 = 4.0;

/// 1024-bit hashed path fingerprint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Fingerprint([u64; FP_BITS / 64]);

impl Fingerprint {
    pub fn empty() -> Self {
        Self([0; FP_BITS / 64])
    }

    pub fn from_bits(bits: impl IntoIterator<Item = usize>) -> Self {
        let mut f = Self::empty();
        for b in bits {
            f.set(b);
        }
        f
    }

    pub fn set(&mut self, bit: usize) {
        let bit = bit % FP_BITS;
        self.0[bit / 64] |= 1 << (bit % 64);
    }

    pub fn get(&self, bit: usize) -> bool {
        self.0[bit / 64] >> (bit % 64) & 1 == 1
    }

    pub fn count(&self) -> u32 {
        self.0.iter().map(|w| w.count_ones()).sum()
    }

    pub fn bits(&self) -> Vec<usize> {
        (0..FP_BITS).filter(|&b| self.get(b)).collect()
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

fn path_signature(g: &MolGraph, atoms: &[usize]) -> String {
    let write = |order: &mut dyn Iterator<Item = usize>| {
        let seq: Vec<usize> = order.collect();
        let mut s = String::new();
        for (i, &a) in seq.iter().enumerate() {
            if i > 0 {
                let b = g.bond_between(seq[i - 1], a).expect("path follows bonds");
                s.push(char::from(b'0' + g.bonds[b].order));
            }
            s.push_str(g.atoms[a].element.symbol());
            if g.atoms[a].aromatic {
                s.push('a');
            }
        }
        s
    };
    let fwd = write(&mut atoms.iter().copied());
    let rev = write(&mut atoms.iter().rev().copied());
    fwd.min(rev)
}

/// Hashes every simple path of one to four atoms.
pub fn fingerprint(g: &MolGraph) -> Fingerprint {
    let adj = g.adjacency();
    let mut fp = Fingerprint::empty();
    let mut path = Vec::with_capacity(4);
    fn walk(
        g: &MolGraph,
        adj: &[Vec<(usize, usize)>],
        path: &mut Vec<usize>,
        fp: &mut Fingerprint,
    ) {
        let sig = path_signature(g, path);
        fp.set((fnv1a(sig.as_bytes()) % FP_BITS as u64) as usize);
        if path.len() == 4 {
            return;
        }
        let last = *path.last().unwrap();
        for &(nb, _) in &adj[last] {
            if !path.contains(&nb) {
                path.push(nb);
                walk(g, adj, path, fp);
                path.pop();
            }
        }
    }
    for a in 0..g.atoms.len() {
        path.push(a);
        walk(g, &adj, &mut path, &mut fp);
        path.pop();
    }
    fp
}

/// `1 - |a & b| / |a | b|`, and 0 when both are empty.
pub fn tanimoto_distance(a: &Fingerprint, b: &Fingerprint) -> f64 {
    let (mut inter, mut union) = (0u32, 0u32);
    for (x, y) in a.0.iter().zip(&b.0) {
        inter += (x & y).count_ones();
        union += (x | y).count_ones();
    }
    if union == 0 {
        0.0
    } else {
        1.0 - inter as f64 / union as f64
    }
}

pub fn tanimoto_similarity(a: &Fingerprint, b: &Fingerprint) -> f64 {
    1.0 - tanimoto_distance(a, b)
}

fn hump(v: f64, centre: f64, scale: f64) -> f64 {
    (-((v - centre) / scale).powi(2)).exp()
}

/// Product of humps on atom count (12 +- 8), heteroatom fraction
/// (0.25 +- 0.2) and ring count (1 +- 1.5).
pub fn pseudo_qed(g: &MolGraph) -> f64 {
    let n = g.atoms.len();
    if n == 0 {
        return 0.0;
    }
    let hetero = g.heteroatom_count() as f64 / n as f64;
    hump(n as f64, 12.0, 8.0) * hump(hetero, 0.25, 0.2) * hump(g.ring_count() as f64, 1.0, 1.5)
}

/// `1 + 3 * branching excess + 2 * ring fusions + 0.05 * atoms`, clamped to `[1, 10]`.
///
/// Branching excess adds `degree - 3` for every atom above degree three and
/// half of every branch point (degree >= 3) beyond the second.
pub fn pseudo_sa(g: &MolGraph) -> f64 {
    let degrees: Vec<usize> = (0..g.atoms.len()).map(|a| g.degree(a)).collect();
    let over: usize = degrees.iter().map(|&d| d.saturating_sub(3)).sum();
    let branch_points = degrees.iter().filter(|&&d| d >= 3).count();
    let excess = over as f64 + branch_points.saturating_sub(2) as f64 / 2.0;
    let raw = 1.0 + 3.0 * excess + 2.0 * g.ring_fusions() as f64 + 0.05 * g.atoms.len() as f64;
    raw.clamp(1.0, 10.0)
}

/// Per-molecule evaluation, also used for the CSV export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoleculeScore {
    pub molecule: String,
    pub valid: bool,
    pub canonical: Option<String>,
    pub qed: Option<f64>,
    pub sa: Option<f64>,
}

pub fn score_molecule(s: &str) -> MoleculeScore {
    let (report, g) = check(s);
    match (report.valid, g) {
        (true, Some(g)) => MoleculeScore {
            molecule: s.to_string(),
            valid: true,
            canonical: canonicalize(&g).ok(),
            qed: Some(pseudo_qed(&g)),
            sa: Some(pseudo_sa(&g)),
        },
        _ => MoleculeScore {
            molecule: s.to_string(),
            valid: false,
            canonical: None,
            qed: None,
            sa: None,
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SetMetrics {
    pub n: usize,
    pub validity: f64,
    pub uniqueness: f64,
    pub diversity: f64,
    pub quality: f64,
}

/// Validity over all inputs, uniqueness over valid ones, diversity over the
/// distinct valid molecules, and quality as the fraction of all inputs that
/// are distinct valid molecules passing both score thresholds.
pub fn set_metrics(molecules: &[String]) -> SetMetrics {
    let scores: Vec<MoleculeScore> = molecules.par_iter().map(|s| score_molecule(s)).collect();
    set_metrics_from_scores(&scores)
}

pub fn set_metrics_from_scores(scores: &[MoleculeScore]) -> SetMetrics {
    let n = scores.len();
    let mut unique: BTreeMap<&str, &MoleculeScore> = BTreeMap::new();
    let mut valid = 0;
    for s in scores {
        if let (true, Some(c)) = (s.valid, &s.canonical) {
            valid += 1;
            unique.entry(c.as_str()).or_insert(s);
        }
    }
    if n == 0 || valid == 0 {
        return SetMetrics {
            n,
            validity: 0.0,
            uniqueness: 0.0,
            diversity: 0.0,
            quality: 0.0,
        };
    }
    let fps: Vec<Fingerprint> = unique
        .keys()
        .map(|c| fingerprint(&crate::grammar::parse(c, false).expect("canonical strings parse")))
        .collect();
    let pairs = fps.len() * (fps.len() - 1) / 2;
    let diversity = if pairs == 0 {
        0.0
    } else {
        let total: f64 = (0..fps.len())
            .into_par_iter()
            .map(|i| {
                fps[i + 1..]
                    .iter()
                    .map(|f| tanimoto_distance(&fps[i], f))
                    .sum::<f64>()
            })
            .collect::<Vec<f64>>()
            .iter()
            .sum();
        total / pairs as f64
    };
    let good = unique
        .values()
        .filter(|s| s.qed.unwrap_or(0.0) >= QED_THRESHOLD && s.sa.unwrap_or(10.0) <= SA_THRESHOLD)
        .count();
    SetMetrics {
        n,
        validity: valid as f64 / n as f64,
        uniqueness: unique.len() as f64 / valid as f64,
        diversity,
        quality: good as f64 / n as f64,
    }
}
