use std::collections::BTreeSet;

use rand::seq::index::sample;
use rand::Rng;

use super::graph::{Attachment, Bond, MolGraph};
use super::token::{TokenId, TokenKind, TokenTable};
use super::write::{canonicalize, cuttable_bonds, write_with_cuts};
use super::GrammarError;

/// Decomposition rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CutRule {
    /// Up to three distinct random non-ring single bonds.
    Vocab,
    /// Every non-ring single bond.
    Remask,
}

/// A molecular fragment with at least one open attachment (except when a
/// molecule has nothing to cut and is returned whole).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fragment {
    pub graph: MolGraph,
    pub tokens: Vec<TokenId>,
    pub canonical_key: String,
}

impl Fragment {
    pub fn from_graph(graph: MolGraph) -> Result<Self, GrammarError> {
        let rank: Vec<usize> = (0..graph.atoms.len()).collect();
        let tokens = write_with_cuts(&graph, &BTreeSet::new(), &rank)?;
        let canonical_key = canonicalize(&graph)?;
        Ok(Self {
            graph,
            tokens,
            canonical_key,
        })
    }

    pub fn parse(s: &str) -> Result<Self, GrammarError> {
        Self::from_graph(super::parse::parse(s, false)?)
    }

    pub fn is_open(&self) -> bool {
        !self.graph.attachments.is_empty()
    }

    pub fn text(&self) -> String {
        TokenTable::standard().detokenize(&self.tokens)
    }
}

/// Cuts bonds per `rule` and returns the resulting connected pieces.
pub fn decompose<R: Rng + ?Sized>(
    g: &MolGraph,
    rule: CutRule,
    rng: &mut R,
) -> Result<Vec<Fragment>, GrammarError> {
    let candidates = cuttable_bonds(g);
    let cuts: BTreeSet<usize> = match rule {
        CutRule::Remask => candidates.into_iter().collect(),
        CutRule::Vocab => {
            let k = candidates.len().min(3);
            sample(rng, candidates.len(), k)
                .into_iter()
                .map(|i| candidates[i])
                .collect()
        }
    };
    split(g, &cuts)
}

/// Removes `cuts` from `g`, putting an attachment on both ends of each cut.
pub fn split(g: &MolGraph, cuts: &BTreeSet<usize>) -> Result<Vec<Fragment>, GrammarError> {
    let mut open = g.clone();
    for &bi in cuts {
        let b: Bond = g.bonds[bi];
        for atom in [b.a, b.b] {
            open.attachments.push(Attachment {
                atom,
                digit: 0,
                order: b.order,
            });
        }
    }
    open.bonds = g
        .bonds
        .iter()
        .enumerate()
        .filter(|(i, _)| !cuts.contains(i))
        .map(|(_, b)| *b)
        .collect();
    open.recompute_rings();
    open.components()
        .into_iter()
        .map(|comp| {
            let (mut sub, _) = open.induced(&comp);
            // relabel attachment digits in order; they only matter when written
            for (i, a) in sub.attachments.iter_mut().enumerate() {
                a.digit = (i % 9) as u8 + 1;
            }
            Fragment::from_graph(sub)
        })
        .collect()
}

/// Joins two fragments through one uniformly chosen attachment on each side
/// and writes the result as `frag1.frag2` with a shared digit. Remaining
/// attachments stay open.
pub fn attach<R: Rng + ?Sized>(
    f1: &Fragment,
    f2: &Fragment,
    rng: &mut R,
) -> Result<String, GrammarError> {
    let (g, _) = attach_graph(f1, f2, rng)?;
    let rank: Vec<usize> = (0..g.atoms.len()).collect();
    let joint = g.bonds.len() - 1;
    let ids = write_with_cuts(&g, &BTreeSet::from([joint]), &rank)?;
    Ok(TokenTable::standard().detokenize(&ids))
}

/// Graph form of [`attach`]; also returns the index of the joining bond.
pub fn attach_graph<R: Rng + ?Sized>(
    f1: &Fragment,
    f2: &Fragment,
    rng: &mut R,
) -> Result<(MolGraph, usize), GrammarError> {
    if !f1.is_open() || !f2.is_open() {
        return Err(GrammarError::NoAttachmentPoint);
    }
    let a1 = rng.gen_range(0..f1.graph.attachments.len());
    let a2 = rng.gen_range(0..f2.graph.attachments.len());
    let offset = f1.graph.atoms.len();
    let mut g = f1.graph.clone();
    g.atoms.extend(f2.graph.atoms.iter().copied());
    g.bonds.extend(f2.graph.bonds.iter().map(|b| Bond {
        a: b.a + offset,
        b: b.b + offset,
        order: b.order,
    }));
    let p1 = f1.graph.attachments[a1];
    let p2 = f2.graph.attachments[a2];
    g.attachments = f1
        .graph
        .attachments
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != a1)
        .map(|(_, a)| *a)
        .chain(
            f2.graph
                .attachments
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != a2)
                .map(|(_, a)| Attachment {
                    atom: a.atom + offset,
                    ..*a
                }),
        )
        .collect();
    g.bonds.push(Bond {
        a: p1.atom,
        b: p2.atom + offset,
        order: p1.order.max(p2.order),
    });
    g.recompute_rings();
    let joint = g.bonds.len() - 1;
    Ok((g, joint))
}

/// Maximal non-empty runs of tokens between `.` separators, as half-open ranges.
pub fn fragment_spans(ids: &[TokenId]) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut start = 0;
    for (i, &id) in ids.iter().enumerate() {
        if TokenTable::kind(id) == TokenKind::Dot {
            if i > start {
                spans.push((start, i));
            }
            start = i + 1;
        }
    }
    if ids.len() > start {
        spans.push((start, ids.len()));
    }
    spans
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::parse::parse;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn keys(frags: &[Fragment]) -> Vec<String> {
        let mut k: Vec<String> = frags.iter().map(|f| f.canonical_key.clone()).collect();
        k.sort();
        k
    }

    #[test]
    fn ethane_remask_gives_two_methyls() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let frags = decompose(&parse("CC", true).unwrap(), CutRule::Remask, &mut rng).unwrap();
        assert_eq!(frags.len(), 2);
        for f in &frags {
            assert_eq!(f.text(), "C1");
        }
    }

    #[test]
    fn ring_has_nothing_to_cut() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let frags = decompose(&parse("C1CC1", true).unwrap(), CutRule::Remask, &mut rng).unwrap();
        assert_eq!(frags.len(), 1);
        assert!(!frags[0].is_open());
    }

    #[test]
    fn pentane_vocab_rule_makes_four_pieces() {
        let g = parse("CCCCC", true).unwrap();
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let frags = decompose(&g, CutRule::Vocab, &mut rng).unwrap();
            assert_eq!(frags.len(), 4);
            let atoms: usize = frags.iter().map(|f| f.graph.atoms.len()).sum();
            assert_eq!(atoms, 5);
            let stubs: usize = frags.iter().map(|f| f.graph.attachments.len()).sum();
            assert_eq!(stubs, 6);
        }
    }

    #[test]
    fn vocab_rule_cuts_all_when_fewer_than_three() {
        let g = parse("CC(=O)C", true).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let frags = decompose(&g, CutRule::Vocab, &mut rng).unwrap();
        assert_eq!(frags.len(), 3);
    }

    #[test]
    fn attach_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let c1 = Fragment::parse("C1").unwrap();
        let n1 = Fragment::parse("N1").unwrap();
        let s = attach(&c1, &c1, &mut rng).unwrap();
        assert_eq!(s, "C1.C1");
        let ethane = canonicalize(&parse("CC", true).unwrap()).unwrap();
        assert_eq!(canonicalize(&parse(&s, true).unwrap()).unwrap(), ethane);
        let s = attach(&c1, &n1, &mut rng).unwrap();
        let methylamine = canonicalize(&parse("CN", true).unwrap()).unwrap();
        assert_eq!(canonicalize(&parse(&s, true).unwrap()).unwrap(), methylamine);
        let closed = Fragment::parse("CC").unwrap();
        assert!(matches!(
            attach(&closed, &c1, &mut rng),
            Err(GrammarError::NoAttachmentPoint)
        ));
    }

    #[test]
    fn attach_keeps_leftover_stubs_open() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mid = Fragment::parse("C1CC2").unwrap();
        let cap = Fragment::parse("O1").unwrap();
        let s = attach(&mid, &cap, &mut rng).unwrap();
        let g = parse(&s, false).unwrap();
        assert!(g.is_connected());
        assert_eq!(g.attachments.len(), 1);
    }

    #[test]
    fn single_cut_closure() {
        let g = parse("CCOC(=O)C1CC1", true).unwrap();
        let want = canonicalize(&g).unwrap();
        for bi in cuttable_bonds(&g) {
            let frags = split(&g, &BTreeSet::from([bi])).unwrap();
            assert_eq!(frags.len(), 2);
            let mut rng = ChaCha8Rng::seed_from_u64(bi as u64);
            let s = attach(&frags[0], &frags[1], &mut rng).unwrap();
            assert_eq!(canonicalize(&parse(&s, true).unwrap()).unwrap(), want);
        }
    }

    #[test]
    fn spans() {
        let t = TokenTable::standard();
        assert_eq!(
            fragment_spans(&t.tokenize("C1CC1.N1").unwrap()),
            vec![(0, 5), (6, 8)]
        );
        assert_eq!(fragment_spans(&t.tokenize("CC").unwrap()), vec![(0, 2)]);
        assert_eq!(
            fragment_spans(&t.tokenize("C..C").unwrap()),
            vec![(0, 1), (3, 4)]
        );
    }

    #[test]
    fn remask_keys_are_order_free() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = decompose(&parse("OCC1CCNCC1", true).unwrap(), CutRule::Remask, &mut rng).unwrap();
        let b = decompose(&parse("C1CNCCC1CO", true).unwrap(), CutRule::Remask, &mut rng).unwrap();
        assert_eq!(keys(&a), keys(&b));
    }
}
