use std::collections::BTreeSet;

use super::graph::MolGraph;
use super::token::{TokenId, TokenTable};
use super::GrammarError;

/// Digit allocator with sequential-scan semantics: a digit is busy from the
/// occurrence that opens it to the one that closes it.
struct Digits {
    busy: [bool; 10],
}

impl Digits {
    fn new() -> Self {
        Self { busy: [false; 10] }
    }

    fn open(&mut self, avoid: &[u8]) -> Result<u8, GrammarError> {
        let d = (1..=9u8)
            .find(|&d| !self.busy[d as usize] && !avoid.contains(&d))
            .ok_or(GrammarError::DigitExhausted)?;
        self.busy[d as usize] = true;
        Ok(d)
    }

    fn close(&mut self, d: u8) {
        self.busy[d as usize] = false;
    }
}

/// What has to be written on an atom after its element symbol.
#[derive(Default, Clone)]
struct Marks {
    /// (slot id, bond order, partner rank) closing here.
    closes: Vec<(usize, u8, usize)>,
    /// (slot id, bond order, partner rank) opening here.
    opens: Vec<(usize, u8, usize)>,
}

/// Serializes `g` writing every bond in `cuts` as a cross-fragment digit pair,
/// so fragments become `.`-separated blocks.
///
/// `rank[i]` orders atoms: each fragment starts at its lowest-ranked atom,
/// neighbors are visited in rank order, and fragments are emitted depth-first
/// over the fragment tree starting from the lowest-ranked atom.
pub fn write_with_cuts(
    g: &MolGraph,
    cuts: &BTreeSet<usize>,
    rank: &[usize],
) -> Result<Vec<TokenId>, GrammarError> {
    let n = g.atoms.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let adj = g.adjacency();
    let by_rank = |v: &mut Vec<(usize, usize)>| v.sort_by_key(|&(u, _)| rank[u]);

    let frags = g.components_without(cuts);
    let mut frag_of = vec![0usize; n];
    for (fi, f) in frags.iter().enumerate() {
        for &a in f {
            frag_of[a] = fi;
        }
    }

    // Fragment emission order: DFS over cut bonds.
    let mut frag_order: Vec<usize> = Vec::new();
    let mut frag_seen = vec![false; frags.len()];
    let mut atoms_by_rank: Vec<usize> = (0..n).collect();
    atoms_by_rank.sort_by_key(|&a| rank[a]);
    for &seed in &atoms_by_rank {
        let root = frag_of[seed];
        if frag_seen[root] {
            continue;
        }
        let mut stack = vec![root];
        frag_seen[root] = true;
        while let Some(f) = stack.pop() {
            frag_order.push(f);
            let mut children: Vec<(usize, usize)> = Vec::new();
            for &a in &frags[f] {
                for &(v, bi) in &adj[a] {
                    if cuts.contains(&bi) && !frag_seen[frag_of[v]] {
                        children.push((rank[a], frag_of[v]));
                    }
                }
            }
            children.sort();
            children.dedup_by_key(|c| c.1);
            // push in reverse so the lowest rank is emitted first
            for &(_, c) in children.iter().rev() {
                if !frag_seen[c] {
                    frag_seen[c] = true;
                    stack.push(c);
                }
            }
        }
    }
    // Reorder so that the DFS above produces preorder with proper nesting.
    let frag_pos: Vec<usize> = {
        let mut p = vec![0; frags.len()];
        for (i, &f) in frag_order.iter().enumerate() {
            p[f] = i;
        }
        p
    };

    // Per-fragment DFS trees, ring closures and output order.
    let mut atom_pos = vec![usize::MAX; n];
    let mut children_of: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    let mut marks: Vec<Marks> = vec![Marks::default(); n];
    let mut slot = 0usize;
    let mut preorder: Vec<Vec<usize>> = vec![Vec::new(); frags.len()];
    let mut counter = 0usize;
    for &f in &frag_order {
        let start = *frags[f].iter().min_by_key(|&&a| rank[a]).unwrap();
        let mut visited_bond = BTreeSet::new();
        // iterative DFS keeping explicit neighbor cursors
        let mut stack: Vec<(usize, Vec<(usize, usize)>, usize)> = Vec::new();
        let push = |u: usize, pos: &mut Vec<usize>, order: &mut Vec<usize>, c: &mut usize| {
            pos[u] = *c;
            *c += 1;
            order.push(u);
            let mut nb: Vec<(usize, usize)> = adj[u]
                .iter()
                .copied()
                .filter(|&(_, bi)| !cuts.contains(&bi))
                .collect();
            by_rank(&mut nb);
            (u, nb, 0usize)
        };
        let first = push(start, &mut atom_pos, &mut preorder[f], &mut counter);
        stack.push(first);
        while let Some(top) = stack.last_mut() {
            let (u, ref nb, ref mut cursor) = *top;
            if *cursor >= nb.len() {
                stack.pop();
                continue;
            }
            let (v, bi) = nb[*cursor];
            *cursor += 1;
            if visited_bond.contains(&bi) {
                continue;
            }
            visited_bond.insert(bi);
            if atom_pos[v] == usize::MAX {
                children_of[u].push((v, bi));
                let next = push(v, &mut atom_pos, &mut preorder[f], &mut counter);
                stack.push(next);
            } else {
                // ring closure: opens at the atom written first
                let order = g.bonds[bi].order;
                let (early, late) = if atom_pos[v] < atom_pos[u] { (v, u) } else { (u, v) };
                marks[early].opens.push((slot, order, rank[late]));
                marks[late].closes.push((slot, 0, atom_pos[early]));
                slot += 1;
            }
        }
    }
    // Cut bonds: open in the earlier-emitted fragment, close in the later one.
    for &bi in cuts {
        let b = g.bonds[bi];
        let (early, late) = if frag_pos[frag_of[b.a]] < frag_pos[frag_of[b.b]] {
            (b.a, b.b)
        } else {
            (b.b, b.a)
        };
        marks[early].opens.push((slot, b.order, rank[late]));
        marks[late].closes.push((slot, 0, atom_pos[early]));
        slot += 1;
    }
    for m in &mut marks {
        m.closes.sort_by_key(|c| c.2);
        m.opens.sort_by_key(|o| (o.2, o.1));
    }

    let mut slot_digit = vec![0u8; slot];
    let mut digits = Digits::new();
    let mut attach_at: Vec<Vec<u8>> = vec![Vec::new(); n];
    for a in &g.attachments {
        attach_at[a.atom].push(a.order);
    }
    for v in &mut attach_at {
        v.sort_unstable();
    }

    let mut out = Vec::with_capacity(n * 2);
    for (k, &f) in frag_order.iter().enumerate() {
        if k > 0 {
            out.push(super::token::DOT_ID);
        }
        let start = preorder[f][0];
        emit_atom(
            g,
            start,
            &children_of,
            &marks,
            &attach_at,
            &mut slot_digit,
            &mut digits,
            &mut out,
        )?;
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn emit_atom(
    g: &MolGraph,
    root: usize,
    children_of: &[Vec<(usize, usize)>],
    marks: &[Marks],
    attach_at: &[Vec<u8>],
    slot_digit: &mut [u8],
    digits: &mut Digits,
    out: &mut Vec<TokenId>,
) -> Result<(), GrammarError> {
    // Work items: Atom(u) writes the atom and schedules children; Close writes ')'.
    enum Item {
        Atom(usize, Option<u8>),
        Open,
        Close,
    }
    let mut work = vec![Item::Atom(root, None)];
    while let Some(item) = work.pop() {
        match item {
            Item::Open => out.push(TokenTable::kind_id_branch_open()),
            Item::Close => out.push(TokenTable::kind_id_branch_close()),
            Item::Atom(u, bond) => {
                if let Some(id) = bond.and_then(TokenTable::bond_id) {
                    out.push(id);
                }
                out.push(TokenTable::atom_id(g.atoms[u].element));
                let mut closed_here = Vec::new();
                for &(s, _, _) in &marks[u].closes {
                    let d = slot_digit[s];
                    out.push(TokenTable::digit_id(d));
                    digits.close(d);
                    closed_here.push(d);
                }
                for &(s, order, _) in &marks[u].opens {
                    let d = digits.open(&closed_here)?;
                    slot_digit[s] = d;
                    if let Some(id) = TokenTable::bond_id(order) {
                        out.push(id);
                    }
                    out.push(TokenTable::digit_id(d));
                }
                for &order in &attach_at[u] {
                    let d = digits.open(&closed_here)?;
                    if let Some(id) = TokenTable::bond_id(order) {
                        out.push(id);
                    }
                    out.push(TokenTable::digit_id(d));
                }
                let kids = &children_of[u];
                // Last child continues the chain; earlier ones are branches.
                // Push in reverse so they pop in order.
                for (i, &(v, bi)) in kids.iter().enumerate().rev() {
                    let order = Some(g.bonds[bi].order);
                    if i + 1 == kids.len() {
                        work.push(Item::Atom(v, order));
                    } else {
                        work.push(Item::Close);
                        work.push(Item::Atom(v, order));
                        work.push(Item::Open);
                    }
                }
            }
        }
    }
    Ok(())
}

impl TokenTable {
    pub(crate) fn kind_id_branch_open() -> TokenId {
        6
    }

    pub(crate) fn kind_id_branch_close() -> TokenId {
        7
    }
}

/// Serializes in input atom order with no cuts.
pub fn serialize(g: &MolGraph) -> Result<String, GrammarError> {
    let rank: Vec<usize> = (0..g.atoms.len()).collect();
    let ids = write_with_cuts(g, &BTreeSet::new(), &rank)?;
    Ok(TokenTable::standard().detokenize(&ids))
}

/// Non-ring single bonds: the cut candidates of both decomposition rules.
pub fn cuttable_bonds(g: &MolGraph) -> Vec<usize> {
    (0..g.bonds.len())
        .filter(|&i| g.bonds[i].order == 1 && !g.ring_bonds.contains(&i))
        .collect()
}

/// Serialization with every non-ring single bond cut, preserving input atom order.
pub fn remask_serialization(g: &MolGraph) -> Result<Vec<TokenId>, GrammarError> {
    let rank: Vec<usize> = (0..g.atoms.len()).collect();
    let cuts: BTreeSet<usize> = cuttable_bonds(g).into_iter().collect();
    write_with_cuts(g, &cuts, &rank)
}

/// Canonical string: colour refinement to a stable partition, then
/// individualization of tied atoms; the smallest serialization over all
/// resulting orderings is returned. Open attachments are part of the atom
/// invariant, their digit labels are not.
pub fn canonicalize(g: &MolGraph) -> Result<String, GrammarError> {
    let n = g.atoms.len();
    if n == 0 {
        return Ok(String::new());
    }
    let adj = g.adjacency();
    let mut attach: Vec<(u8, u8)> = vec![(0, 0); n];
    for a in &g.attachments {
        attach[a.atom].0 += 1;
        attach[a.atom].1 += a.order;
    }
    let initial: Vec<(usize, usize, u32, u8, u8)> = (0..n)
        .map(|i| {
            (
                g.atoms[i].element.index(),
                adj[i].len(),
                g.valence(i),
                attach[i].0,
                attach[i].1,
            )
        })
        .collect();
    let colors = dense_rank(&initial);
    let table = TokenTable::standard();
    let mut best: Option<Vec<TokenId>> = None;
    search(g, &adj, colors, &mut best)?;
    Ok(table.detokenize(&best.unwrap_or_default()))
}

fn dense_rank<T: Ord + Clone>(keys: &[T]) -> Vec<usize> {
    let mut sorted: Vec<T> = keys.to_vec();
    sorted.sort();
    sorted.dedup();
    keys.iter()
        .map(|k| sorted.binary_search(k).unwrap())
        .collect()
}

fn refine(adj: &[Vec<(usize, usize)>], g: &MolGraph, mut colors: Vec<usize>) -> Vec<usize> {
    let mut classes = colors.iter().collect::<BTreeSet<_>>().len();
    loop {
        let keys: Vec<(usize, Vec<(u8, usize)>)> = (0..colors.len())
            .map(|u| {
                let mut sig: Vec<(u8, usize)> = adj[u]
                    .iter()
                    .map(|&(v, bi)| (g.bonds[bi].order, colors[v]))
                    .collect();
                sig.sort_unstable();
                (colors[u], sig)
            })
            .collect();
        let next = dense_rank(&keys);
        let next_classes = next.iter().collect::<BTreeSet<_>>().len();
        colors = next;
        if next_classes == classes {
            return colors;
        }
        classes = next_classes;
    }
}

fn search(
    g: &MolGraph,
    adj: &[Vec<(usize, usize)>],
    colors: Vec<usize>,
    best: &mut Option<Vec<TokenId>>,
) -> Result<(), GrammarError> {
    let colors = refine(adj, g, colors);
    let n = colors.len();
    let mut counts = vec![0usize; n];
    for &c in &colors {
        counts[c] += 1;
    }
    match (0..n).find(|&c| counts[c] > 1) {
        None => {
            let ids = write_with_cuts(g, &BTreeSet::new(), &colors)?;
            if best.as_ref().is_none_or(|b| ids < *b) {
                *best = Some(ids);
            }
            Ok(())
        }
        Some(cell) => {
            for a in (0..n).filter(|&a| colors[a] == cell) {
                let keys: Vec<(usize, bool)> =
                    (0..n).map(|x| (colors[x], x != a)).collect();
                search(g, adj, dense_rank(&keys), best)?;
            }
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::parse::parse;

    fn canon(s: &str) -> String {
        canonicalize(&parse(s, false).unwrap()).unwrap()
    }

    #[test]
    fn serialize_round_trips() {
        for s in [
            "C",
            "CCO",
            "C1CC1",
            "CC(=O)N",
            "C1CCC(CC1)C#N",
            "C1CC2CCC1C2",
            "OC1CCNCC1.C1CC1",
        ] {
            let g = parse(s, false).unwrap();
            let out = serialize(&g).unwrap();
            let back = parse(&out, false).unwrap();
            assert_eq!(canonicalize(&g).unwrap(), canonicalize(&back).unwrap(), "{s} -> {out}");
        }
    }

    #[test]
    fn serialize_preserves_plain_chains() {
        let g = parse("CC(=O)N", true).unwrap();
        assert_eq!(serialize(&g).unwrap(), "CC(=O)N");
        let g = parse("C1CC1", true).unwrap();
        assert_eq!(serialize(&g).unwrap(), "C1CC1");
    }

    #[test]
    fn canonical_examples() {
        assert_eq!(canon("CCO"), canon("OCC"));
        assert_eq!(canon("C1.C1"), canon("CC"));
        assert_eq!(canon("C"), "C");
        assert_ne!(canon("CCO"), canon("COC"));
        assert_ne!(canon("C=CC"), canon("CCC"));
    }

    #[test]
    fn canonical_fragments_ignore_digit_labels() {
        assert_eq!(canon("C1CC2"), canon("C3CC1"));
        assert_eq!(canon("N1CC"), canon("CCN4"));
        assert_ne!(canon("C1CC"), canon("CC1C"));
    }

    #[test]
    fn remask_serialization_cuts_chains() {
        let g = parse("CC", true).unwrap();
        let ids = remask_serialization(&g).unwrap();
        assert_eq!(TokenTable::standard().detokenize(&ids), "C1.C1");
        let g = parse("C1.N1", true).unwrap();
        let ids = remask_serialization(&g).unwrap();
        assert_eq!(TokenTable::standard().detokenize(&ids), "C1.N1");
        let g = parse("OC1CCCCC1", true).unwrap();
        let s = TokenTable::standard().detokenize(&remask_serialization(&g).unwrap());
        assert_eq!(s, "O1.C12CCCCC2");
        let back = parse(&s, true).unwrap();
        assert_eq!(canonicalize(&back).unwrap(), canonicalize(&g).unwrap());
    }

    #[test]
    fn digits_are_reused_after_closing() {
        // a 12-carbon chain cut everywhere needs only two digits at a time
        let g = parse("CCCCCCCCCCCC", true).unwrap();
        let ids = remask_serialization(&g).unwrap();
        let s = TokenTable::standard().detokenize(&ids);
        assert_eq!(s.matches('.').count(), 11);
        assert!(!s.contains('3'), "{s}");
        let back = parse(&s, true).unwrap();
        assert_eq!(canonicalize(&back).unwrap(), canonicalize(&g).unwrap());
    }
}
