use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use super::token::Element;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Atom {
    pub element: Element,
    /// Always false for this alphabet; kept so graphs carry the full atom record.
    pub aromatic: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Bond {
    pub a: usize,
    pub b: usize,
    pub order: u8,
}

impl Bond {
    pub fn other(&self, atom: usize) -> usize {
        if self.a == atom {
            self.b
        } else {
            self.a
        }
    }
}

/// An open attachment point: a pairing digit written on an atom whose partner
/// is not in this graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Attachment {
    pub atom: usize,
    pub digit: u8,
    pub order: u8,
}

/// Attributed molecular graph.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MolGraph {
    pub atoms: Vec<Atom>,
    pub bonds: Vec<Bond>,
    /// Indices into `bonds` of bonds lying on a cycle.
    pub ring_bonds: BTreeSet<usize>,
    pub attachments: Vec<Attachment>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ValidityFailure {
    SyntaxError,
    UnmatchedClosure,
    ValenceViolation,
    EmptySequence,
    Disconnected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidityReport {
    pub valid: bool,
    pub failure: Option<ValidityFailure>,
}

impl ValidityReport {
    pub fn ok() -> Self {
        Self {
            valid: true,
            failure: None,
        }
    }

    pub fn fail(failure: ValidityFailure) -> Self {
        Self {
            valid: false,
            failure: Some(failure),
        }
    }
}

impl MolGraph {
    pub fn add_atom(&mut self, element: Element) -> usize {
        self.atoms.push(Atom {
            element,
            aromatic: false,
        });
        self.atoms.len() - 1
    }

    /// Adds a bond; returns false (and leaves the graph unchanged) for
    /// self-loops and duplicate bonds.
    pub fn add_bond(&mut self, a: usize, b: usize, order: u8) -> bool {
        if a == b || self.bond_between(a, b).is_some() {
            return false;
        }
        self.bonds.push(Bond { a, b, order });
        true
    }

    pub fn bond_between(&self, a: usize, b: usize) -> Option<usize> {
        self.bonds
            .iter()
            .position(|bd| (bd.a == a && bd.b == b) || (bd.a == b && bd.b == a))
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// Adjacency as (neighbor, bond index) per atom.
    pub fn adjacency(&self) -> Vec<Vec<(usize, usize)>> {
        let mut adj = vec![Vec::new(); self.atoms.len()];
        for (i, b) in self.bonds.iter().enumerate() {
            adj[b.a].push((b.b, i));
            adj[b.b].push((b.a, i));
        }
        adj
    }

    pub fn degree(&self, atom: usize) -> usize {
        self.bonds
            .iter()
            .filter(|b| b.a == atom || b.b == atom)
            .count()
    }

    /// Sum of incident bond orders plus open attachment orders.
    pub fn valence(&self, atom: usize) -> u32 {
        let bonds: u32 = self
            .bonds
            .iter()
            .filter(|b| b.a == atom || b.b == atom)
            .map(|b| b.order as u32)
            .sum();
        let open: u32 = self
            .attachments
            .iter()
            .filter(|a| a.atom == atom)
            .map(|a| a.order as u32)
            .sum();
        bonds + open
    }

    pub fn free_valence(&self, atom: usize) -> u32 {
        self.atoms[atom]
            .element
            .max_valence()
            .saturating_sub(self.valence(atom))
    }

    /// Connected components over bonds, excluding bonds in `skip`.
    pub fn components_without(&self, skip: &BTreeSet<usize>) -> Vec<Vec<usize>> {
        let adj = self.adjacency();
        let mut seen = vec![false; self.atoms.len()];
        let mut comps = Vec::new();
        for start in 0..self.atoms.len() {
            if seen[start] {
                continue;
            }
            let mut comp = Vec::new();
            let mut queue = VecDeque::from([start]);
            seen[start] = true;
            while let Some(u) = queue.pop_front() {
                comp.push(u);
                for &(v, bi) in &adj[u] {
                    if !skip.contains(&bi) && !seen[v] {
                        seen[v] = true;
                        queue.push_back(v);
                    }
                }
            }
            comp.sort_unstable();
            comps.push(comp);
        }
        comps
    }

    pub fn components(&self) -> Vec<Vec<usize>> {
        self.components_without(&BTreeSet::new())
    }

    pub fn is_connected(&self) -> bool {
        self.components().len() <= 1
    }

    /// Recomputes `ring_bonds`: a bond lies on a cycle iff it is not a bridge.
    pub fn recompute_rings(&mut self) {
        let n = self.atoms.len();
        let adj = self.adjacency();
        let mut disc = vec![usize::MAX; n];
        let mut low = vec![0usize; n];
        let mut bridges = BTreeSet::new();
        let mut timer = 0;
        for root in 0..n {
            if disc[root] != usize::MAX {
                continue;
            }
            // iterative Tarjan bridge search: (node, parent bond, next edge idx)
            let mut stack: Vec<(usize, usize, usize)> = vec![(root, usize::MAX, 0)];
            disc[root] = timer;
            low[root] = timer;
            timer += 1;
            while let Some(&mut (u, pb, ref mut ei)) = stack.last_mut() {
                if *ei < adj[u].len() {
                    let (v, bi) = adj[u][*ei];
                    *ei += 1;
                    if bi == pb {
                        continue;
                    }
                    if disc[v] == usize::MAX {
                        disc[v] = timer;
                        low[v] = timer;
                        timer += 1;
                        stack.push((v, bi, 0));
                    } else {
                        low[u] = low[u].min(disc[v]);
                    }
                } else {
                    stack.pop();
                    if let Some(&(p, _, _)) = stack.last() {
                        low[p] = low[p].min(low[u]);
                        if low[u] > disc[p] {
                            bridges.insert(pb);
                        }
                    }
                }
            }
        }
        self.ring_bonds = (0..self.bonds.len())
            .filter(|i| !bridges.contains(i))
            .collect();
    }

    /// Cyclomatic number: independent ring count.
    pub fn ring_count(&self) -> usize {
        let comps = self.components().len();
        (self.bonds.len() + comps).saturating_sub(self.atoms.len())
    }

    /// Rings beyond the first in each fused ring system.
    pub fn ring_fusions(&self) -> usize {
        // Ring systems are components of the subgraph spanned by ring bonds.
        let ring_atoms: BTreeSet<usize> = self
            .ring_bonds
            .iter()
            .flat_map(|&i| [self.bonds[i].a, self.bonds[i].b])
            .collect();
        if ring_atoms.is_empty() {
            return 0;
        }
        let skip: BTreeSet<usize> = (0..self.bonds.len())
            .filter(|i| !self.ring_bonds.contains(i))
            .collect();
        let systems = self
            .components_without(&skip)
            .into_iter()
            .filter(|c| ring_atoms.contains(&c[0]))
            .count();
        self.ring_count().saturating_sub(systems)
    }

    pub fn heteroatom_count(&self) -> usize {
        self.atoms
            .iter()
            .filter(|a| a.element != Element::C)
            .count()
    }

    pub fn element_counts(&self) -> [usize; 4] {
        let mut counts = [0; 4];
        for a in &self.atoms {
            counts[a.element.index()] += 1;
        }
        counts
    }

    /// Drops every open attachment; the atoms keep implicit hydrogens instead.
    pub fn cap_attachments(&mut self) {
        self.attachments.clear();
    }

    /// Validity: non-empty, no open attachments, valence table respected, connected.
    pub fn validate(&self) -> ValidityReport {
        if self.atoms.is_empty() {
            return ValidityReport::fail(ValidityFailure::EmptySequence);
        }
        if !self.attachments.is_empty() {
            return ValidityReport::fail(ValidityFailure::UnmatchedClosure);
        }
        if (0..self.atoms.len())
            .any(|i| self.valence(i) > self.atoms[i].element.max_valence())
        {
            return ValidityReport::fail(ValidityFailure::ValenceViolation);
        }
        if !self.is_connected() {
            return ValidityReport::fail(ValidityFailure::Disconnected);
        }
        ValidityReport::ok()
    }

    /// Relabels atoms: new index of old atom `i` is `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> MolGraph {
        let mut atoms = self.atoms.clone();
        for (old, &new) in perm.iter().enumerate() {
            atoms[new] = self.atoms[old];
        }
        let mut g = MolGraph {
            atoms,
            bonds: self
                .bonds
                .iter()
                .map(|b| Bond {
                    a: perm[b.a],
                    b: perm[b.b],
                    order: b.order,
                })
                .collect(),
            ring_bonds: BTreeSet::new(),
            attachments: self
                .attachments
                .iter()
                .map(|a| Attachment {
                    atom: perm[a.atom],
                    ..*a
                })
                .collect(),
        };
        g.recompute_rings();
        g
    }

    /// Induced subgraph on `atoms` (sorted), returning the old→new index map.
    pub(crate) fn induced(&self, atoms: &[usize]) -> (MolGraph, Vec<Option<usize>>) {
        let mut map = vec![None; self.atoms.len()];
        let mut g = MolGraph::default();
        for &a in atoms {
            map[a] = Some(g.add_atom(self.atoms[a].element));
        }
        for b in &self.bonds {
            if let (Some(x), Some(y)) = (map[b.a], map[b.b]) {
                g.bonds.push(Bond {
                    a: x,
                    b: y,
                    order: b.order,
                });
            }
        }
        for at in &self.attachments {
            if let Some(x) = map[at.atom] {
                g.attachments.push(Attachment { atom: x, ..*at });
            }
        }
        g.recompute_rings();
        (g, map)
    }
}
