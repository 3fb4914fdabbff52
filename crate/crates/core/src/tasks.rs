//! Fragment-constrained generation tasks and the synthetic training corpus.
//!
//! Every task maps its inputs to a [`Template`]: given tokens stay frozen and
//! `[MASK]` chunks mark what the sampler fills in.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grammar::{
    parse, write_with_cuts, GrammarError, MolGraph, TokenId, TokenTable, DOT_ID,
    MASK_ID,
};
use crate::sampler::{LengthModel, Template};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TaskError {
    #[error("task {task} expects {expected} input(s), got {got}")]
    Arity {
        task: Task,
        expected: usize,
        got: usize,
    },
    #[error("input {0:?} has no open attachment digit")]
    NoAttachment(String),
    #[error("side chains share open attachment digit {0}")]
    SharedDigit(u8),
    #[error("input {0:?} must be a complete molecule without open attachments")]
    OpenSubstructure(String),
    #[error("frozen tokens ({0}) leave no room for a masked chunk within {1} tokens")]
    TooLong(usize, usize),
    #[error("cannot read input {input:?}: {source}")]
    Grammar { input: String, source: GrammarError },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Denovo,
    Linker,
    MotifExtension,
    ScaffoldDecoration,
    Superstructure,
}

impl Task {
    pub const ALL: [Task; 5] = [
        Task::Denovo,
        Task::Linker,
        Task::MotifExtension,
        Task::ScaffoldDecoration,
        Task::Superstructure,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Task::Denovo => "denovo",
            Task::Linker => "linker",
            Task::MotifExtension => "motif_extension",
            Task::ScaffoldDecoration => "scaffold_decoration",
            Task::Superstructure => "superstructure",
        }
    }

    /// Number of molecule strings the task needs.
    pub fn arity(self) -> usize {
        match self {
            Task::Denovo => 0,
            Task::Linker => 2,
            _ => 1,
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Task::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| format!("unknown task {s:?}"))
    }
}

struct Input {
    ids: Vec<TokenId>,
    graph: MolGraph,
}

fn read_input(s: &str) -> Result<Input, TaskError> {
    let wrap = |source| TaskError::Grammar {
        input: s.to_string(),
        source,
    };
    let ids = TokenTable::standard().tokenize(s).map_err(wrap)?;
    let graph = parse(s, false).map_err(wrap)?;
    Ok(Input { ids, graph })
}

fn open_digits(g: &MolGraph) -> BTreeSet<u8> {
    g.attachments.iter().map(|a| a.digit).collect()
}

/// Builds the template for `task`. Chunk lengths come from `chunks`; each
/// chunk is shortened so the whole template fits in `max_len` tokens.
pub fn task_template<R: Rng + ?Sized>(
    task: Task,
    inputs: &[String],
    chunks: &LengthModel,
    max_len: usize,
    rng: &mut R,
) -> Result<Template, TaskError> {
    if inputs.len() != task.arity() {
        return Err(TaskError::Arity {
            task,
            expected: task.arity(),
            got: inputs.len(),
        });
    }
    let parsed = inputs
        .iter()
        .map(|s| read_input(s))
        .collect::<Result<Vec<_>, _>>()?;
    let mut ids: Vec<TokenId> = Vec::new();
    let mut slots: Vec<usize> = Vec::new();
    match task {
        Task::Denovo => slots.push(0),
        Task::Linker => {
            for (s, p) in inputs.iter().zip(&parsed) {
                if p.graph.attachments.is_empty() {
                    return Err(TaskError::NoAttachment(s.clone()));
                }
            }
            let a = open_digits(&parsed[0].graph);
            let b = open_digits(&parsed[1].graph);
            if let Some(&d) = a.intersection(&b).next() {
                return Err(TaskError::SharedDigit(d));
            }
            ids.extend(&parsed[0].ids);
            ids.push(DOT_ID);
            slots.push(ids.len());
            ids.push(DOT_ID);
            ids.extend(&parsed[1].ids);
        }
        Task::MotifExtension | Task::ScaffoldDecoration => {
            let p = &parsed[0];
            if p.graph.attachments.is_empty() {
                return Err(TaskError::NoAttachment(inputs[0].clone()));
            }
            ids.extend(&p.ids);
            let n = if task == Task::MotifExtension {
                1
            } else {
                open_digits(&p.graph).len()
            };
            for _ in 0..n {
                ids.push(DOT_ID);
                slots.push(ids.len());
            }
        }
        Task::Superstructure => {
            let p = &parsed[0];
            if !p.graph.attachments.is_empty() {
                return Err(TaskError::OpenSubstructure(inputs[0].clone()));
            }
            ids.extend(&p.ids);
            slots.push(ids.len());
        }
    }
    let fixed = ids.len();
    if fixed + slots.len() > max_len {
        return Err(TaskError::TooLong(fixed, max_len));
    }
    let mut room = max_len - fixed - slots.len();
    let mut lens = Vec::with_capacity(slots.len());
    for _ in &slots {
        let m = chunks.sample(rng).max(1);
        let m = m.min(room + 1);
        room -= m - 1;
        lens.push(m);
    }
    // insert from the back so earlier slot offsets stay valid
    for (&at, &m) in slots.iter().zip(&lens).rev() {
        ids.splice(at..at, std::iter::repeat_n(MASK_ID, m));
    }
    Ok(Template::new(ids))
}

/// True when every non-mask token of `template` appears unchanged in `out`.
pub fn preserves_template(template: &Template, out: &[TokenId]) -> bool {
    template.ids.len() == out.len()
        && template
            .ids
            .iter()
            .zip(out)
            .all(|(&t, &o)| t == MASK_ID || t == o)
}

const CORES: [&str; 10] = [
    "C1CCCCC1",
    "C1CCNCC1",
    "C1CCOCC1",
    "C1CCCC1",
    "C1CCOC1",
    "C1CNCCN1",
    "C1CC1",
    "C1=CCCCC1",
    "C1CCC2CCCCC2C1",
    "CCCC",
];

const SUBSTITUENTS: [&str; 12] = [
    "C", "O", "N", "F", "CC", "CO", "CN", "C(=O)O", "C#N", "OC", "C(F)(F)F", "CCO",
];

/// Random ring or chain core with zero to three substituents, each substituent
/// written as its own block.
pub fn synthetic_molecule<R: Rng + ?Sized>(rng: &mut R) -> String {
    let core = CORES.choose(rng).expect("non-empty");
    let mut g = parse(core, true).expect("core parses");
    let extra = rng.gen_range(0..=3);
    let mut cuts = BTreeSet::new();
    for _ in 0..extra {
        let sub = parse(SUBSTITUENTS.choose(rng).expect("non-empty"), true).expect("parses");
        let hosts: Vec<usize> = (0..g.atoms.len()).filter(|&a| g.free_valence(a) >= 1).collect();
        let Some(&host) = hosts.choose(rng) else { break };
        let offset = g.atoms.len();
        for a in &sub.atoms {
            g.add_atom(a.element);
        }
        for b in &sub.bonds {
            g.add_bond(b.a + offset, b.b + offset, b.order);
        }
        g.add_bond(host, offset, 1);
        cuts.insert(g.bonds.len() - 1);
    }
    g.recompute_rings();
    let rank: Vec<usize> = (0..g.atoms.len()).collect();
    let ids = write_with_cuts(&g, &cuts, &rank).expect("small molecules serialize");
    TokenTable::standard().detokenize(&ids)
}

pub fn synthetic_corpus<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<String> {
    (0..n).map(|_| synthetic_molecule(rng)).collect()
}
