//! Fragment-delimited molecular line notation.
//!
//! Molecules are written as `.`-separated fragment blocks over the alphabet
//! `C N O F = # ( ) 1-9 .`; paired digits close rings inside a block or join
//! blocks across `.`. The module covers tokenization, parsing into a
//! [`MolGraph`], validity, canonical forms, and the fragment algebra used by
//! the optimizer (decompose, attach, span extraction).

mod fragment;
mod graph;
mod parse;
mod token;
mod write;

use thiserror::Error;

pub use fragment::{attach, attach_graph, decompose, fragment_spans, split, CutRule, Fragment};
pub use graph::{Atom, Attachment, Bond, MolGraph, ValidityFailure, ValidityReport};
pub use parse::{check, check_ids, parse, parse_ids};
pub use token::{Element, TokenId, TokenKind, TokenTable, DOT_ID, K, MASK_ID, PAD_ID};
pub use write::{
    canonicalize, cuttable_bonds, remask_serialization, serialize, write_with_cuts,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GrammarError {
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("ring/attachment digit {0} is never closed")]
    UnmatchedClosure(u8),
    #[error("more than nine pairing digits open at once")]
    DigitExhausted,
    #[error("fragment has no open attachment point")]
    NoAttachmentPoint,
    #[error("token table does not match the built-in alphabet")]
    UnknownTokenTable,
}

/// `canonicalize(parse(s))` for strings that must parse.
pub fn canonical_string(s: &str) -> Result<String, GrammarError> {
    canonicalize(&parse(s, false)?)
}
