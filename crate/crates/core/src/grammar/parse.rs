use super::graph::{Attachment, MolGraph, ValidityFailure, ValidityReport};
use super::token::{TokenId, TokenKind, TokenTable};
use super::GrammarError;

/// Parses a token-id sequence with fragment-notation semantics.
///
/// Digits are paired by a single left-to-right scan over the whole string,
/// ignoring `.` boundaries: an occurrence closes the digit if it is open,
/// otherwise opens it. A pair inside one component closes a ring; a pair
/// across components joins them. With `strict` set, unpaired digits are an
/// error; otherwise they become open attachments.
pub fn parse_ids(ids: &[TokenId], strict: bool) -> Result<MolGraph, GrammarError> {
    let mut g = MolGraph::default();
    let mut prev: Option<usize> = None;
    let mut pending: Option<u8> = None;
    let mut branches: Vec<usize> = Vec::new();
    let mut last_was_open = false;
    let mut open: [Option<(usize, Option<u8>)>; 10] = [None; 10];

    let syntax = |pos: usize, msg: &str| GrammarError::Syntax(format!("token {pos}: {msg}"));

    for (pos, &id) in ids.iter().enumerate() {
        let kind = TokenTable::kind(id);
        let was_open = last_was_open;
        last_was_open = false;
        match kind {
            TokenKind::Atom(e) => {
                let idx = g.add_atom(e);
                match prev {
                    Some(p) => {
                        g.add_bond(p, idx, pending.take().unwrap_or(1));
                    }
                    None if pending.is_some() => return Err(syntax(pos, "bond before first atom")),
                    None => {}
                }
                prev = Some(idx);
            }
            TokenKind::Bond(order) => {
                if pending.is_some() || prev.is_none() {
                    return Err(syntax(pos, "misplaced bond symbol"));
                }
                pending = Some(order);
            }
            TokenKind::Digit(d) => {
                let atom = prev.ok_or_else(|| syntax(pos, "ring digit without atom"))?;
                let here = pending.take();
                match open[d as usize].take() {
                    Some((other, there)) => {
                        if other == atom {
                            return Err(syntax(pos, "ring closure onto the same atom"));
                        }
                        let order = match (here, there) {
                            (Some(a), Some(b)) if a != b => {
                                return Err(syntax(pos, "conflicting closure bond orders"))
                            }
                            (a, b) => a.or(b).unwrap_or(1),
                        };
                        if !g.add_bond(other, atom, order) {
                            return Err(syntax(pos, "duplicate bond"));
                        }
                    }
                    None => open[d as usize] = Some((atom, here)),
                }
            }
            TokenKind::BranchOpen => {
                let atom = prev.ok_or_else(|| syntax(pos, "branch without atom"))?;
                if pending.is_some() {
                    return Err(syntax(pos, "bond before branch"));
                }
                branches.push(atom);
                last_was_open = true;
            }
            TokenKind::BranchClose => {
                if pending.is_some() || was_open {
                    return Err(syntax(pos, "empty or dangling branch"));
                }
                prev = Some(
                    branches
                        .pop()
                        .ok_or_else(|| syntax(pos, "unbalanced ')'"))?,
                );
            }
            TokenKind::Dot => {
                if pending.is_some() || !branches.is_empty() {
                    return Err(syntax(pos, "'.' inside branch or after bond"));
                }
                prev = None;
            }
            TokenKind::Pad | TokenKind::Mask => {
                return Err(syntax(pos, "special token in molecule"));
            }
        }
    }
    if pending.is_some() {
        return Err(GrammarError::Syntax("trailing bond symbol".into()));
    }
    if !branches.is_empty() {
        return Err(GrammarError::Syntax("unclosed branch".into()));
    }
    for (d, slot) in open.iter().enumerate() {
        if let Some((atom, order)) = slot {
            if strict {
                return Err(GrammarError::UnmatchedClosure(d as u8));
            }
            g.attachments.push(Attachment {
                atom: *atom,
                digit: d as u8,
                order: order.unwrap_or(1),
            });
        }
    }
    g.attachments.sort_by_key(|a| (a.atom, a.digit));
    g.recompute_rings();
    Ok(g)
}

/// Tokenizes and parses a string.
pub fn parse(s: &str, strict: bool) -> Result<MolGraph, GrammarError> {
    let table = TokenTable::standard();
    parse_ids(&table.tokenize(s)?, strict)
}

/// Full validity check of a token sequence, returning the graph when it parses.
pub fn check_ids(ids: &[TokenId]) -> (ValidityReport, Option<MolGraph>) {
    if ids.is_empty() {
        return (ValidityReport::fail(ValidityFailure::EmptySequence), None);
    }
    match parse_ids(ids, false) {
        Ok(g) => (g.validate(), Some(g)),
        Err(GrammarError::UnmatchedClosure(_)) => {
            (ValidityReport::fail(ValidityFailure::UnmatchedClosure), None)
        }
        Err(_) => (ValidityReport::fail(ValidityFailure::SyntaxError), None),
    }
}

pub fn check(s: &str) -> (ValidityReport, Option<MolGraph>) {
    if s.is_empty() {
        return (ValidityReport::fail(ValidityFailure::EmptySequence), None);
    }
    match TokenTable::standard().tokenize(s) {
        Ok(ids) => check_ids(&ids),
        Err(_) => (ValidityReport::fail(ValidityFailure::SyntaxError), None),
    }
}
