use super::GrammarError;

pub type TokenId = u32;

/// Number of categories in the standard table, including `[PAD]` and `[MASK]`.
pub const K: usize = 20;
pub const PAD_ID: TokenId = 18;
/// The mask token is always the last category.
pub const MASK_ID: TokenId = 19;
pub const DOT_ID: TokenId = 17;

const STANDARD: [&str; K] = [
    "C", "N", "O", "F", "=", "#", "(", ")", "1", "2", "3", "4", "5", "6", "7", "8", "9", ".",
    "[PAD]", "[MASK]",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Element {
    C,
    N,
    O,
    F,
}

impl Element {
    pub const ALL: [Element; 4] = [Element::C, Element::N, Element::O, Element::F];

    pub fn max_valence(self) -> u32 {
        match self {
            Element::C => 4,
            Element::N => 3,
            Element::O => 2,
            Element::F => 1,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Element::C => "C",
            Element::N => "N",
            Element::O => "O",
            Element::F => "F",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Syntactic role of a token id.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    Atom(Element),
    Bond(u8),
    BranchOpen,
    BranchClose,
    Digit(u8),
    Dot,
    Pad,
    Mask,
}

/// Ordered token alphabet. Tokenization is greedy longest-match.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenTable {
    tokens: Vec<String>,
    mask_id: TokenId,
    pad_id: TokenId,
}

impl Default for TokenTable {
    fn default() -> Self {
        Self::standard()
    }
}

impl TokenTable {
    pub fn standard() -> Self {
        Self {
            tokens: STANDARD.iter().map(|s| s.to_string()).collect(),
            mask_id: MASK_ID,
            pad_id: PAD_ID,
        }
    }

    /// Rebuilds a table from its serialized token list. Only the standard
    /// alphabet is accepted since the grammar is hard-wired to it.
    pub fn from_tokens(tokens: &[String]) -> Result<Self, GrammarError> {
        let standard = Self::standard();
        if tokens.len() != standard.tokens.len()
            || tokens.iter().zip(&standard.tokens).any(|(a, b)| a != b)
        {
            return Err(GrammarError::UnknownTokenTable);
        }
        Ok(standard)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn mask_id(&self) -> TokenId {
        self.mask_id
    }

    pub fn pad_id(&self) -> TokenId {
        self.pad_id
    }

    pub fn surface(&self, id: TokenId) -> &str {
        &self.tokens[id as usize]
    }

    pub fn id(&self, surface: &str) -> Option<TokenId> {
        self.tokens
            .iter()
            .position(|t| t == surface)
            .map(|i| i as TokenId)
    }

    pub fn kind(id: TokenId) -> TokenKind {
        match id {
            0 => TokenKind::Atom(Element::C),
            1 => TokenKind::Atom(Element::N),
            2 => TokenKind::Atom(Element::O),
            3 => TokenKind::Atom(Element::F),
            4 => TokenKind::Bond(2),
            5 => TokenKind::Bond(3),
            6 => TokenKind::BranchOpen,
            7 => TokenKind::BranchClose,
            8..=16 => TokenKind::Digit((id - 7) as u8),
            DOT_ID => TokenKind::Dot,
            PAD_ID => TokenKind::Pad,
            _ => TokenKind::Mask,
        }
    }

    pub fn atom_id(e: Element) -> TokenId {
        e.index() as TokenId
    }

    pub fn digit_id(d: u8) -> TokenId {
        debug_assert!((1..=9).contains(&d));
        d as TokenId + 7
    }

    pub fn bond_id(order: u8) -> Option<TokenId> {
        match order {
            2 => Some(4),
            3 => Some(5),
            _ => None,
        }
    }

    pub fn tokenize(&self, s: &str) -> Result<Vec<TokenId>, GrammarError> {
        let mut out = Vec::with_capacity(s.len());
        let mut rest = s;
        let mut offset = 0;
        while !rest.is_empty() {
            let best = self
                .tokens
                .iter()
                .enumerate()
                .filter(|(_, t)| rest.starts_with(t.as_str()))
                .max_by_key(|(_, t)| t.len());
            match best {
                Some((id, t)) => {
                    out.push(id as TokenId);
                    rest = &rest[t.len()..];
                    offset += t.len();
                }
                None => {
                    let ch = rest.chars().next().unwrap_or('?');
                    return Err(GrammarError::Syntax(format!(
                        "character {ch:?} at byte {offset} is outside the alphabet"
                    )));
                }
            }
        }
        Ok(out)
    }

    pub fn detokenize(&self, ids: &[TokenId]) -> String {
        ids.iter().map(|&id| self.surface(id)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mask_is_last_category() {
        let t = TokenTable::standard();
        assert_eq!(t.len(), K);
        assert_eq!(t.mask_id() as usize, K - 1);
        assert_eq!(t.surface(PAD_ID), "[PAD]");
        assert_eq!(t.surface(DOT_ID), ".");
        for (i, s) in t.tokens().iter().enumerate() {
            assert_eq!(t.id(s), Some(i as TokenId));
        }
    }

    #[test]
    fn kinds_match_surfaces() {
        let t = TokenTable::standard();
        for d in 1..=9u8 {
            let id = TokenTable::digit_id(d);
            assert_eq!(t.surface(id), d.to_string());
            assert_eq!(TokenTable::kind(id), TokenKind::Digit(d));
        }
        assert_eq!(TokenTable::kind(t.id("=").unwrap()), TokenKind::Bond(2));
        assert_eq!(TokenTable::kind(t.id("#").unwrap()), TokenKind::Bond(3));
        assert_eq!(TokenTable::kind(MASK_ID), TokenKind::Mask);
    }

    #[test]
    fn tokenize_examples() {
        let t = TokenTable::standard();
        let ids = t.tokenize("CC=O").unwrap();
        assert_eq!(ids, vec![0, 0, 4, 2]);
        let ids = t.tokenize("C1CC1.N1").unwrap();
        let one = TokenTable::digit_id(1);
        assert_eq!(ids, vec![0, one, 0, 0, one, DOT_ID, 1, one]);
        assert!(matches!(t.tokenize("Cq"), Err(GrammarError::Syntax(_))));
        assert_eq!(t.tokenize("C[MASK][MASK]").unwrap(), vec![0, MASK_ID, MASK_ID]);
    }

    #[test]
    fn from_tokens_rejects_foreign_tables() {
        let t = TokenTable::standard();
        assert!(TokenTable::from_tokens(t.tokens()).is_ok());
        let mut other = t.tokens().to_vec();
        other.swap(0, 1);
        assert!(TokenTable::from_tokens(&other).is_err());
    }
}
