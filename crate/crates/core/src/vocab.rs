//! Closed word-level vocabulary shared by every environment.
//!
//! Token ids are positions in the vocabulary file. The four reserved tokens
//! always occupy ids 0..4 in the order mask, system marker, user marker, end.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const MASK_TOKEN: &str = "<mask>";
pub const SYS_TOKEN: &str = "<sys>";
pub const USR_TOKEN: &str = "<usr>";
pub const END_TOKEN: &str = "<end>";

const RESERVED: [&str; 4] = [MASK_TOKEN, SYS_TOKEN, USR_TOKEN, END_TOKEN];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenId(pub u32);

impl TokenId {
    pub const MASK: TokenId = TokenId(0);
    pub const SYS: TokenId = TokenId(1);
    pub const USR: TokenId = TokenId(2);
    pub const END: TokenId = TokenId(3);

    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }

    #[inline]
    pub fn is_reserved(self) -> bool {
        self.0 < RESERVED.len() as u32
    }

    #[inline]
    pub fn is_marker(self) -> bool {
        self == TokenId::SYS || self == TokenId::USR
    }
}

impl fmt::Display for TokenId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum VocabError {
    #[error("duplicate token `{0}`")]
    Duplicate(String),
    #[error("reserved token `{0}` missing or out of place")]
    ReservedMisplaced(String),
    #[error("unknown token `{0}`")]
    UnknownToken(String),
    #[error("empty token at line {0}")]
    EmptyToken(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
}

impl Vocabulary {
    /// Builds a vocabulary from non-reserved tokens; reserved tokens are prepended.
    pub fn new<I, S>(tokens: I) -> Result<Self, VocabError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let all = RESERVED
            .iter()
            .map(|s| s.to_string())
            .chain(tokens.into_iter().map(Into::into));
        Self::from_ordered(all)
    }

    fn from_ordered(tokens: impl Iterator<Item = String>) -> Result<Self, VocabError> {
        let mut list = Vec::new();
        let mut index = HashMap::new();
        for (i, tok) in tokens.enumerate() {
            if tok.is_empty() || tok.chars().any(char::is_whitespace) {
                return Err(VocabError::EmptyToken(i + 1));
            }
            if i < RESERVED.len() {
                if tok != RESERVED[i] {
                    return Err(VocabError::ReservedMisplaced(RESERVED[i].to_string()));
                }
            } else if RESERVED.contains(&tok.as_str()) {
                return Err(VocabError::ReservedMisplaced(tok));
            }
            if index.insert(tok.clone(), TokenId(i as u32)).is_some() {
                return Err(VocabError::Duplicate(tok));
            }
            list.push(tok);
        }
        if list.len() < RESERVED.len() {
            return Err(VocabError::ReservedMisplaced(RESERVED[list.len()].to_string()));
        }
        Ok(Self { tokens: list, index })
    }

    /// Parses the line-oriented format: one token per line, reserved tokens first.
    pub fn from_lines(text: &str) -> Result<Self, VocabError> {
        Self::from_ordered(
            text.lines()
                .filter(|l| !l.trim().is_empty())
                .map(|l| l.trim().to_string()),
        )
    }

    pub fn to_lines(&self) -> String {
        let mut out = String::new();
        for t in &self.tokens {
            out.push_str(t);
            out.push('\n');
        }
        out
    }

    /// Hex SHA-256 of the serialized vocabulary.
    pub fn fingerprint(&self) -> String {
        let digest = Sha256::digest(self.to_lines().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    pub fn expect_id(&self, token: &str) -> Result<TokenId, VocabError> {
        self.id(token)
            .ok_or_else(|| VocabError::UnknownToken(token.to_string()))
    }

    pub fn token(&self, id: TokenId) -> &str {
        &self.tokens[id.index()]
    }

    pub fn tokens(&self) -> impl Iterator<Item = (TokenId, &str)> {
        self.tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (TokenId(i as u32), t.as_str()))
    }

    /// Parses whitespace-separated tokens.
    pub fn parse(&self, text: &str) -> Result<Vec<TokenId>, VocabError> {
        text.split_whitespace().map(|t| self.expect_id(t)).collect()
    }

    pub fn render(&self, ids: &[TokenId]) -> String {
        ids.iter()
            .map(|&id| self.token(id))
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// The `k` non-reserved tokens closest to `query` by character edit distance.
    pub fn nearest(&self, query: &str, k: usize) -> Vec<&str> {
        let q: Vec<char> = query.chars().collect();
        let mut scored: Vec<(usize, &str)> = self
            .tokens
            .iter()
            .skip(RESERVED.len())
            .map(|t| {
                let c: Vec<char> = t.chars().collect();
                (crate::metrics::levenshtein(&q, &c), t.as_str())
            })
            .collect();
        scored.sort();
        scored.into_iter().take(k).map(|(_, t)| t).collect()
    }

    /// The built-in synthetic vocabulary covering the negotiation, keyword-chain
    /// and recommendation environments.
    pub fn standard() -> Self {
        Self::new(standard_tokens()).expect("standard vocabulary is well formed")
    }
}

pub const NEGOTIATION_STRATEGIES: [&str; 11] = [
    "greet",
    "inquire",
    "inform",
    "propose",
    "counter",
    "counter-noprice",
    "confirm",
    "affirm",
    "deny",
    "agree",
    "disagree",
];

pub const PRICE_LEVELS: usize = 21;
pub const FILLER: &str = "none";

pub const KEYWORD_SYSTEM_ACTS: [&str; 3] = ["chat", "ask", "share"];
pub const KEYWORD_USER_ACTS: [&str; 2] = ["share", "ack"];
pub const GREETING_WORD: &str = "hello";

pub const TOPIC_WORDS: [&str; 80] = [
    "garden", "music", "travel", "cooking", "hiking", "reading", "painting", "swimming",
    "coffee", "tea", "dogs", "cats", "soccer", "tennis", "chess", "guitar", "piano",
    "dancing", "movies", "photography", "camping", "fishing", "baking", "yoga", "running",
    "cycling", "skiing", "surfing", "poetry", "history", "science", "astronomy", "gaming",
    "knitting", "pottery", "wine", "beer", "pizza", "sushi", "tacos", "beach", "mountains",
    "city", "farm", "ocean", "forest", "desert", "rain", "snow", "summer", "winter",
    "spring", "autumn", "school", "college", "work", "family", "friends", "kids", "parents",
    "car", "train", "plane", "boat", "bike", "house", "apartment", "kitchen", "library",
    "museum", "concert", "theater", "festival", "holiday", "birthday", "wedding", "job",
    "money", "health", "sleep",
];

pub const RECOMMEND_SYSTEM_ACTS: [&str; 5] = ["chat", "ask", "recommend", "suggest", "offer"];
pub const RECOMMEND_USER_ACTS: [&str; 4] = ["prefer", "ack", "accept", "reject"];
pub const GENRES: [&str; 8] = [
    "action",
    "comedy",
    "drama",
    "horror",
    "scifi",
    "romance",
    "documentary",
    "animation",
];
pub const ITEM_COUNT: usize = 24;
pub const PRAISE_WORDS: [&str; 2] = ["great", "classic"];

pub fn price_token(level: usize) -> String {
    format!("p{level:02}")
}

pub fn item_token(i: usize) -> String {
    format!("item_{i:02}")
}

fn standard_tokens() -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    let mut push = |s: &str| {
        if !out.iter().any(|t| t == s) {
            out.push(s.to_string());
        }
    };
    for s in NEGOTIATION_STRATEGIES {
        push(s);
    }
    push(FILLER);
    for i in 0..PRICE_LEVELS {
        push(&price_token(i));
    }
    for s in KEYWORD_SYSTEM_ACTS.iter().chain(KEYWORD_USER_ACTS.iter()) {
        push(s);
    }
    push(GREETING_WORD);
    for s in TOPIC_WORDS {
        push(s);
    }
    for s in RECOMMEND_SYSTEM_ACTS.iter().chain(RECOMMEND_USER_ACTS.iter()) {
        push(s);
    }
    for s in GENRES {
        push(s);
    }
    for i in 0..ITEM_COUNT {
        push(&item_token(i));
    }
    for s in PRAISE_WORDS {
        push(s);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reserved_ids_are_fixed() {
        let v = Vocabulary::standard();
        assert_eq!(v.id(MASK_TOKEN), Some(TokenId::MASK));
        assert_eq!(v.id(SYS_TOKEN), Some(TokenId::SYS));
        assert_eq!(v.id(USR_TOKEN), Some(TokenId::USR));
        assert_eq!(v.id(END_TOKEN), Some(TokenId::END));
    }

    #[test]
    fn standard_size_is_in_range() {
        let v = Vocabulary::standard();
        assert!(v.len() > 150 && v.len() < 500, "{}", v.len());
    }

    #[test]
    fn line_format_round_trips() {
        let v = Vocabulary::standard();
        let back = Vocabulary::from_lines(&v.to_lines()).unwrap();
        assert_eq!(v, back);
        assert_eq!(v.fingerprint(), back.fingerprint());
    }

    #[test]
    fn rejects_duplicates_and_misplaced_reserved() {
        assert_eq!(
            Vocabulary::new(["a", "a"]).unwrap_err(),
            VocabError::Duplicate("a".into())
        );
        assert!(matches!(
            Vocabulary::new(["a", END_TOKEN]),
            Err(VocabError::ReservedMisplaced(_))
        ));
        assert!(matches!(
            Vocabulary::from_lines("<sys>\n<mask>\n<usr>\n<end>\n"),
            Err(VocabError::ReservedMisplaced(_))
        ));
    }

    #[test]
    fn nearest_suggests_close_spellings() {
        let v = Vocabulary::standard();
        let near = v.nearest("gardn", 3);
        assert_eq!(near[0], "garden");
    }
}
