//! Conversational MDP primitives: trajectories, states, actions, targets.
//!
//! A dialogue is stored as one flat token sequence. Each turn is encoded as
//! `<sys> system-span <usr> user-span`, so the markers strictly alternate and
//! a complete trajectory always ends inside a user span.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::vocab::{TokenId, VocabError, Vocabulary};

/// Trajectory capacity in tokens.
pub const CAPACITY: usize = 256;
/// Maximum number of conversational turns in an episode.
pub const DEFAULT_T_MAX: usize = 10;
pub const DEFAULT_GAMMA: f64 = 0.95;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DialogueError {
    #[error(transparent)]
    Vocab(#[from] VocabError),
    #[error("reserved token {0} inside a span")]
    ReservedInSpan(TokenId),
    #[error("encoded length {len} exceeds capacity {capacity}")]
    CapacityExceeded { len: usize, capacity: usize },
    #[error("malformed turn markers at slot {0}")]
    MalformedMarkers(usize),
    #[error("trajectory contains a mask token at slot {0}")]
    ContainsMask(usize),
    #[error("turn {turn} out of range (trajectory has {turns} turns)")]
    TurnOutOfRange { turn: usize, turns: usize },
    #[error("invalid target: {0}")]
    InvalidTarget(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    System,
    User,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Buyer,
    Seller,
}

/// One conversational turn: the system span followed by the user span.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Turn {
    pub system: Vec<TokenId>,
    pub user: Vec<TokenId>,
}

impl Turn {
    pub fn new(system: Vec<TokenId>, user: Vec<TokenId>) -> Self {
        Self { system, user }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Trajectory {
    tokens: Vec<TokenId>,
}

impl Trajectory {
    pub fn new(tokens: Vec<TokenId>) -> Result<Self, DialogueError> {
        if tokens.len() > CAPACITY {
            return Err(DialogueError::CapacityExceeded {
                len: tokens.len(),
                capacity: CAPACITY,
            });
        }
        Ok(Self { tokens })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn tokens(&self) -> &[TokenId] {
        &self.tokens
    }

    pub fn into_tokens(self) -> Vec<TokenId> {
        self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn contains_mask(&self) -> bool {
        self.tokens.contains(&TokenId::MASK)
    }

    /// Checks marker alternation and returns the slot of every `<sys>` marker.
    pub fn turn_starts(&self) -> Result<Vec<usize>, DialogueError> {
        let mut starts = Vec::new();
        let mut expect_sys = true;
        for (i, &tok) in self.tokens.iter().enumerate() {
            match tok {
                TokenId::MASK => return Err(DialogueError::ContainsMask(i)),
                TokenId::END => return Err(DialogueError::MalformedMarkers(i)),
                TokenId::SYS if expect_sys => {
                    starts.push(i);
                    expect_sys = false;
                }
                TokenId::USR if !expect_sys => expect_sys = true,
                TokenId::SYS | TokenId::USR => return Err(DialogueError::MalformedMarkers(i)),
                _ if i == 0 => return Err(DialogueError::MalformedMarkers(0)),
                _ => {}
            }
        }
        if !expect_sys {
            // last turn has no user marker
            return Err(DialogueError::MalformedMarkers(self.tokens.len()));
        }
        Ok(starts)
    }

    pub fn is_valid(&self) -> bool {
        self.turn_starts().is_ok()
    }

    pub fn turn_count(&self) -> Result<usize, DialogueError> {
        self.turn_starts().map(|s| s.len())
    }

    /// Maps a slot to its turn and side; markers belong to the span they open.
    pub fn turn_index(&self, slot: usize) -> Option<(usize, Side)> {
        if slot >= self.tokens.len() {
            return None;
        }
        let mut turn = None;
        let mut side = Side::System;
        for &tok in &self.tokens[..=slot] {
            match tok {
                TokenId::SYS => {
                    turn = Some(turn.map_or(0, |t| t + 1));
                    side = Side::System;
                }
                TokenId::USR => side = Side::User,
                _ => {}
            }
        }
        turn.map(|t| (t, side))
    }

    pub fn decode(&self) -> Result<Vec<Turn>, DialogueError> {
        let starts = self.turn_starts()?;
        let mut turns = Vec::with_capacity(starts.len());
        for (k, &start) in starts.iter().enumerate() {
            let end = starts.get(k + 1).copied().unwrap_or(self.tokens.len());
            let body = &self.tokens[start + 1..end];
            let split = body
                .iter()
                .position(|&t| t == TokenId::USR)
                .expect("alternation checked");
            turns.push(Turn {
                system: body[..split].to_vec(),
                user: body[split + 1..].to_vec(),
            });
        }
        Ok(turns)
    }
}

/// Concatenates turns into a trajectory with alternating markers.
pub fn encode_dialogue(turns: &[Turn]) -> Result<Trajectory, DialogueError> {
    let mut tokens = Vec::new();
    for turn in turns {
        for &tok in turn.system.iter().chain(turn.user.iter()) {
            if tok.is_reserved() {
                return Err(DialogueError::ReservedInSpan(tok));
            }
        }
        tokens.push(TokenId::SYS);
        tokens.extend_from_slice(&turn.system);
        tokens.push(TokenId::USR);
        tokens.extend_from_slice(&turn.user);
    }
    Trajectory::new(tokens)
}

/// Text convenience over [`encode_dialogue`]: spans are whitespace-separated tokens.
pub fn encode_text(turns: &[(&str, &str)], vocab: &Vocabulary) -> Result<Trajectory, DialogueError> {
    let parsed = turns
        .iter()
        .map(|(s, u)| Ok(Turn::new(vocab.parse(s)?, vocab.parse(u)?)))
        .collect::<Result<Vec<_>, DialogueError>>()?;
    encode_dialogue(&parsed)
}

pub fn decode_trajectory(traj: &Trajectory) -> Result<Vec<Turn>, DialogueError> {
    traj.decode()
}

pub fn decode_text(traj: &Trajectory, vocab: &Vocabulary) -> Result<Vec<(String, String)>, DialogueError> {
    Ok(traj
        .decode()?
        .into_iter()
        .map(|t| (vocab.render(&t.system), vocab.render(&t.user)))
        .collect())
}

/// A dialogue state: the history covering turns `0..turn`.
///
/// Scenario context (listing, profile, keyword list) lives with the
/// environment that owns the state.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DialogueState {
    pub prefix: Trajectory,
    pub turn: usize,
    /// System response already committed for `turn`, if any.
    pub pending_system: Option<Vec<TokenId>>,
}

impl DialogueState {
    pub fn initial() -> Self {
        Self {
            prefix: Trajectory::empty(),
            turn: 0,
            pending_system: None,
        }
    }

    /// Appends a completed turn.
    pub fn advance(&self, system: &[TokenId], user: &[TokenId]) -> Result<Self, DialogueError> {
        let mut tokens = self.prefix.tokens().to_vec();
        tokens.push(TokenId::SYS);
        tokens.extend_from_slice(system);
        tokens.push(TokenId::USR);
        tokens.extend_from_slice(user);
        Ok(Self {
            prefix: Trajectory::new(tokens)?,
            turn: self.turn + 1,
            pending_system: None,
        })
    }
}

pub fn state_at(traj: &Trajectory, turn: usize) -> Result<DialogueState, DialogueError> {
    let starts = traj.turn_starts()?;
    if turn > starts.len() {
        return Err(DialogueError::TurnOutOfRange {
            turn,
            turns: starts.len(),
        });
    }
    let cut = starts.get(turn).copied().unwrap_or(traj.len());
    Ok(DialogueState {
        prefix: Trajectory::new(traj.tokens()[..cut].to_vec())?,
        turn,
        pending_system: None,
    })
}

/// Fixed span widths used by the synthetic environments, which makes every
/// `(turn, side, offset)` addressable as a canvas slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SpanLayout {
    pub system_width: usize,
    pub user_width: usize,
}

impl SpanLayout {
    pub const fn new(system_width: usize, user_width: usize) -> Self {
        Self {
            system_width,
            user_width,
        }
    }

    pub fn turn_width(&self) -> usize {
        2 + self.system_width + self.user_width
    }

    pub fn width(&self, side: Side) -> usize {
        match side {
            Side::System => self.system_width,
            Side::User => self.user_width,
        }
    }

    pub fn turn_start(&self, turn: usize) -> usize {
        turn * self.turn_width()
    }

    pub fn marker_slot(&self, turn: usize, side: Side) -> usize {
        match side {
            Side::System => self.turn_start(turn),
            Side::User => self.turn_start(turn) + 1 + self.system_width,
        }
    }

    /// Slot of token `offset` inside the span of `side` at `turn`.
    pub fn slot(&self, turn: usize, side: Side, offset: usize) -> usize {
        debug_assert!(offset < self.width(side));
        self.marker_slot(turn, side) + 1 + offset
    }

    pub fn canvas_len(&self, t_max: usize) -> usize {
        t_max * self.turn_width()
    }

    /// Span at `turn` of a trajectory that follows this layout.
    pub fn span<'a>(&self, tokens: &'a [TokenId], turn: usize, side: Side) -> Option<&'a [TokenId]> {
        let start = self.marker_slot(turn, side) + 1;
        let end = start + self.width(side);
        tokens.get(start..end)
    }
}

/// A system action: a strategy tag followed by its arguments.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DialogueAction {
    pub strategy_tag: TokenId,
    pub args: Vec<TokenId>,
}

impl DialogueAction {
    pub fn new(strategy_tag: TokenId, args: Vec<TokenId>) -> Self {
        Self { strategy_tag, args }
    }

    pub fn span(&self) -> Vec<TokenId> {
        let mut s = Vec::with_capacity(self.args.len() + 1);
        s.push(self.strategy_tag);
        s.extend_from_slice(&self.args);
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TargetKind {
    KeywordSequence(Vec<TokenId>),
    SemanticState(Vec<Vec<TokenId>>),
    RewardMax(Role),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Target {
    pub kind: TargetKind,
    pub gamma: f64,
}

impl Target {
    pub fn new(kind: TargetKind, gamma: f64) -> Result<Self, DialogueError> {
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(DialogueError::InvalidTarget("discount must lie in (0, 1)"));
        }
        match &kind {
            TargetKind::KeywordSequence(k) if k.is_empty() => {
                return Err(DialogueError::InvalidTarget("empty keyword sequence"))
            }
            TargetKind::SemanticState(a) if a.is_empty() || a.iter().any(Vec::is_empty) => {
                return Err(DialogueError::InvalidTarget("empty semantic alternative"))
            }
            _ => {}
        }
        Ok(Self { kind, gamma })
    }
}

/// Sparse reward: only terminal steps carry a value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardSignal {
    pub value: f64,
    pub terminal: bool,
}

impl RewardSignal {
    pub fn none() -> Self {
        Self {
            value: 0.0,
            terminal: false,
        }
    }

    pub fn terminal(value: f64) -> Self {
        Self {
            value,
            terminal: true,
        }
    }
}
