use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dialogue::Trajectory;
use crate::vocab::TokenId;

/// Which guidance mechanism placed a pin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PinSource {
    History,
    Opening,
    Word,
    Semantic,
    Search,
    Manual,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pin {
    pub token: TokenId,
    pub source: PinSource,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConditionError {
    #[error("slot {0} pinned to the mask token")]
    MaskPin(usize),
    #[error("slot {slot} pinned to {existing} and {new}")]
    PinConflict {
        slot: usize,
        existing: TokenId,
        new: TokenId,
    },
    #[error("pin at slot {slot} outside canvas of length {canvas_len}")]
    OutOfRange { slot: usize, canvas_len: usize },
    #[error("content pinned at slot {0} after a pinned end token")]
    EndOrder(usize),
    #[error("pinned markers break alternation at slot {0}")]
    MarkerOrder(usize),
}

/// The fixed part of a partially observed trajectory: a set of slot pins.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InpaintingCondition {
    pins: BTreeMap<usize, Pin>,
}

impl InpaintingCondition {
    pub fn new() -> Self {
        Self::default()
    }

    /// Pins every token of a history prefix at its own slot.
    pub fn from_prefix(prefix: &Trajectory) -> Self {
        let mut c = Self::new();
        for (i, &t) in prefix.tokens().iter().enumerate() {
            c.pins.insert(
                i,
                Pin {
                    token: t,
                    source: PinSource::History,
                },
            );
        }
        c
    }

    pub fn pin(&mut self, slot: usize, token: TokenId, source: PinSource) -> Result<(), ConditionError> {
        if token == TokenId::MASK {
            return Err(ConditionError::MaskPin(slot));
        }
        match self.pins.get(&slot) {
            Some(p) if p.token != token => Err(ConditionError::PinConflict {
                slot,
                existing: p.token,
                new: token,
            }),
            Some(_) => Ok(()),
            None => {
                self.pins.insert(slot, Pin { token, source });
                Ok(())
            }
        }
    }

    /// Union of two conditions; identical pins on the same slot are allowed.
    pub fn merged(&self, other: &Self) -> Result<Self, ConditionError> {
        let mut out = self.clone();
        for (&slot, p) in &other.pins {
            out.pin(slot, p.token, p.source)?;
        }
        Ok(out)
    }

    pub fn get(&self, slot: usize) -> Option<&Pin> {
        self.pins.get(&slot)
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &Pin)> {
        self.pins.iter().map(|(&s, p)| (s, p))
    }

    pub fn slots(&self) -> impl Iterator<Item = usize> + '_ {
        self.pins.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.pins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pins.is_empty()
    }

    /// Checks the pins against a canvas: range, end ordering, and that pinned
    /// markers can still be completed into an alternating sequence.
    pub fn validate(&self, canvas_len: usize) -> Result<(), ConditionError> {
        let mut first_end: Option<usize> = None;
        let mut last_marker: Option<(usize, TokenId)> = None;
        for (&slot, pin) in &self.pins {
            if slot >= canvas_len {
                return Err(ConditionError::OutOfRange { slot, canvas_len });
            }
            if pin.token == TokenId::MASK {
                return Err(ConditionError::MaskPin(slot));
            }
            if pin.token == TokenId::END {
                first_end.get_or_insert(slot);
                continue;
            }
            if first_end.is_some() {
                return Err(ConditionError::EndOrder(slot));
            }
            if pin.token.is_marker() {
                if slot == 0 && pin.token != TokenId::SYS {
                    return Err(ConditionError::MarkerOrder(slot));
                }
                match last_marker {
                    None if pin.token == TokenId::USR && slot == 0 => {
                        return Err(ConditionError::MarkerOrder(slot))
                    }
                    Some((prev, tok)) if tok == pin.token => {
                        // an opposite marker must fit strictly between them
                        let free = (prev + 1..slot).any(|s| !self.pins.contains_key(&s));
                        if !free {
                            return Err(ConditionError::MarkerOrder(slot));
                        }
                    }
                    _ => {}
                }
                last_marker = Some((slot, pin.token));
            } else if slot == 0 {
                return Err(ConditionError::MarkerOrder(0));
            }
        }
        Ok(())
    }
}
