//! Keyword pinning: each target word is written into a fixed canvas slot so
//! that every sample mentions the words in order.

use serde::{Deserialize, Serialize};

use super::GuidanceError;
use crate::dialogue::{Side, SpanLayout};
use crate::diffusion::{InpaintingCondition, PinSource};
use crate::vocab::TokenId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlacementSide {
    System,
    User,
    /// System span for even-numbered keywords, user span for odd ones.
    Alternating,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum KeywordPlacement {
    /// `k` keywords spread over `S = min(t_max - start_turn, 2k)` turns:
    /// keyword `i` goes to turn `start_turn + floor(i * S / k)`.
    EvenSpacing {
        start_turn: usize,
        side: PlacementSide,
        offset: usize,
    },
    /// Explicit `(turn, side, offset)` per keyword.
    Fixed(Vec<(usize, Side, usize)>),
}

impl Default for KeywordPlacement {
    fn default() -> Self {
        KeywordPlacement::EvenSpacing {
            start_turn: 1,
            side: PlacementSide::System,
            offset: 1,
        }
    }
}

impl KeywordPlacement {
    /// `(turn, side, offset)` of each of `k` keywords.
    pub fn positions(&self, k: usize, t_max: usize) -> Result<Vec<(usize, Side, usize)>, GuidanceError> {
        match self {
            KeywordPlacement::Fixed(p) => {
                if p.len() < k {
                    return Err(GuidanceError::PlacementOverflow {
                        needed: k,
                        available: p.len(),
                    });
                }
                Ok(p[..k].to_vec())
            }
            &KeywordPlacement::EvenSpacing { start_turn, side, offset } => {
                let available = t_max.saturating_sub(start_turn);
                if k > available {
                    return Err(GuidanceError::PlacementOverflow { needed: k, available });
                }
                let span = available.min(2 * k);
                Ok((0..k)
                    .map(|i| {
                        let s = match side {
                            PlacementSide::System => Side::System,
                            PlacementSide::User => Side::User,
                            PlacementSide::Alternating if i % 2 == 0 => Side::System,
                            PlacementSide::Alternating => Side::User,
                        };
                        (start_turn + i * span / k, s, offset)
                    })
                    .collect())
            }
        }
    }
}

/// Pins `keywords` at the slots chosen by `placement`. The slots must be
/// strictly increasing and inside the canvas.
pub fn word_level_condition(
    keywords: &[TokenId],
    placement: &KeywordPlacement,
    layout: SpanLayout,
    t_max: usize,
) -> Result<InpaintingCondition, GuidanceError> {
    let mut cond = InpaintingCondition::new();
    let mut last: Option<usize> = None;
    for (i, (&k, (turn, side, offset))) in keywords.iter().zip(placement.positions(keywords.len(), t_max)?).enumerate() {
        if k.is_reserved() {
            return Err(GuidanceError::ReservedKeyword(k));
        }
        if turn >= t_max || offset >= layout.width(side) {
            return Err(GuidanceError::BadPlacement(i));
        }
        let slot = layout.slot(turn, side, offset);
        if last.is_some_and(|l| slot <= l) {
            return Err(GuidanceError::BadPlacement(i));
        }
        last = Some(slot);
        cond.pin(slot, k, PinSource::Word)?;
    }
    Ok(cond)
}

/// Turn and side markers for every turn up to and including `last_turn`,
/// which keeps far-off pins from being stranded behind end padding.
pub fn marker_scaffold(layout: SpanLayout, from_turn: usize, last_turn: usize, source: PinSource) -> InpaintingCondition {
    let mut c = InpaintingCondition::new();
    for t in from_turn..=last_turn {
        // fresh condition, distinct slots: cannot conflict
        let _ = c.pin(layout.marker_slot(t, Side::System), TokenId::SYS, source);
        let _ = c.pin(layout.marker_slot(t, Side::User), TokenId::USR, source);
    }
    c
}
