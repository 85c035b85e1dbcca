//! Paraphrase conditioning: the same target is expressed by several
//! alternative spans, each yielding its own condition over one shared region.

use serde::{Deserialize, Serialize};

use super::GuidanceError;
use crate::dialogue::{Side, SpanLayout};
use crate::diffusion::{InpaintingCondition, PinSource};
use crate::vocab::TokenId;

/// Where the alternatives are written: a span and a starting offset in it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SemanticRegion {
    pub turn: usize,
    pub side: Side,
    pub offset: usize,
}

impl SemanticRegion {
    /// Slots covered by a region of `width` tokens.
    pub fn slots(&self, layout: SpanLayout, width: usize) -> Vec<usize> {
        (0..width).map(|i| layout.slot(self.turn, self.side, self.offset + i)).collect()
    }
}

/// One condition per alternative. The region is as wide as the longest
/// alternative; shorter ones are filled with `pad` when given, otherwise
/// their trailing slots stay free for the sampler.
pub fn semantic_level_condition(
    alternatives: &[Vec<TokenId>],
    region: SemanticRegion,
    layout: SpanLayout,
    t_max: usize,
    pad: Option<TokenId>,
) -> Result<Vec<InpaintingCondition>, GuidanceError> {
    if alternatives.is_empty() || alternatives.iter().any(Vec::is_empty) {
        return Err(GuidanceError::EmptyAlternatives);
    }
    let width = alternatives.iter().map(Vec::len).max().unwrap_or(0);
    let available = layout.width(region.side).saturating_sub(region.offset);
    if region.turn >= t_max || width > available {
        return Err(GuidanceError::PlacementOverflow {
            needed: width,
            available: if region.turn >= t_max { 0 } else { available },
        });
    }
    let slots = region.slots(layout, width);
    alternatives
        .iter()
        .map(|alt| {
            let mut c = InpaintingCondition::new();
            for (i, &slot) in slots.iter().enumerate() {
                match (alt.get(i), pad) {
                    (Some(&t), _) => c.pin(slot, t, PinSource::Semantic)?,
                    (None, Some(p)) => c.pin(slot, p, PinSource::Semantic)?,
                    (None, None) => {}
                }
            }
            Ok(c)
        })
        .collect()
}
