//! Target predicates: does a trajectory contain a step that achieves the
//! target?

use super::GuidanceError;
use crate::dialogue::{Target, TargetKind, Trajectory};
use crate::env::turns_of;
use crate::vocab::{TokenId, Vocabulary};

#[derive(Debug, Clone, PartialEq)]
pub struct OptimalityPredicate {
    target: Target,
    deal_tag: Option<TokenId>,
}

impl OptimalityPredicate {
    /// Reward targets count a closed deal (an `agree` span by either side) as
    /// achieved.
    pub fn new(target: Target, vocab: &Vocabulary) -> Self {
        Self {
            target,
            deal_tag: vocab.id("agree"),
        }
    }

    pub fn target(&self) -> &Target {
        &self.target
    }

    pub fn evaluate(&self, traj: &Trajectory) -> bool {
        let tokens = traj.tokens();
        match &self.target.kind {
            TargetKind::KeywordSequence(words) => is_subsequence(words, tokens),
            TargetKind::SemanticState(alts) => turns_of(tokens)
                .iter()
                .any(|turn| alts.iter().any(|a| turn.system.starts_with(a))),
            TargetKind::RewardMax(_) => {
                let Some(agree) = self.deal_tag else { return false };
                turns_of(tokens)
                    .iter()
                    .skip(1)
                    .any(|turn| turn.system.first() == Some(&agree) || turn.user.first() == Some(&agree))
            }
        }
    }
}

fn is_subsequence(needle: &[TokenId], hay: &[TokenId]) -> bool {
    let mut it = needle.iter().peekable();
    for t in hay {
        if it.peek() == Some(&t) {
            it.next();
        }
    }
    it.peek().is_none()
}

/// Checks a completed trajectory against the predicate.
pub fn optimality_filter(traj: &Trajectory, pred: &OptimalityPredicate) -> Result<bool, GuidanceError> {
    if traj.contains_mask() {
        return Err(GuidanceError::MaskedTrajectory);
    }
    Ok(pred.evaluate(traj))
}
