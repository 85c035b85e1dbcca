//! Test-time guidance: everything here steers the sampler by adding pins to
//! an inpainting condition, by choosing among samples, or by searching over
//! strategy tags with sampled rollouts.

pub mod mbr;
pub mod mcts;
pub mod optimality;
pub mod planner;
pub mod semantic;
pub mod word;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diffusion::{sample, ConditionError, DenoiserModel, DiffusionError, InpaintingCondition, NoiseSchedule, SampleOutcome};
use crate::env::EnvError;
use crate::seed;
use crate::vocab::TokenId;

/// Resampling attempts before a structurally broken sample is an error.
const SAMPLE_ATTEMPTS: u64 = 4;

pub use mbr::{edit_distance_risk, mbr_decode, mean_pairwise_risks, MBRCandidate};
pub use mcts::{backpropagate, plan, search_condition, simulate_rollout, uct_select, SearchConfig, SearchNode, SearchTree};
pub use optimality::{optimality_filter, OptimalityPredicate};
pub use planner::{DiffusionPlanner, GuidanceMode, PlannerConfig};
pub use semantic::{semantic_level_condition, SemanticRegion};
pub use word::{word_level_condition, KeywordPlacement, PlacementSide};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GuidanceError {
    #[error("no legal actions at this state")]
    NoLegalActions,
    #[error("node has no expanded children")]
    NoChildren,
    #[error("{needed} keywords do not fit in {available} turns")]
    PlacementOverflow { needed: usize, available: usize },
    #[error("keyword placement is out of order or off the canvas at keyword {0}")]
    BadPlacement(usize),
    #[error("keyword {0} is a reserved token")]
    ReservedKeyword(TokenId),
    #[error("no alternatives to condition on")]
    EmptyAlternatives,
    #[error("no candidates to decode")]
    EmptyCandidates,
    #[error("search budget must be positive")]
    ZeroBudget,
    #[error("trajectory still contains masks")]
    MaskedTrajectory,
    #[error("{0}")]
    Unsupported(&'static str),
    #[error(transparent)]
    Diffusion(#[from] DiffusionError),
    #[error(transparent)]
    Condition(#[from] ConditionError),
    #[error(transparent)]
    Env(#[from] EnvError),
}

/// One search iteration, as written to run logs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub turn: usize,
    pub iteration: usize,
    /// Strategy tags from the root down to the simulated leaf.
    pub path: Vec<TokenId>,
    /// Discounted return of the simulation, seen from the root.
    pub reward: f64,
    /// Root action values after the update, in legal-action order.
    pub root_q: Vec<f64>,
}

/// Samples under `cond`, drawing again with a derived seed when the result
/// does not parse as a dialogue.
pub fn sample_dialogue(
    model: &DenoiserModel,
    cond: &InpaintingCondition,
    schedule: &NoiseSchedule,
    seed: u64,
) -> Result<SampleOutcome, GuidanceError> {
    for attempt in 0..SAMPLE_ATTEMPTS {
        match sample(model, cond, schedule, seed::derive(seed, attempt)) {
            Err(DiffusionError::NonconvergentSample) => continue,
            other => return Ok(other?),
        }
    }
    Err(DiffusionError::NonconvergentSample.into())
}
