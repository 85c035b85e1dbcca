//! Dialogue planning by masked discrete diffusion over whole trajectories,
//! with word-level, semantic-level and tree-search guidance, plus scripted
//! environments and metrics to evaluate planners against.

pub mod dialogue;
pub mod diffusion;
pub mod env;
pub mod episode;
pub mod guidance;
pub mod metrics;
pub mod parallel;
pub mod seed;
pub mod vocab;

pub use dialogue::{DialogueAction, DialogueState, Role, Side, SpanLayout, Target, TargetKind, Trajectory};
pub use vocab::{TokenId, Vocabulary};
