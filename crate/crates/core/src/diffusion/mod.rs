//! Masked discrete diffusion over fixed-length trajectory canvases.

pub mod condition;
pub mod denoiser;
pub mod sampler;
pub mod schedule;

use thiserror::Error;

use crate::vocab::TokenId;

pub use condition::{ConditionError, InpaintingCondition, Pin, PinSource};
pub use denoiser::{padded_canvas, DenoiserConfig, DenoiserModel};
pub use sampler::{constrained_distribution, forward_mask, replay_log_score, sample, SampleEvent, SampleOutcome};
pub use schedule::NoiseSchedule;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiffusionError {
    #[error("noise schedule needs at least one step")]
    InvalidSchedule,
    #[error("step {step} outside schedule of {steps} steps")]
    StepOutOfRange { step: usize, steps: usize },
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("invalid denoiser config: {0}")]
    InvalidConfig(&'static str),
    #[error("trajectory {0} is invalid: {1}")]
    InvalidTrajectory(usize, String),
    #[error("trajectory of length {len} does not fit canvas of {canvas_len}")]
    TrajectoryTooLong { len: usize, canvas_len: usize },
    #[error("slot {0} is not masked")]
    SlotNotMasked(usize),
    #[error("canvas has length {got}, model expects {expected}")]
    CanvasLength { got: usize, expected: usize },
    #[error("token {0} is outside the model vocabulary")]
    TokenOutOfVocabulary(TokenId),
    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),
    #[error("checkpoint vocabulary {checkpoint} does not match {vocabulary}")]
    VocabularyMismatch { checkpoint: String, vocabulary: String },
    #[error(transparent)]
    Condition(#[from] ConditionError),
    #[error("markers still malformed after repair")]
    NonconvergentSample,
    #[error("input contains a mask at slot {0}")]
    ContainsMask(usize),
}
