//! The diffusion planner: samples a whole future dialogue under the chosen
//! guidance and executes the system span of the current turn.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::mbr::{edit_distance_risk, mbr_decode, MBRCandidate};
use super::mcts::{plan, search_condition, SearchConfig};
use super::semantic::{semantic_level_condition, SemanticRegion};
use super::word::{marker_scaffold, word_level_condition, KeywordPlacement};
use super::{sample_dialogue, GuidanceError, TraceRecord};
use crate::dialogue::{DialogueAction, DialogueState, Side, TargetKind};
use crate::diffusion::{DenoiserModel, DiffusionError, InpaintingCondition, NoiseSchedule, PinSource, SampleOutcome};
use crate::env::Environment;
use crate::episode::Planner;
use crate::seed;
use crate::vocab::TokenId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GuidanceMode {
    #[serde(rename = "none")]
    None,
    #[serde(rename = "word")]
    Word,
    #[serde(rename = "semantic")]
    Semantic,
    #[serde(rename = "search")]
    Search,
    #[serde(rename = "word+search")]
    WordSearch,
}

impl GuidanceMode {
    pub const ALL: [GuidanceMode; 5] = [
        GuidanceMode::None,
        GuidanceMode::Word,
        GuidanceMode::Semantic,
        GuidanceMode::Search,
        GuidanceMode::WordSearch,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            GuidanceMode::None => "none",
            GuidanceMode::Word => "word",
            GuidanceMode::Semantic => "semantic",
            GuidanceMode::Search => "search",
            GuidanceMode::WordSearch => "word+search",
        }
    }

    pub fn uses_words(self) -> bool {
        matches!(self, GuidanceMode::Word | GuidanceMode::WordSearch)
    }

    pub fn uses_search(self) -> bool {
        matches!(self, GuidanceMode::Search | GuidanceMode::WordSearch)
    }
}

impl fmt::Display for GuidanceMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GuidanceMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown guidance mode `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlannerConfig {
    pub mode: GuidanceMode,
    /// Denoising steps `N`.
    pub steps: usize,
    pub search: SearchConfig,
    /// Earliest turn semantic alternatives are written into.
    pub semantic_turn: usize,
    pub placement: KeywordPlacement,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            mode: GuidanceMode::None,
            steps: crate::diffusion::schedule::DEFAULT_STEPS,
            search: SearchConfig::default(),
            semantic_turn: 4,
            placement: KeywordPlacement::default(),
        }
    }
}

pub struct DiffusionPlanner<'m> {
    model: &'m DenoiserModel,
    config: PlannerConfig,
    schedule: NoiseSchedule,
}

impl<'m> DiffusionPlanner<'m> {
    pub fn new(model: &'m DenoiserModel, config: PlannerConfig) -> Result<Self, GuidanceError> {
        if config.mode.uses_search() && config.search.budget == 0 {
            return Err(GuidanceError::ZeroBudget);
        }
        let schedule = NoiseSchedule::new(config.steps)?;
        Ok(Self {
            model,
            config,
            schedule,
        })
    }

    pub fn config(&self) -> &PlannerConfig {
        &self.config
    }

    /// The condition a full plan is sampled under at `state`: history, the
    /// current turn's markers and any keyword pins still ahead.
    pub fn plan_condition(&self, env: &dyn Environment, state: &DialogueState) -> Result<InpaintingCondition, GuidanceError> {
        let layout = env.layout();
        let base = search_condition(&state.prefix, layout, state.turn, None)?;
        if !self.config.mode.uses_words() {
            return Ok(base);
        }
        Ok(base.merged(&self.future_word_pins(env, state)?)?)
    }

    fn future_word_pins(&self, env: &dyn Environment, state: &DialogueState) -> Result<InpaintingCondition, GuidanceError> {
        let TargetKind::KeywordSequence(words) = &env.target().kind else {
            return Err(GuidanceError::Unsupported("word guidance needs a keyword target"));
        };
        let layout = env.layout();
        let all = word_level_condition(words, &self.config.placement, layout, env.t_max())?;
        let floor = layout.turn_start(state.turn);
        let mut out = InpaintingCondition::new();
        let mut last_turn = state.turn;
        for (slot, pin) in all.iter().filter(|(s, _)| *s >= floor) {
            out.pin(slot, pin.token, pin.source)?;
            last_turn = last_turn.max(slot / layout.turn_width());
        }
        Ok(out.merged(&marker_scaffold(layout, state.turn, last_turn, PinSource::Word))?)
    }

    fn draw(&self, cond: &InpaintingCondition, seed: u64) -> Result<SampleOutcome, GuidanceError> {
        sample_dialogue(self.model, cond, &self.schedule, seed)
    }

    fn semantic_plan(
        &self,
        env: &dyn Environment,
        state: &DialogueState,
        base: &InpaintingCondition,
        seed: u64,
    ) -> Result<SampleOutcome, GuidanceError> {
        let TargetKind::SemanticState(alts) = &env.target().kind else {
            return Err(GuidanceError::Unsupported("semantic guidance needs a semantic target"));
        };
        let layout = env.layout();
        let region = SemanticRegion {
            turn: self.config.semantic_turn.clamp(state.turn, env.t_max() - 1),
            side: Side::System,
            offset: 0,
        };
        let conds = semantic_level_condition(alts, region, layout, env.t_max(), env.semantic_pad())?;
        let scaffold = marker_scaffold(layout, state.turn, region.turn, PinSource::Semantic);
        let mut outcomes = Vec::with_capacity(conds.len());
        for (i, c) in conds.iter().enumerate() {
            let cond = base.merged(&scaffold)?.merged(c)?;
            outcomes.push(self.draw(&cond, seed::derive(seed, i as u64))?);
        }
        let cands: Vec<MBRCandidate> = outcomes
            .iter()
            .enumerate()
            .map(|(i, o)| MBRCandidate::new(o.trajectory.clone(), i))
            .collect();
        let (best, _) = mbr_decode(&cands, edit_distance_risk)?;
        Ok(outcomes.swap_remove(best))
    }

    /// Picks a legal tag for the sampled span, falling back to the most
    /// probable legal tag under the denoiser when the sample is illegal.
    fn legal_tag(&self, canvas: &[TokenId], slot: usize, legal: &[TokenId]) -> Result<TokenId, GuidanceError> {
        if legal.contains(&canvas[slot]) {
            return Ok(canvas[slot]);
        }
        let mut masked = canvas.to_vec();
        masked[slot] = TokenId::MASK;
        let p = self.model.predict(&masked, slot)?;
        let mut best = legal[0];
        for &t in &legal[1..] {
            if p[t.index()] > p[best.index()] {
                best = t;
            }
        }
        Ok(best)
    }

    /// Samples a full plan for the rest of the dialogue at `state`. The
    /// system span of the current turn in it is what `act` executes.
    pub fn draft(
        &self,
        env: &dyn Environment,
        state: &DialogueState,
        seed: u64,
        trace: &mut Vec<TraceRecord>,
    ) -> Result<SampleOutcome, GuidanceError> {
        if env.legal_actions(state).is_empty() {
            return Err(GuidanceError::NoLegalActions);
        }
        let layout = env.layout();
        let expected = layout.canvas_len(env.t_max());
        if self.model.canvas_len() != expected {
            return Err(DiffusionError::CanvasLength {
                got: self.model.canvas_len(),
                expected,
            }
            .into());
        }
        let mut cond = self.plan_condition(env, state)?;
        let sample_seed = seed::derive(seed, seed::stream::SAMPLE);
        match self.config.mode {
            GuidanceMode::Semantic => self.semantic_plan(env, state, &cond, sample_seed),
            m if m.uses_search() => {
                let extra = if m.uses_words() {
                    self.future_word_pins(env, state)?
                } else {
                    InpaintingCondition::new()
                };
                let (tag, _) = plan(self.model, env, state, &extra, &self.config.search, &self.schedule, seed, trace)?;
                cond.pin(layout.slot(state.turn, Side::System, 0), tag, PinSource::Search)?;
                self.draw(&cond, sample_seed)
            }
            _ => self.draw(&cond, sample_seed),
        }
    }

    /// The action a drafted plan prescribes at `state`.
    pub fn commit(&self, env: &dyn Environment, state: &DialogueState, outcome: &SampleOutcome) -> Result<DialogueAction, GuidanceError> {
        let legal = env.legal_actions(state);
        if legal.is_empty() {
            return Err(GuidanceError::NoLegalActions);
        }
        let layout = env.layout();
        let tag_slot = layout.slot(state.turn, Side::System, 0);
        let span = layout
            .span(&outcome.canvas, state.turn, Side::System)
            .expect("current turn lies inside the canvas");
        let tag = self.legal_tag(&outcome.canvas, tag_slot, &legal)?;
        Ok(env.realize(state, tag, &span[1..]))
    }
}

impl Planner for DiffusionPlanner<'_> {
    fn name(&self) -> String {
        format!("diffusion-{}", self.config.mode)
    }

    fn act(
        &self,
        env: &dyn Environment,
        state: &DialogueState,
        seed: u64,
        trace: &mut Vec<TraceRecord>,
    ) -> Result<DialogueAction, GuidanceError> {
        let outcome = self.draft(env, state, seed, trace)?;
        self.commit(env, state, &outcome)
    }
}
