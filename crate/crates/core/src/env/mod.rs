//! Scripted synthetic worlds the planners talk to.
//!
//! An [`Environment`] is one scenario: it fixes the span layout, the target,
//! the legal system actions, the scripted user's response distribution and
//! how a (possibly simulated) trajectory is scored. All methods are pure;
//! randomness enters only through explicit seeds.

pub mod corpus;
pub mod keyword;
pub mod negotiation;
pub mod recommendation;
pub mod suite;

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dialogue::{DialogueAction, DialogueError, DialogueState, RewardSignal, SpanLayout, Target, Trajectory, Turn};
use crate::metrics::EpisodeMetrics;
use crate::seed;
use crate::vocab::{TokenId, VocabError};

pub use corpus::{generate_corpus, CorpusError, CorpusRecord};
pub use keyword::{KeywordEnv, KeywordScenario};
pub use negotiation::{NegotiationEnv, NegotiationScenario, OpponentPolicy};
pub use recommendation::{RecommendationEnv, RecommendationScenario};
pub use suite::{Family, Suite, SuiteError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("action `{0}` is not legal here")]
    IllegalAction(TokenId),
    #[error("episode is already over")]
    Terminal,
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("user script exhausted at turn {0}")]
    ScriptExhausted(usize),
    #[error("user span does not fit the layout at turn {0}")]
    BadUserSpan(usize),
    #[error(transparent)]
    Dialogue(#[from] DialogueError),
    #[error(transparent)]
    Vocab(#[from] VocabError),
}

/// Reward magnitudes. Only terminal steps are rewarded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardConfig {
    /// Reward for reaching the target. Negotiation adds `slr_scale * SLR`.
    pub success: f64,
    pub slr_scale: f64,
    pub failure: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            success: 1.0,
            slr_scale: 1.0,
            failure: -0.1,
        }
    }
}

/// Outcome of scoring a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Assessment {
    /// Turn at which the dialogue ended by success or failure, if it did.
    pub terminal_turn: Option<usize>,
    pub success: bool,
    /// Terminal reward, carried by `terminal_turn`.
    pub reward: f64,
    /// Agreed price in currency units (negotiation only).
    pub deal_price: Option<f64>,
}

impl Assessment {
    pub fn open() -> Self {
        Self {
            terminal_turn: None,
            success: false,
            reward: 0.0,
            deal_price: None,
        }
    }

    /// Reward at each turn `0..t_max`; zero everywhere but the terminal turn.
    pub fn rewards_by_turn(&self, t_max: usize) -> Vec<f64> {
        let mut r = vec![0.0; t_max];
        if let Some(t) = self.terminal_turn {
            r[t.min(t_max - 1)] = self.reward;
        }
        r
    }
}

pub trait Environment: Send + Sync {
    fn scenario_id(&self) -> String;
    fn layout(&self) -> SpanLayout;
    fn t_max(&self) -> usize;
    /// Strategy tags the system may lead a span with.
    fn strategies(&self) -> &[TokenId];
    fn target(&self) -> &Target;
    fn rewards(&self) -> &RewardConfig;
    /// Fixed system span of turn 0.
    fn opening_system(&self) -> Vec<TokenId>;
    /// Legal strategy tags at `state`, in strategy order. Empty once terminal.
    fn legal_actions(&self, state: &DialogueState) -> Vec<TokenId>;
    /// Completes a tag into a layout-conforming action, keeping sampled
    /// arguments where they make sense.
    fn realize(&self, state: &DialogueState, tag: TokenId, sampled: &[TokenId]) -> DialogueAction;
    fn random_action(&self, state: &DialogueState, rng: &mut seed::Rng) -> DialogueAction;
    /// Scripted strong policy, used for corpus generation.
    fn expert_action(&self, state: &DialogueState, rng: &mut seed::Rng) -> DialogueAction;
    /// Distribution of the scripted user's reply to `system` at `state`.
    fn user_outcomes(&self, state: &DialogueState, system: &[TokenId]) -> Vec<(f64, Vec<TokenId>)>;
    /// Scores a trajectory. With `complete`, a dialogue that never
    /// terminated counts as a failure at the last turn.
    fn assess(&self, tokens: &[TokenId], complete: bool) -> Assessment;
    /// One-step lookahead value used by the greedy baseline.
    fn greedy_score(&self, state: &DialogueState, action: &DialogueAction) -> f64;
    fn episode_metrics(&self, traj: &Trajectory, assessment: &Assessment) -> EpisodeMetrics;

    /// Actions the greedy baseline chooses among.
    fn candidate_actions(&self, state: &DialogueState) -> Vec<DialogueAction> {
        self.legal_actions(state)
            .into_iter()
            .map(|t| self.realize(state, t, &[]))
            .collect()
    }

    /// Filler used to pad shorter semantic alternatives, if the layout has one.
    fn semantic_pad(&self) -> Option<TokenId> {
        None
    }
}

/// Turns of a trajectory, tolerating a trailing partial turn.
pub fn turns_of(tokens: &[TokenId]) -> Vec<Turn> {
    let mut out: Vec<Turn> = Vec::new();
    let mut side_user = false;
    for &t in tokens {
        match t {
            TokenId::SYS => {
                out.push(Turn::new(Vec::new(), Vec::new()));
                side_user = false;
            }
            TokenId::USR => side_user = true,
            TokenId::END | TokenId::MASK => break,
            tok => {
                if let Some(turn) = out.last_mut() {
                    if side_user {
                        turn.user.push(tok);
                    } else {
                        turn.system.push(tok);
                    }
                }
            }
        }
    }
    out
}

pub fn is_terminal(env: &dyn Environment, state: &DialogueState) -> bool {
    state.turn >= env.t_max() || env.assess(state.prefix.tokens(), false).terminal_turn.is_some()
}

/// Draws one reply from a response distribution with a dedicated generator.
pub fn draw_outcome(outcomes: &[(f64, Vec<TokenId>)], seed: u64) -> Vec<TokenId> {
    let u: f64 = seed::rng(seed).gen();
    let mut acc = 0.0;
    for (p, span) in outcomes {
        acc += p;
        if u < acc {
            return span.clone();
        }
    }
    outcomes.last().map(|(_, s)| s.clone()).unwrap_or_default()
}

/// Who plays the user side of an episode.
pub trait UserSimulator {
    fn respond(
        &mut self,
        env: &dyn Environment,
        state: &DialogueState,
        system: &[TokenId],
        seed: u64,
    ) -> Result<Vec<TokenId>, EnvError>;
}

/// The environment's own scripted user.
#[derive(Debug, Default, Clone, Copy)]
pub struct ScriptedUser;

impl UserSimulator for ScriptedUser {
    fn respond(
        &mut self,
        env: &dyn Environment,
        state: &DialogueState,
        system: &[TokenId],
        seed: u64,
    ) -> Result<Vec<TokenId>, EnvError> {
        Ok(draw_outcome(&env.user_outcomes(state, system), seed))
    }
}

/// Replays a fixed list of user spans in order.
#[derive(Debug, Clone)]
pub struct ReplayUser {
    spans: Vec<Vec<TokenId>>,
    next: usize,
}

impl ReplayUser {
    pub fn new(spans: Vec<Vec<TokenId>>) -> Self {
        Self { spans, next: 0 }
    }
}

impl UserSimulator for ReplayUser {
    fn respond(
        &mut self,
        env: &dyn Environment,
        state: &DialogueState,
        _system: &[TokenId],
        _seed: u64,
    ) -> Result<Vec<TokenId>, EnvError> {
        let span = self
            .spans
            .get(self.next)
            .cloned()
            .ok_or(EnvError::ScriptExhausted(state.turn))?;
        self.next += 1;
        check_user_span(env, state.turn, &span)?;
        Ok(span)
    }
}

/// Rejects user spans of the wrong width or containing reserved tokens.
pub fn check_user_span(env: &dyn Environment, turn: usize, span: &[TokenId]) -> Result<(), EnvError> {
    if span.len() != env.layout().user_width || span.iter().any(|t| t.is_reserved()) {
        return Err(EnvError::BadUserSpan(turn));
    }
    Ok(())
}

/// One transition: the system acts, the scripted user replies.
pub fn env_step(
    env: &dyn Environment,
    state: &DialogueState,
    action: &DialogueAction,
    seed: u64,
) -> Result<(DialogueState, RewardSignal, bool), EnvError> {
    step_with_user(env, state, action, &mut ScriptedUser, seed)
}

pub fn step_with_user(
    env: &dyn Environment,
    state: &DialogueState,
    action: &DialogueAction,
    user: &mut dyn UserSimulator,
    seed: u64,
) -> Result<(DialogueState, RewardSignal, bool), EnvError> {
    let system = if state.turn == 0 {
        env.opening_system()
    } else {
        if is_terminal(env, state) {
            return Err(EnvError::Terminal);
        }
        if !env.legal_actions(state).contains(&action.strategy_tag) {
            return Err(EnvError::IllegalAction(action.strategy_tag));
        }
        action.span()
    };
    let reply = user.respond(env, state, &system, seed)?;
    let next = state.advance(&system, &reply)?;
    let last = next.turn >= env.t_max();
    let a = env.assess(next.prefix.tokens(), last);
    let terminal = a.terminal_turn.is_some();
    let reward = if terminal { RewardSignal::terminal(a.reward) } else { RewardSignal::none() };
    Ok((next, reward, terminal))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn outcome_draw_respects_support() {
        let outs = vec![(0.0, vec![TokenId(9)]), (1.0, vec![TokenId(5)])];
        for s in 0..50 {
            assert_eq!(draw_outcome(&outs, s), vec![TokenId(5)]);
        }
    }

    #[test]
    fn partial_turns_parse() {
        let toks = [TokenId::SYS, TokenId(5), TokenId::USR, TokenId(6), TokenId::SYS, TokenId(7)];
        let turns = turns_of(&toks);
        assert_eq!(turns.len(), 2);
        assert_eq!(turns[1].system, vec![TokenId(7)]);
        assert!(turns[1].user.is_empty());
    }

    #[test]
    fn rewards_land_on_terminal_turn() {
        let a = Assessment {
            terminal_turn: Some(3),
            success: true,
            reward: 2.0,
            deal_price: None,
        };
        assert_eq!(a.rewards_by_turn(5), vec![0.0, 0.0, 0.0, 2.0, 0.0]);
        assert_eq!(Assessment::open().rewards_by_turn(2), vec![0.0, 0.0]);
    }
}
