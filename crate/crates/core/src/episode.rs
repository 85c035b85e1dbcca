//! Episode loop and the non-diffusion planners.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dialogue::{DialogueAction, DialogueState, Trajectory};
use crate::env::{step_with_user, EnvError, Environment, ScriptedUser, UserSimulator};
use crate::guidance::{GuidanceError, TraceRecord};
use crate::metrics::{EpisodeMetrics, Outcome};
use crate::seed;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EpisodeError {
    #[error("turn {turn}: {source}")]
    Env { turn: usize, source: EnvError },
    #[error("turn {turn}: planner failed: {source}")]
    Plan { turn: usize, source: GuidanceError },
}

/// A system policy: picks the next action at a state.
pub trait Planner: Sync {
    fn name(&self) -> String;

    fn act(
        &self,
        env: &dyn Environment,
        state: &DialogueState,
        seed: u64,
        trace: &mut Vec<TraceRecord>,
    ) -> Result<DialogueAction, GuidanceError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub scenario_id: String,
    pub seed: u64,
    pub trajectory: Trajectory,
    pub success: bool,
    /// Terminal turn on success, `t_max` on failure.
    pub turns_used: usize,
    pub deal_price: Option<f64>,
    pub final_reward: f64,
    pub metrics: EpisodeMetrics,
    pub trace: Vec<TraceRecord>,
}

impl Outcome for EpisodeResult {
    fn success(&self) -> bool {
        self.success
    }

    fn turns_used(&self) -> usize {
        self.turns_used
    }
}

pub fn planner_seed(seed: u64, turn: usize) -> u64 {
    seed::derive(seed::derive(seed, seed::stream::PLANNER), turn as u64)
}

pub fn user_seed(seed: u64, turn: usize) -> u64 {
    seed::derive(seed::derive(seed, seed::stream::USER), turn as u64)
}

/// Runs one episode against the environment's scripted user.
pub fn run_episode(planner: &dyn Planner, env: &dyn Environment, seed: u64) -> Result<EpisodeResult, EpisodeError> {
    run_episode_with(planner, env, &mut ScriptedUser, seed)
}

/// Turn 0 is the fixed opening; the planner acts from turn 1 until the
/// dialogue terminates or `t_max` turns have been played.
pub fn run_episode_with(
    planner: &dyn Planner,
    env: &dyn Environment,
    user: &mut dyn UserSimulator,
    seed: u64,
) -> Result<EpisodeResult, EpisodeError> {
    let mut trace = Vec::new();
    let opening = DialogueAction::new(env.opening_system()[0], env.opening_system()[1..].to_vec());
    let (mut state, _, mut done) = step_with_user(env, &DialogueState::initial(), &opening, user, user_seed(seed, 0))
        .map_err(|source| EpisodeError::Env { turn: 0, source })?;
    while !done {
        let turn = state.turn;
        let action = planner
            .act(env, &state, planner_seed(seed, turn), &mut trace)
            .map_err(|source| EpisodeError::Plan { turn, source })?;
        let (next, _, terminal) = step_with_user(env, &state, &action, user, user_seed(seed, turn))
            .map_err(|source| EpisodeError::Env { turn, source })?;
        state = next;
        done = terminal;
    }
    let a = env.assess(state.prefix.tokens(), true);
    let metrics = env.episode_metrics(&state.prefix, &a);
    Ok(EpisodeResult {
        scenario_id: env.scenario_id(),
        seed,
        success: a.success,
        turns_used: if a.success { a.terminal_turn.unwrap_or(env.t_max()) } else { env.t_max() },
        deal_price: a.deal_price,
        final_reward: a.reward,
        metrics,
        trajectory: state.prefix,
        trace,
    })
}

/// Uniformly random legal action.
#[derive(Debug, Default, Clone, Copy)]
pub struct RandomPlanner;

impl Planner for RandomPlanner {
    fn name(&self) -> String {
        "random".into()
    }

    fn act(
        &self,
        env: &dyn Environment,
        state: &DialogueState,
        seed: u64,
        _trace: &mut Vec<TraceRecord>,
    ) -> Result<DialogueAction, GuidanceError> {
        if env.legal_actions(state).is_empty() {
            return Err(GuidanceError::NoLegalActions);
        }
        Ok(env.random_action(state, &mut seed::rng(seed)))
    }
}

/// The environment's scripted strong policy.
#[derive(Debug, Default, Clone, Copy)]
pub struct ExpertPlanner;

impl Planner for ExpertPlanner {
    fn name(&self) -> String {
        "expert".into()
    }

    fn act(
        &self,
        env: &dyn Environment,
        state: &DialogueState,
        seed: u64,
        _trace: &mut Vec<TraceRecord>,
    ) -> Result<DialogueAction, GuidanceError> {
        if env.legal_actions(state).is_empty() {
            return Err(GuidanceError::NoLegalActions);
        }
        Ok(env.expert_action(state, &mut seed::rng(seed)))
    }
}

/// One-step lookahead on the scripted user's reply distribution.
#[derive(Debug, Default, Clone, Copy)]
pub struct GreedyPlanner;

impl Planner for GreedyPlanner {
    fn name(&self) -> String {
        "greedy".into()
    }

    fn act(
        &self,
        env: &dyn Environment,
        state: &DialogueState,
        _seed: u64,
        _trace: &mut Vec<TraceRecord>,
    ) -> Result<DialogueAction, GuidanceError> {
        let mut best: Option<(f64, DialogueAction)> = None;
        for a in env.candidate_actions(state) {
            let s = env.greedy_score(state, &a);
            if best.as_ref().map_or(true, |(b, _)| s > *b) {
                best = Some((s, a));
            }
        }
        best.map(|(_, a)| a).ok_or(GuidanceError::NoLegalActions)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::suite::builtin_suites;
    use crate::vocab::Vocabulary;

    #[test]
    fn episodes_replay_exactly() {
        let v = Vocabulary::standard();
        for suite in builtin_suites() {
            let env = suite.environment(11, &v).unwrap();
            for p in [&RandomPlanner as &dyn Planner, &ExpertPlanner, &GreedyPlanner] {
                let a = run_episode(p, env.as_ref(), 11).unwrap();
                let b = run_episode(p, env.as_ref(), 11).unwrap();
                assert_eq!(a, b);
                assert!(a.turns_used >= 1 && a.turns_used <= env.t_max());
                assert!(a.trajectory.turn_count().unwrap() <= env.t_max());
            }
        }
    }

    #[test]
    fn accepting_opponent_closes_at_turn_one() {
        let v = Vocabulary::standard();
        let suite = builtin_suites().into_iter().find(|s| s.id == "trivial-accept").unwrap();
        for seed in 0..10 {
            let env = suite.environment(seed, &v).unwrap();
            let r = run_episode(&ExpertPlanner, env.as_ref(), seed).unwrap();
            assert!(r.success);
            assert_eq!(r.turns_used, 1);
            assert!(r.deal_price.is_some());
        }
    }

    #[test]
    fn deal_price_iff_negotiation_success() {
        let v = Vocabulary::standard();
        let suite = builtin_suites().into_iter().find(|s| s.id == "negotiation-buyer").unwrap();
        for seed in 0..40 {
            let env = suite.environment(seed, &v).unwrap();
            let r = run_episode(&RandomPlanner, env.as_ref(), seed).unwrap();
            assert_eq!(r.deal_price.is_some(), r.success, "seed {seed}");
        }
    }
}
