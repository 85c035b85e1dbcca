//! Ordered-keyword chit-chat: the system must get a list of keywords
//! mentioned, in order, by either side.
//!
//! Spans are `[act, word]`. When the system names a topic word the scripted
//! user brings up the next pending keyword with a fixed probability;
//! otherwise it acknowledges with a distractor topic.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{turns_of, Assessment, EnvError, Environment, RewardConfig};
use crate::dialogue::{DialogueAction, DialogueState, SpanLayout, Target, TargetKind, Trajectory};
use crate::metrics::{keyword_coverage_ratio, keyword_order_distance, EpisodeMetrics};
use crate::seed;
use crate::vocab::{TokenId, Vocabulary, GREETING_WORD, KEYWORD_SYSTEM_ACTS, TOPIC_WORDS};

pub const LAYOUT: SpanLayout = SpanLayout::new(2, 2);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeywordScenario {
    pub id: String,
    pub target_keywords: Vec<String>,
    pub distractors: Vec<String>,
    /// Chance the user raises the next pending keyword when prompted.
    pub mention_probability: f64,
    pub t_max: usize,
    pub gamma: f64,
    pub rewards: RewardConfig,
}

#[derive(Debug, Clone)]
pub struct KeywordEnv {
    scenario: KeywordScenario,
    keywords: Vec<TokenId>,
    distractors: Vec<TokenId>,
    topics: Vec<TokenId>,
    acts: Vec<TokenId>,
    chat: TokenId,
    share: TokenId,
    ack: TokenId,
    hello: TokenId,
    target: Target,
}

impl KeywordEnv {
    pub fn new(scenario: KeywordScenario, vocab: &Vocabulary) -> Result<Self, EnvError> {
        let bad = |m: &str| EnvError::InvalidScenario(m.to_string());
        let ids = |xs: &[String]| xs.iter().map(|s| vocab.expect_id(s)).collect::<Result<Vec<_>, _>>();
        let keywords = ids(&scenario.target_keywords)?;
        let distractors = ids(&scenario.distractors)?;
        if distractors.is_empty() {
            return Err(bad("distractor pool is empty"));
        }
        for (i, k) in keywords.iter().enumerate() {
            if k.is_reserved() || keywords[..i].contains(k) {
                return Err(bad("target keywords must be distinct ordinary tokens"));
            }
        }
        if !(0.0..=1.0).contains(&scenario.mention_probability) {
            return Err(bad("mention probability outside [0, 1]"));
        }
        let target = Target::new(TargetKind::KeywordSequence(keywords.clone()), scenario.gamma)
            .map_err(|e| EnvError::InvalidScenario(e.to_string()))?;
        Ok(Self {
            keywords,
            distractors,
            topics: TOPIC_WORDS.iter().map(|s| vocab.expect_id(s)).collect::<Result<_, _>>()?,
            acts: KEYWORD_SYSTEM_ACTS.iter().map(|s| vocab.expect_id(s)).collect::<Result<_, _>>()?,
            chat: vocab.expect_id("chat")?,
            share: vocab.expect_id("share")?,
            ack: vocab.expect_id("ack")?,
            hello: vocab.expect_id(GREETING_WORD)?,
            target,
            scenario,
        })
    }

    pub fn keywords(&self) -> &[TokenId] {
        &self.keywords
    }

    /// Number of leading keywords already covered in order.
    pub fn progress(&self, tokens: &[TokenId]) -> usize {
        let mut k = 0;
        for &t in tokens {
            if k < self.keywords.len() && t == self.keywords[k] {
                k += 1;
            }
        }
        k
    }

    fn distractor(&self, turn: usize) -> TokenId {
        self.distractors[turn % self.distractors.len()]
    }
}

impl Environment for KeywordEnv {
    fn scenario_id(&self) -> String {
        self.scenario.id.clone()
    }

    fn layout(&self) -> SpanLayout {
        LAYOUT
    }

    fn t_max(&self) -> usize {
        self.scenario.t_max
    }

    fn strategies(&self) -> &[TokenId] {
        &self.acts
    }

    fn target(&self) -> &Target {
        &self.target
    }

    fn rewards(&self) -> &RewardConfig {
        &self.scenario.rewards
    }

    fn opening_system(&self) -> Vec<TokenId> {
        vec![self.chat, self.hello]
    }

    fn legal_actions(&self, state: &DialogueState) -> Vec<TokenId> {
        if state.turn == 0 || super::is_terminal(self, state) {
            return Vec::new();
        }
        self.acts.clone()
    }

    fn realize(&self, _state: &DialogueState, tag: TokenId, sampled: &[TokenId]) -> DialogueAction {
        let word = sampled
            .first()
            .copied()
            .filter(|t| self.topics.contains(t))
            .unwrap_or(self.distractors[0]);
        DialogueAction::new(tag, vec![word])
    }

    fn random_action(&self, state: &DialogueState, rng: &mut seed::Rng) -> DialogueAction {
        let tag = *self.acts.choose(rng).expect("acts are non-empty");
        let word = *self.topics.choose(rng).expect("topics are non-empty");
        self.realize(state, tag, &[word])
    }

    fn expert_action(&self, state: &DialogueState, rng: &mut seed::Rng) -> DialogueAction {
        let k = self.progress(state.prefix.tokens());
        let word = self.keywords.get(k).copied().unwrap_or(self.distractors[0]);
        let tag = *[self.share, self.share, self.chat].choose(rng).expect("non-empty");
        DialogueAction::new(tag, vec![word])
    }

    fn user_outcomes(&self, state: &DialogueState, system: &[TokenId]) -> Vec<(f64, Vec<TokenId>)> {
        let d = vec![self.ack, self.distractor(state.turn)];
        let prompted = system.get(1).is_some_and(|w| self.topics.contains(w));
        let mut seen = state.prefix.tokens().to_vec();
        seen.extend_from_slice(system);
        let pending = self.keywords.get(self.progress(&seen)).copied();
        match pending {
            Some(k) if prompted && self.scenario.mention_probability > 0.0 => {
                let p = self.scenario.mention_probability;
                vec![(p, vec![self.share, k]), (1.0 - p, d)]
            }
            _ => vec![(1.0, d)],
        }
    }

    fn assess(&self, tokens: &[TokenId], complete: bool) -> Assessment {
        let turns = turns_of(tokens);
        let t_max = self.scenario.t_max;
        let mut seen: Vec<TokenId> = Vec::new();
        for (t, turn) in turns.iter().enumerate().take(t_max) {
            seen.extend_from_slice(&turn.system);
            seen.extend_from_slice(&turn.user);
            if self.progress(&seen) == self.keywords.len() {
                return Assessment {
                    terminal_turn: Some(t),
                    success: true,
                    reward: self.scenario.rewards.success,
                    deal_price: None,
                };
            }
        }
        if complete || turns.len() >= t_max {
            return Assessment {
                terminal_turn: Some(t_max - 1),
                success: false,
                reward: self.scenario.rewards.failure,
                deal_price: None,
            };
        }
        Assessment::open()
    }

    fn greedy_score(&self, state: &DialogueState, action: &DialogueAction) -> f64 {
        let before = self.progress(state.prefix.tokens());
        self.user_outcomes(state, &action.span())
            .into_iter()
            .map(|(p, reply)| {
                let mut seen = state.prefix.tokens().to_vec();
                seen.extend(action.span());
                seen.extend(reply);
                p * (self.progress(&seen) - before) as f64
            })
            .sum()
    }

    fn candidate_actions(&self, state: &DialogueState) -> Vec<DialogueAction> {
        let mut words = self.keywords.clone();
        words.push(self.distractors[0]);
        self.legal_actions(state)
            .into_iter()
            .flat_map(|t| words.iter().map(move |&w| DialogueAction::new(t, vec![w])))
            .collect()
    }

    fn episode_metrics(&self, traj: &Trajectory, _a: &Assessment) -> EpisodeMetrics {
        EpisodeMetrics {
            kcr: keyword_coverage_ratio(&self.keywords, traj.tokens()).ok(),
            edit_distance: keyword_order_distance(&self.keywords, traj.tokens()).ok(),
            ..Default::default()
        }
    }
}
