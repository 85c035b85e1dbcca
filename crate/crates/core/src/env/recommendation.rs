//! Target-item recommendation.
//!
//! System spans are `[act, arg, modifier]`, user spans `[act, arg]`. The
//! user accepts a recommendation of the target item with probability
//! `σ(bias + slope * a)`, where `a` counts the profile-aligned genre
//! tokens mentioned so far by either side. Any other item is rejected.

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{turns_of, Assessment, EnvError, Environment, RewardConfig};
use crate::dialogue::{DialogueAction, DialogueState, SpanLayout, Target, TargetKind, Trajectory};
use crate::metrics::EpisodeMetrics;
use crate::seed;
use crate::vocab::{item_token, TokenId, Vocabulary, FILLER, GENRES, ITEM_COUNT, PRAISE_WORDS, RECOMMEND_SYSTEM_ACTS};

pub const LAYOUT: SpanLayout = SpanLayout::new(3, 2);

/// Genre of an item: items cycle through the genre list.
pub fn item_genre(item: usize) -> usize {
    item % GENRES.len()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AcceptanceModel {
    pub bias: f64,
    pub slope: f64,
}

impl Default for AcceptanceModel {
    fn default() -> Self {
        Self { bias: -2.0, slope: 1.2 }
    }
}

impl AcceptanceModel {
    pub fn probability(&self, aligned: usize) -> f64 {
        1.0 / (1.0 + (-(self.bias + self.slope * aligned as f64)).exp())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendationScenario {
    pub id: String,
    /// Index into the item catalogue.
    pub target_item: usize,
    /// Preference weight per genre; the two heaviest genres are aligned.
    pub profile: Vec<f64>,
    pub acceptance: AcceptanceModel,
    pub t_max: usize,
    pub gamma: f64,
    pub rewards: RewardConfig,
}

impl RecommendationScenario {
    /// The two preferred genres, heaviest first; ties to the lower index.
    pub fn aligned_genres(&self) -> [usize; 2] {
        let mut idx: Vec<usize> = (0..self.profile.len()).collect();
        idx.sort_by(|&a, &b| self.profile[b].total_cmp(&self.profile[a]).then(a.cmp(&b)));
        [idx[0], idx[1]]
    }
}

#[derive(Debug, Clone)]
pub struct RecommendationEnv {
    scenario: RecommendationScenario,
    acts: Vec<TokenId>,
    chat: TokenId,
    ask: TokenId,
    recommend: TokenId,
    suggest: TokenId,
    offer: TokenId,
    prefer: TokenId,
    ack: TokenId,
    accept: TokenId,
    reject: TokenId,
    none: TokenId,
    genres: Vec<TokenId>,
    items: Vec<TokenId>,
    praise: Vec<TokenId>,
    aligned: [TokenId; 2],
    target: Target,
}

impl RecommendationEnv {
    pub fn new(scenario: RecommendationScenario, vocab: &Vocabulary) -> Result<Self, EnvError> {
        let bad = |m: &str| EnvError::InvalidScenario(m.to_string());
        if scenario.target_item >= ITEM_COUNT {
            return Err(bad("target item outside the catalogue"));
        }
        if scenario.profile.len() != GENRES.len() || scenario.profile.iter().any(|w| !w.is_finite()) {
            return Err(bad("profile needs one finite weight per genre"));
        }
        let id = |s: &str| vocab.expect_id(s);
        let genres: Vec<TokenId> = GENRES.iter().map(|g| id(g)).collect::<Result<_, _>>()?;
        let items: Vec<TokenId> = (0..ITEM_COUNT).map(|i| id(&item_token(i))).collect::<Result<_, _>>()?;
        let praise: Vec<TokenId> = PRAISE_WORDS.iter().map(|p| id(p)).collect::<Result<_, _>>()?;
        let [a0, a1] = scenario.aligned_genres();
        let item = items[scenario.target_item];
        let (recommend, suggest, offer) = (id("recommend")?, id("suggest")?, id("offer")?);
        let alternatives = vec![
            vec![recommend, item],
            vec![suggest, item],
            vec![recommend, item, praise[0]],
            vec![offer, item],
            vec![suggest, item, praise[1]],
        ];
        let target = Target::new(TargetKind::SemanticState(alternatives), scenario.gamma)
            .map_err(|e| EnvError::InvalidScenario(e.to_string()))?;
        Ok(Self {
            acts: RECOMMEND_SYSTEM_ACTS.iter().map(|a| id(a)).collect::<Result<_, _>>()?,
            chat: id("chat")?,
            ask: id("ask")?,
            recommend,
            suggest,
            offer,
            prefer: id("prefer")?,
            ack: id("ack")?,
            accept: id("accept")?,
            reject: id("reject")?,
            none: id(FILLER)?,
            aligned: [genres[a0], genres[a1]],
            genres,
            items,
            praise,
            target,
            scenario,
        })
    }

    pub fn scenario(&self) -> &RecommendationScenario {
        &self.scenario
    }

    pub fn target_item(&self) -> TokenId {
        self.items[self.scenario.target_item]
    }

    fn is_recommendation(&self, tag: TokenId) -> bool {
        tag == self.recommend || tag == self.suggest || tag == self.offer
    }

    /// Aligned genre tokens mentioned anywhere in `tokens`.
    pub fn aligned_count(&self, tokens: &[TokenId]) -> usize {
        tokens.iter().filter(|t| self.aligned.contains(t)).count()
    }
}

impl Environment for RecommendationEnv {
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
        vec![self.chat, self.none, self.none]
    }

    fn legal_actions(&self, state: &DialogueState) -> Vec<TokenId> {
        if state.turn == 0 || super::is_terminal(self, state) {
            return Vec::new();
        }
        self.acts.clone()
    }

    fn realize(&self, _state: &DialogueState, tag: TokenId, sampled: &[TokenId]) -> DialogueAction {
        let first = sampled.first().copied();
        let args = if self.is_recommendation(tag) {
            let item = first.filter(|t| self.items.contains(t)).unwrap_or(self.items[0]);
            let m = sampled
                .get(1)
                .copied()
                .filter(|t| self.praise.contains(t))
                .unwrap_or(self.none);
            vec![item, m]
        } else if tag == self.chat {
            let g = first.filter(|t| self.genres.contains(t)).unwrap_or(self.genres[0]);
            vec![g, self.none]
        } else {
            vec![self.none, self.none]
        };
        DialogueAction::new(tag, args)
    }

    fn random_action(&self, state: &DialogueState, rng: &mut seed::Rng) -> DialogueAction {
        let tag = *self.acts.choose(rng).expect("acts are non-empty");
        let arg = if self.is_recommendation(tag) {
            *self.items.choose(rng).expect("items are non-empty")
        } else {
            *self.genres.choose(rng).expect("genres are non-empty")
        };
        let m = if rng.gen_bool(0.3) { self.praise[rng.gen_range(0..self.praise.len())] } else { self.none };
        self.realize(state, tag, &[arg, m])
    }

    fn expert_action(&self, state: &DialogueState, rng: &mut seed::Rng) -> DialogueAction {
        let tokens = state.prefix.tokens();
        let aligned = self.aligned_count(tokens);
        if aligned >= 3 || state.turn + 1 >= self.scenario.t_max {
            let tag = *[self.recommend, self.suggest, self.offer].choose(rng).expect("non-empty");
            let m = *[self.none, self.praise[0], self.praise[1]].choose(rng).expect("non-empty");
            return DialogueAction::new(tag, vec![self.target_item(), m]);
        }
        if state.turn == 1 {
            return self.realize(state, self.ask, &[]);
        }
        let g = self.aligned[rng.gen_range(0..2)];
        self.realize(state, self.chat, &[g])
    }

    fn user_outcomes(&self, state: &DialogueState, system: &[TokenId]) -> Vec<(f64, Vec<TokenId>)> {
        let tag = system.first().copied().unwrap_or(self.none);
        let arg = system.get(1).copied().unwrap_or(self.none);
        if self.is_recommendation(tag) {
            if arg == self.target_item() {
                let p = self.scenario.acceptance.probability(self.aligned_count(state.prefix.tokens()));
                return vec![(p, vec![self.accept, arg]), (1.0 - p, vec![self.reject, arg])];
            }
            return vec![(1.0, vec![self.reject, arg])];
        }
        if tag == self.ask {
            return vec![(1.0, vec![self.prefer, self.aligned[state.turn % 2]])];
        }
        vec![(1.0, vec![self.ack, self.none])]
    }

    fn assess(&self, tokens: &[TokenId], complete: bool) -> Assessment {
        let turns = turns_of(tokens);
        let t_max = self.scenario.t_max;
        for (t, turn) in turns.iter().enumerate().take(t_max) {
            if turn.user.first() == Some(&self.accept) {
                let ok = turn.user.get(1) == Some(&self.target_item());
                return Assessment {
                    terminal_turn: Some(t),
                    success: ok,
                    reward: if ok { self.scenario.rewards.success } else { self.scenario.rewards.failure },
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
        let span = action.span();
        let aligned_gain = self.aligned_count(&span) as f64;
        let accept: f64 = self
            .user_outcomes(state, &span)
            .iter()
            .filter(|(_, r)| r[0] == self.accept)
            .map(|(p, _)| p)
            .sum();
        // acceptance now, or a better chance next turn
        accept * self.scenario.rewards.success + 0.1 * aligned_gain
    }

    fn candidate_actions(&self, state: &DialogueState) -> Vec<DialogueAction> {
        let mut out = Vec::new();
        for tag in self.legal_actions(state) {
            let args: &[TokenId] = if self.is_recommendation(tag) {
                &self.items
            } else if tag == self.chat {
                &self.genres
            } else {
                &[]
            };
            if args.is_empty() {
                out.push(self.realize(state, tag, &[]));
            }
            for &a in args {
                out.push(self.realize(state, tag, &[a]));
            }
        }
        out
    }

    fn episode_metrics(&self, _traj: &Trajectory, _a: &Assessment) -> EpisodeMetrics {
        EpisodeMetrics::default()
    }

    fn semantic_pad(&self) -> Option<TokenId> {
        Some(self.none)
    }
}
