//! Declarative scenario suites. A suite fixes an environment family and its
//! parameter ranges; each episode seed draws one concrete scenario.

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::keyword::{KeywordEnv, KeywordScenario};
use super::negotiation::{NegotiationEnv, NegotiationScenario, OpponentPolicy};
use super::recommendation::{AcceptanceModel, RecommendationEnv, RecommendationScenario};
use super::{EnvError, Environment, RewardConfig};
use crate::dialogue::{Role, SpanLayout, DEFAULT_GAMMA, DEFAULT_T_MAX};
use crate::seed;
use crate::vocab::{Vocabulary, GENRES, ITEM_COUNT, PRICE_LEVELS, TOPIC_WORDS};

#[derive(Debug, Error)]
pub enum SuiteError {
    #[error("unknown suite `{0}`")]
    Unknown(String),
    #[error("suite `{0}` must configure exactly one environment family")]
    Family(String),
    #[error("suite `{id}`: {msg}")]
    Invalid { id: String, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Negotiation,
    Keyword,
    Recommendation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NegotiationParams {
    pub role: Role,
    /// Listing prices are drawn uniformly from this range, in steps of 10.
    pub listing_range: [f64; 2],
    /// Buyer target as a fraction of the listing price.
    pub buyer_fraction: f64,
    /// Inclusive range of seller target grid levels.
    pub seller_levels: [usize; 2],
    pub opponent: OpponentPolicy,
    pub strategies: Vec<String>,
}

impl Default for NegotiationParams {
    fn default() -> Self {
        Self {
            role: Role::Buyer,
            listing_range: [200.0, 1000.0],
            buyer_fraction: 0.5,
            seller_levels: [14, 18],
            opponent: OpponentPolicy::default(),
            strategies: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KeywordParams {
    pub keywords: usize,
    pub distractors: usize,
    pub mention_probability: f64,
}

impl Default for KeywordParams {
    fn default() -> Self {
        Self {
            keywords: 5,
            distractors: 6,
            mention_probability: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RecommendationParams {
    pub acceptance: AcceptanceModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Suite {
    pub id: String,
    #[serde(default = "default_t_max")]
    pub t_max: usize,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default)]
    pub rewards: RewardConfig,
    #[serde(default)]
    pub negotiation: Option<NegotiationParams>,
    #[serde(default)]
    pub keyword: Option<KeywordParams>,
    #[serde(default)]
    pub recommendation: Option<RecommendationParams>,
}

fn default_t_max() -> usize {
    DEFAULT_T_MAX
}

fn default_gamma() -> f64 {
    DEFAULT_GAMMA
}

impl Suite {
    pub fn negotiation(id: &str, params: NegotiationParams) -> Self {
        Self {
            id: id.to_string(),
            t_max: DEFAULT_T_MAX,
            gamma: DEFAULT_GAMMA,
            rewards: RewardConfig::default(),
            negotiation: Some(params),
            keyword: None,
            recommendation: None,
        }
    }

    pub fn keyword(id: &str, params: KeywordParams) -> Self {
        Self {
            keyword: Some(params),
            negotiation: None,
            ..Self::negotiation(id, NegotiationParams::default())
        }
    }

    pub fn recommendation(id: &str, params: RecommendationParams) -> Self {
        Self {
            recommendation: Some(params),
            negotiation: None,
            ..Self::negotiation(id, NegotiationParams::default())
        }
    }

    pub fn family(&self) -> Result<Family, SuiteError> {
        match (&self.negotiation, &self.keyword, &self.recommendation) {
            (Some(_), None, None) => Ok(Family::Negotiation),
            (None, Some(_), None) => Ok(Family::Keyword),
            (None, None, Some(_)) => Ok(Family::Recommendation),
            _ => Err(SuiteError::Family(self.id.clone())),
        }
    }

    pub fn layout(&self) -> Result<SpanLayout, SuiteError> {
        Ok(match self.family()? {
            Family::Negotiation => super::negotiation::LAYOUT,
            Family::Keyword => super::keyword::LAYOUT,
            Family::Recommendation => super::recommendation::LAYOUT,
        })
    }

    /// Canvas length a denoiser for this suite must use.
    pub fn canvas_len(&self) -> Result<usize, SuiteError> {
        Ok(self.layout()?.canvas_len(self.t_max))
    }

    pub fn validate(&self) -> Result<(), SuiteError> {
        let bad = |msg: &str| SuiteError::Invalid {
            id: self.id.clone(),
            msg: msg.to_string(),
        };
        if self.t_max < 2 {
            return Err(bad("t_max must be at least 2"));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(bad("gamma must lie in (0, 1)"));
        }
        if self.canvas_len()? > crate::dialogue::CAPACITY {
            return Err(bad("t_max does not fit the trajectory capacity"));
        }
        if let Some(n) = &self.negotiation {
            let [lo, hi] = n.seller_levels;
            if lo == 0 || lo > hi || hi >= PRICE_LEVELS {
                return Err(bad("seller_levels must satisfy 0 < lo <= hi <= 20"));
            }
            if !(n.listing_range[0] > 0.0 && n.listing_range[0] <= n.listing_range[1]) {
                return Err(bad("listing_range must be positive and ordered"));
            }
            if !(n.buyer_fraction > 0.0 && n.buyer_fraction < 1.0) {
                return Err(bad("buyer_fraction must lie in (0, 1)"));
            }
        }
        if let Some(k) = &self.keyword {
            if k.keywords == 0 || k.distractors == 0 || k.keywords + k.distractors > TOPIC_WORDS.len() {
                return Err(bad("keyword and distractor counts must fit the topic list"));
            }
        }
        // building one scenario surfaces everything else
        self.environment(0, &Vocabulary::standard())
            .map(|_| ())
            .map_err(|e| bad(&e.to_string()))
    }

    /// Concrete scenario for an episode seed.
    pub fn environment(&self, seed: u64, vocab: &Vocabulary) -> Result<Box<dyn Environment>, EnvError> {
        let mut rng = seed::rng(seed::derive(seed, seed::stream::SCENARIO));
        let id = format!("{}#{seed}", self.id);
        match self.family().map_err(|e| EnvError::InvalidScenario(e.to_string()))? {
            Family::Negotiation => {
                let p = self.negotiation.as_ref().expect("family checked");
                let steps = ((p.listing_range[1] - p.listing_range[0]) / 10.0).floor() as u64;
                let listing = p.listing_range[0] + 10.0 * rng.gen_range(0..=steps) as f64;
                let sc = NegotiationScenario {
                    id,
                    listing_price: listing,
                    buyer_target: (listing * p.buyer_fraction).round(),
                    seller_level: rng.gen_range(p.seller_levels[0]..=p.seller_levels[1]),
                    role: p.role,
                    opponent: p.opponent,
                    t_max: self.t_max,
                    gamma: self.gamma,
                    rewards: self.rewards,
                    strategies: p.strategies.clone(),
                };
                Ok(Box::new(NegotiationEnv::new(sc, vocab)?))
            }
            Family::Keyword => {
                let p = self.keyword.as_ref().expect("family checked");
                let mut words: Vec<&str> = TOPIC_WORDS.to_vec();
                words.shuffle(&mut rng);
                let sc = KeywordScenario {
                    id,
                    target_keywords: words[..p.keywords].iter().map(|s| s.to_string()).collect(),
                    distractors: words[p.keywords..p.keywords + p.distractors]
                        .iter()
                        .map(|s| s.to_string())
                        .collect(),
                    mention_probability: p.mention_probability,
                    t_max: self.t_max,
                    gamma: self.gamma,
                    rewards: self.rewards,
                };
                Ok(Box::new(KeywordEnv::new(sc, vocab)?))
            }
            Family::Recommendation => {
                let p = self.recommendation.as_ref().expect("family checked");
                let profile: Vec<f64> = (0..GENRES.len()).map(|_| rng.gen::<f64>()).collect();
                let sc = RecommendationScenario {
                    id,
                    target_item: rng.gen_range(0..ITEM_COUNT),
                    profile,
                    acceptance: p.acceptance,
                    t_max: self.t_max,
                    gamma: self.gamma,
                    rewards: self.rewards,
                };
                Ok(Box::new(RecommendationEnv::new(sc, vocab)?))
            }
        }
    }
}

pub fn find_suite<'a>(suites: &'a [Suite], id: &str) -> Result<&'a Suite, SuiteError> {
    suites
        .iter()
        .find(|s| s.id == id)
        .ok_or_else(|| SuiteError::Unknown(id.to_string()))
}

/// The built-in suites, matching the checked-in suite file.
pub fn builtin_suites() -> Vec<Suite> {
    // price matters as much as closing at all
    let priced = RewardConfig {
        slr_scale: 16.0,
        ..RewardConfig::default()
    };
    vec![
        Suite {
            rewards: priced,
            ..Suite::negotiation("negotiation-buyer", NegotiationParams::default())
        },
        Suite {
            rewards: priced,
            ..Suite::negotiation(
                "negotiation-seller",
                NegotiationParams {
                    role: Role::Seller,
                    ..NegotiationParams::default()
                },
            )
        },
        // three planner turns, five actions, an opponent that takes any offer
        // within half the listing price
        Suite {
            t_max: 4,
            ..Suite::negotiation(
                "negotiation-mini",
                NegotiationParams {
                    strategies: ["propose", "inquire", "agree", "greet", "inform"]
                        .map(String::from)
                        .to_vec(),
                    opponent: OpponentPolicy {
                        accept_threshold: 0.5,
                        ..OpponentPolicy::default()
                    },
                    ..NegotiationParams::default()
                },
            )
        },
        Suite::keyword("keyword-chain", KeywordParams::default()),
        Suite::recommendation("recommendation", RecommendationParams::default()),
        Suite::negotiation(
            "trivial-accept",
            NegotiationParams {
                opponent: OpponentPolicy {
                    accept_threshold: 1.0,
                    ..OpponentPolicy::default()
                },
                ..NegotiationParams::default()
            },
        ),
    ]
}
