//! Bilateral price negotiation on a discrete price grid.
//!
//! Prices are grid levels `p00..p20` spanning `[buyer target, listing]`.
//! The planner plays one role; the scripted opponent opens at its own
//! target, restates its standing offer every turn and concedes a fraction
//! of the remaining gap whenever it is pushed:
//!
//! ```text
//! step = clamp(max(1, round(rate * gap)) + noise, 0, gap),  noise ∈ {-1, 0, 1}
//! ```
//!
//! A planner offer within the accept threshold of the standing offer, or an
//! opponent move that meets the planner's offer, closes the deal.

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{turns_of, Assessment, EnvError, Environment, RewardConfig};
use crate::dialogue::{DialogueAction, DialogueState, Role, SpanLayout, Target, TargetKind, Trajectory};
use crate::metrics::{sell_to_list_ratio, EpisodeMetrics};
use crate::seed;
use crate::vocab::{price_token, TokenId, Vocabulary, FILLER, NEGOTIATION_STRATEGIES, PRICE_LEVELS};

pub const LAYOUT: SpanLayout = SpanLayout::new(2, 2);
const TOP: usize = PRICE_LEVELS - 1;
/// Grid steps a price-less counter moves the planner's offer.
const COUNTER_STEP: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OpponentPolicy {
    /// Opening offer as a fraction of the distance from the opponent's
    /// target to its own end of the grid.
    pub opening_fraction: f64,
    pub concession_rate: f64,
    /// Accept threshold as a fraction of the listing price.
    pub accept_threshold: f64,
    /// Adds ±1 grid step of noise to every concession.
    pub noise: bool,
}

impl Default for OpponentPolicy {
    fn default() -> Self {
        Self {
            opening_fraction: 0.0,
            concession_rate: 0.15,
            accept_threshold: 0.05,
            noise: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NegotiationScenario {
    pub id: String,
    pub listing_price: f64,
    pub buyer_target: f64,
    /// Seller target as a grid level.
    pub seller_level: usize,
    pub role: Role,
    pub opponent: OpponentPolicy,
    pub t_max: usize,
    pub gamma: f64,
    pub rewards: RewardConfig,
    /// Strategy subset offered to the planner; all strategies when empty.
    pub strategies: Vec<String>,
}

impl NegotiationScenario {
    pub fn price(&self, level: usize) -> f64 {
        self.buyer_target + level as f64 * (self.listing_price - self.buyer_target) / TOP as f64
    }

    pub fn seller_target(&self) -> f64 {
        self.price(self.seller_level)
    }

    pub fn slr(&self, deal: Option<f64>) -> f64 {
        sell_to_list_ratio(self.role, self.buyer_target, self.seller_target(), deal)
            .expect("scenario validated at construction")
    }

    fn threshold_steps(&self) -> usize {
        let step = (self.listing_price - self.buyer_target) / TOP as f64;
        (self.opponent.accept_threshold * self.listing_price / step + 1e-9).floor() as usize
    }
}

#[derive(Debug, Clone)]
struct Lexicon {
    prices: Vec<TokenId>,
    none: TokenId,
    greet: TokenId,
    inform: TokenId,
    propose: TokenId,
    counter: TokenId,
    counter_noprice: TokenId,
    confirm: TokenId,
    affirm: TokenId,
    deny: TokenId,
    agree: TokenId,
    disagree: TokenId,
}

impl Lexicon {
    fn new(v: &Vocabulary) -> Result<Self, EnvError> {
        let id = |s: &str| v.expect_id(s);
        Ok(Self {
            prices: (0..PRICE_LEVELS).map(|i| id(&price_token(i))).collect::<Result<_, _>>()?,
            none: id(FILLER)?,
            greet: id("greet")?,
            inform: id("inform")?,
            propose: id("propose")?,
            counter: id("counter")?,
            counter_noprice: id("counter-noprice")?,
            confirm: id("confirm")?,
            affirm: id("affirm")?,
            deny: id("deny")?,
            agree: id("agree")?,
            disagree: id("disagree")?,
        })
    }

    fn level(&self, t: TokenId) -> Option<usize> {
        self.prices.iter().position(|&p| p == t)
    }
}

/// What the history says about the standing offers.
#[derive(Debug, Clone, Copy, Default)]
struct View {
    opponent: Option<usize>,
    own: Option<usize>,
    last_user_tag: Option<TokenId>,
}

#[derive(Debug, Clone)]
pub struct NegotiationEnv {
    scenario: NegotiationScenario,
    lex: Lexicon,
    strategies: Vec<TokenId>,
    target: Target,
}

impl NegotiationEnv {
    pub fn new(scenario: NegotiationScenario, vocab: &Vocabulary) -> Result<Self, EnvError> {
        let bad = |m: &str| EnvError::InvalidScenario(m.to_string());
        if !(scenario.buyer_target < scenario.listing_price) {
            return Err(bad("buyer target must lie below the listing price"));
        }
        if scenario.seller_level == 0 || scenario.seller_level > TOP {
            return Err(bad("seller target must lie above the buyer target and within the grid"));
        }
        if scenario.t_max < 2 {
            return Err(bad("t_max must leave at least one planner turn"));
        }
        let lex = Lexicon::new(vocab)?;
        let strategies = if scenario.strategies.is_empty() {
            NEGOTIATION_STRATEGIES.iter().map(|s| vocab.expect_id(s)).collect::<Result<Vec<_>, _>>()?
        } else {
            let mut out = Vec::new();
            for s in &scenario.strategies {
                if !NEGOTIATION_STRATEGIES.contains(&s.as_str()) {
                    return Err(bad(&format!("unknown strategy `{s}`")));
                }
                out.push(vocab.expect_id(s)?);
            }
            out
        };
        let target = Target::new(TargetKind::RewardMax(scenario.role), scenario.gamma)
            .map_err(|e| EnvError::InvalidScenario(e.to_string()))?;
        Ok(Self {
            scenario,
            lex,
            strategies,
            target,
        })
    }

    pub fn scenario(&self) -> &NegotiationScenario {
        &self.scenario
    }

    pub fn price_token(&self, level: usize) -> TokenId {
        self.lex.prices[level]
    }

    pub fn level_of(&self, token: TokenId) -> Option<usize> {
        self.lex.level(token)
    }

    fn own_target(&self) -> usize {
        match self.scenario.role {
            Role::Buyer => 0,
            Role::Seller => self.scenario.seller_level,
        }
    }

    fn opponent_target(&self) -> usize {
        match self.scenario.role {
            Role::Buyer => self.scenario.seller_level,
            Role::Seller => 0,
        }
    }

    /// The planner's favourable end of the grid.
    fn own_extreme(&self) -> usize {
        match self.scenario.role {
            Role::Buyer => 0,
            Role::Seller => TOP,
        }
    }

    fn opening_offer(&self) -> usize {
        let t = self.opponent_target() as f64;
        let f = self.scenario.opponent.opening_fraction;
        match self.scenario.role {
            Role::Buyer => (t + f * (TOP as f64 - t)).round() as usize,
            Role::Seller => (t - f * t).round() as usize,
        }
    }

    /// Moves `from` toward `to` by `step` grid levels without passing it.
    fn toward(from: usize, to: usize, step: usize) -> usize {
        if from > to {
            from - step.min(from - to)
        } else {
            from + step.min(to - from)
        }
    }

    fn view(&self, tokens: &[TokenId]) -> View {
        let mut v = View::default();
        for turn in turns_of(tokens) {
            if let (Some(&tag), Some(&p)) = (turn.system.first(), turn.system.get(1)) {
                if tag == self.lex.propose || tag == self.lex.counter {
                    v.own = self.lex.level(p).or(v.own);
                }
            }
            if let Some(&tag) = turn.user.first() {
                v.last_user_tag = Some(tag);
            }
            if let Some(p) = turn.user.get(1).and_then(|&p| self.lex.level(p)) {
                v.opponent = Some(p);
            }
        }
        v
    }

    /// Whether the opponent takes the planner's offer `q` against its
    /// standing offer `opp`.
    fn acceptable(&self, q: usize, opp: usize) -> bool {
        let thr = self.scenario.threshold_steps();
        match self.scenario.role {
            Role::Buyer => q + thr >= opp,
            Role::Seller => q <= opp + thr,
        }
    }

    /// Possible concessions from `opp` toward `goal`, with probabilities.
    pub fn concessions(&self, opp: usize, goal: usize, rate: f64) -> Vec<(f64, usize)> {
        let gap = opp.abs_diff(goal);
        let base = ((rate * gap as f64).round() as i64).max(1);
        let noise: &[i64] = if self.scenario.opponent.noise { &[-1, 0, 1] } else { &[0] };
        let p = 1.0 / noise.len() as f64;
        noise
            .iter()
            .map(|&n| {
                let step = (base + n).clamp(0, gap as i64) as usize;
                (p, Self::toward(opp, goal, step))
            })
            .collect()
    }

    fn reward_for(&self, deal: Option<usize>) -> f64 {
        match deal {
            Some(level) => {
                let r = &self.scenario.rewards;
                r.success + r.slr_scale * self.scenario.slr(Some(self.scenario.price(level)))
            }
            None => self.scenario.rewards.failure,
        }
    }

    fn span(&self, tag: TokenId, price: Option<usize>) -> Vec<TokenId> {
        vec![tag, price.map_or(self.lex.none, |l| self.lex.prices[l])]
    }
}

impl Environment for NegotiationEnv {
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
        &self.strategies
    }

    fn target(&self) -> &Target {
        &self.target
    }

    fn rewards(&self) -> &RewardConfig {
        &self.scenario.rewards
    }

    fn opening_system(&self) -> Vec<TokenId> {
        self.span(self.lex.greet, None)
    }

    fn legal_actions(&self, state: &DialogueState) -> Vec<TokenId> {
        if super::is_terminal(self, state) || state.turn == 0 {
            return Vec::new();
        }
        let after_confirm = self.view(state.prefix.tokens()).last_user_tag == Some(self.lex.confirm);
        self.strategies
            .iter()
            .copied()
            .filter(|&t| after_confirm || (t != self.lex.affirm && t != self.lex.deny))
            .collect()
    }

    fn realize(&self, state: &DialogueState, tag: TokenId, _sampled: &[TokenId]) -> DialogueAction {
        let v = self.view(state.prefix.tokens());
        let opp = v.opponent.unwrap_or_else(|| self.opening_offer());
        let price = if tag == self.lex.propose {
            Some(self.own_target())
        } else if tag == self.lex.counter {
            let base = v.own.unwrap_or_else(|| self.own_target());
            Some(Self::toward(base, opp, COUNTER_STEP))
        } else if tag == self.lex.agree {
            Some(opp)
        } else {
            None
        };
        DialogueAction::new(tag, vec![price.map_or(self.lex.none, |l| self.lex.prices[l])])
    }

    fn random_action(&self, state: &DialogueState, rng: &mut seed::Rng) -> DialogueAction {
        let legal = self.legal_actions(state);
        let tag = *legal.choose(rng).expect("non-terminal state has legal actions");
        self.realize(state, tag, &[])
    }

    fn expert_action(&self, state: &DialogueState, rng: &mut seed::Rng) -> DialogueAction {
        let legal = self.legal_actions(state);
        let v = self.view(state.prefix.tokens());
        let opp = v.opponent.unwrap_or_else(|| self.opening_offer());
        let own = self.own_target();
        let initial = self.opponent_target().abs_diff(own).max(1);
        let pick = |want: TokenId| {
            if legal.contains(&want) {
                want
            } else {
                legal[0]
            }
        };
        let tag = if v.last_user_tag == Some(self.lex.confirm) && legal.contains(&self.lex.affirm) {
            self.lex.affirm
        } else if opp.abs_diff(own) * 2 <= initial || state.turn + 1 >= self.scenario.t_max {
            pick(self.lex.agree)
        } else if v.own.is_none() {
            pick(self.lex.propose)
        } else if rng.gen_bool(0.2) {
            pick(self.lex.disagree)
        } else {
            pick(self.lex.counter)
        };
        self.realize(state, tag, &[])
    }

    fn user_outcomes(&self, state: &DialogueState, system: &[TokenId]) -> Vec<(f64, Vec<TokenId>)> {
        let v = self.view(state.prefix.tokens());
        let Some(opp) = v.opponent else {
            return vec![(1.0, self.span(self.lex.inform, Some(self.opening_offer())))];
        };
        let tag = system.first().copied().unwrap_or(self.lex.none);
        let offered = system.get(1).and_then(|&p| self.lex.level(p));
        let rate = self.scenario.opponent.concession_rate;
        let push = |goal: usize, rate: f64| -> Vec<(f64, Vec<TokenId>)> {
            if self.acceptable(goal, opp) {
                return vec![(1.0, self.span(self.lex.agree, Some(goal)))];
            }
            self.concessions(opp, goal, rate)
                .into_iter()
                .map(|(p, next)| {
                    let tag = if next == goal { self.lex.agree } else { self.lex.counter };
                    (p, self.span(tag, Some(next)))
                })
                .collect()
        };
        if tag == self.lex.agree {
            vec![(1.0, self.span(self.lex.agree, Some(opp)))]
        } else if (tag == self.lex.propose || tag == self.lex.counter) && offered.is_some() {
            push(offered.unwrap(), rate)
        } else if tag == self.lex.disagree || tag == self.lex.affirm {
            push(v.own.unwrap_or_else(|| self.own_extreme()), rate / 2.0)
        } else if tag == self.lex.counter_noprice {
            vec![(1.0, self.span(self.lex.confirm, Some(opp)))]
        } else {
            vec![(1.0, self.span(self.lex.inform, Some(opp)))]
        }
    }

    fn assess(&self, tokens: &[TokenId], complete: bool) -> Assessment {
        let turns = turns_of(tokens);
        let t_max = self.scenario.t_max;
        let mut last_user_price: Option<usize> = None;
        let mut last_sys_price: Option<usize> = None;
        for (t, turn) in turns.iter().enumerate().take(t_max) {
            let sys_tag = turn.system.first().copied();
            if let Some(p) = turn.system.get(1).and_then(|&p| self.lex.level(p)) {
                last_sys_price = Some(p);
            }
            let deal = if t > 0 && sys_tag == Some(self.lex.agree) {
                Some(last_user_price)
            } else if t > 0 && turn.user.first() == Some(&self.lex.agree) {
                Some(turn.user.get(1).and_then(|&p| self.lex.level(p)).or(last_sys_price))
            } else {
                None
            };
            if let Some(deal) = deal {
                return Assessment {
                    terminal_turn: Some(t),
                    success: deal.is_some(),
                    reward: self.reward_for(deal),
                    deal_price: deal.map(|l| self.scenario.price(l)),
                };
            }
            if let Some(p) = turn.user.get(1).and_then(|&p| self.lex.level(p)) {
                last_user_price = Some(p);
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
        let g = self.target.gamma;
        self.user_outcomes(state, &action.span())
            .into_iter()
            .map(|(p, reply)| {
                let price = reply.get(1).and_then(|&t| self.lex.level(t));
                let value = if action.strategy_tag == self.lex.agree || reply[0] == self.lex.agree {
                    self.reward_for(price)
                } else {
                    g * self.reward_for(price)
                };
                p * value
            })
            .sum()
    }

    fn episode_metrics(&self, _traj: &Trajectory, a: &Assessment) -> EpisodeMetrics {
        EpisodeMetrics {
            slr: Some(self.scenario.slr(a.deal_price)),
            ..Default::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::env_step;

    fn scenario(role: Role) -> NegotiationScenario {
        NegotiationScenario {
            id: "t".into(),
            listing_price: 1000.0,
            buyer_target: 500.0,
            seller_level: 16,
            role,
            opponent: OpponentPolicy::default(),
            t_max: 10,
            gamma: 0.95,
            rewards: RewardConfig::default(),
            strategies: Vec::new(),
        }
    }

    fn env(role: Role) -> (NegotiationEnv, Vocabulary) {
        let v = Vocabulary::standard();
        (NegotiationEnv::new(scenario(role), &v).unwrap(), v)
    }

    fn opened(e: &NegotiationEnv) -> DialogueState {
        let s0 = DialogueState::initial();
        env_step(e, &s0, &DialogueAction::new(TokenId::SYS, vec![]), 0).unwrap().0
    }

    #[test]
    fn grid_and_threshold() {
        let s = scenario(Role::Buyer);
        assert_eq!(s.price(0), 500.0);
        assert_eq!(s.price(20), 1000.0);
        assert_eq!(s.seller_target(), 900.0);
        assert_eq!(s.threshold_steps(), 2);
    }

    #[test]
    fn opening_states_opponent_target() {
        let (e, v) = env(Role::Buyer);
        let s1 = opened(&e);
        assert_eq!(v.render(s1.prefix.tokens()), "<sys> greet none <usr> inform p16");
        let (e, v) = env(Role::Seller);
        let s1 = opened(&e);
        assert_eq!(v.render(s1.prefix.tokens()), "<sys> greet none <usr> inform p00");
    }

    #[test]
    fn agreeing_deals_at_standing_offer() {
        let (e, v) = env(Role::Buyer);
        let s1 = opened(&e);
        let agree = e.realize(&s1, v.id("agree").unwrap(), &[]);
        let (s2, r, done) = env_step(&e, &s1, &agree, 3).unwrap();
        assert!(done && r.terminal);
        let a = e.assess(s2.prefix.tokens(), false);
        assert_eq!(a.deal_price, Some(900.0));
        assert!(a.success);
        assert_eq!(e.scenario().slr(a.deal_price), 0.0);
        assert!((r.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn equal_offers_close_the_deal() {
        let (e, v) = env(Role::Buyer);
        let s1 = opened(&e);
        // offering exactly the standing price is always acceptable
        let sys = vec![v.id("propose").unwrap(), v.id("p16").unwrap()];
        let outs = e.user_outcomes(&s1, &sys);
        assert_eq!(outs, vec![(1.0, vec![v.id("agree").unwrap(), v.id("p16").unwrap()])]);
    }

    /// Noise-free concessions follow `gap_{k+1} = gap_k - max(1, round(0.15 gap_k))`
    /// while the buyer holds at p00.
    #[test]
    fn concession_recurrence_without_noise() {
        let v = Vocabulary::standard();
        let mut sc = scenario(Role::Buyer);
        sc.opponent.noise = false;
        let e = NegotiationEnv::new(sc, &v).unwrap();
        let mut s = opened(&e);
        let propose = v.id("propose").unwrap();
        let mut gap: i64 = 16;
        for seed in 0..9 {
            if e.legal_actions(&s).is_empty() {
                break;
            }
            let a = e.realize(&s, propose, &[]);
            let (next, _, done) = env_step(&e, &s, &a, seed).unwrap();
            let reply = &next.prefix.tokens()[next.prefix.len() - 2..];
            if gap <= 2 {
                assert_eq!(v.token(reply[0]), "agree");
                break;
            }
            gap -= ((0.15 * gap as f64).round() as i64).max(1);
            if gap <= 0 {
                assert_eq!(v.token(reply[0]), "agree");
                break;
            }
            assert_eq!(v.token(reply[1]), price_token(gap as usize), "seed {seed}");
            assert_eq!(done, next.turn == 10);
            s = next;
        }
    }

    #[test]
    fn confirm_gates_affirm_and_deny() {
        let (e, v) = env(Role::Seller);
        let s1 = opened(&e);
        let affirm = v.id("affirm").unwrap();
        assert!(!e.legal_actions(&s1).contains(&affirm));
        let cn = e.realize(&s1, v.id("counter-noprice").unwrap(), &[]);
        let (s2, _, _) = env_step(&e, &s1, &cn, 0).unwrap();
        assert!(e.legal_actions(&s2).contains(&affirm));
        assert!(matches!(
            env_step(&e, &s1, &DialogueAction::new(affirm, vec![v.id("none").unwrap()]), 0),
            Err(EnvError::IllegalAction(_))
        ));
    }

    #[test]
    fn greet_only_episode_times_out() {
        let (e, v) = env(Role::Buyer);
        let mut s = opened(&e);
        let greet = e.realize(&s, v.id("greet").unwrap(), &[]);
        let mut last = None;
        for seed in 1..20 {
            let (next, r, done) = env_step(&e, &s, &greet, seed).unwrap();
            s = next;
            if done {
                last = Some(r);
                break;
            }
        }
        assert_eq!(s.turn, 10);
        assert_eq!(last.unwrap().value, -0.1);
        assert!(!e.assess(s.prefix.tokens(), true).success);
    }

    #[test]
    fn seller_counter_moves_down_toward_buyer() {
        let (e, v) = env(Role::Seller);
        let s1 = opened(&e);
        let c = e.realize(&s1, v.id("counter").unwrap(), &[]);
        assert_eq!(v.render(&c.span()), "counter p14");
        let p = e.realize(&s1, v.id("propose").unwrap(), &[]);
        assert_eq!(v.render(&p.span()), "propose p16");
    }
}
