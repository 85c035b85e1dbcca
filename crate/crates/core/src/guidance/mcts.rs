//! Tree search over strategy tags. Each tree edge is a tag; a leaf is
//! evaluated by pinning the history and the tag, letting the denoiser
//! complete the rest of the dialogue, and scoring the completion with the
//! environment's reward.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{sample_dialogue, GuidanceError, TraceRecord};
use crate::dialogue::{state_at, DialogueState, Side, SpanLayout, Trajectory};
use crate::diffusion::{DenoiserModel, InpaintingCondition, NoiseSchedule, PinSource};
use crate::env::{is_terminal, Assessment, Environment};
use crate::seed;
use crate::vocab::TokenId;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchConfig {
    /// Simulations per decision.
    pub budget: usize,
    /// UCT exploration weight.
    pub exploration: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            budget: 10,
            exploration: 1.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchNode {
    pub state: DialogueState,
    /// Legal strategy tags; edges are indexed by position in this list.
    pub actions: Vec<TokenId>,
    pub children: Vec<Option<usize>>,
    pub q: Vec<f64>,
    pub child_visits: Vec<u64>,
    pub visits: u64,
    pub terminal: bool,
}

impl SearchNode {
    pub fn new(state: DialogueState, actions: Vec<TokenId>) -> Self {
        let n = actions.len();
        Self {
            terminal: n == 0,
            state,
            actions,
            children: vec![None; n],
            q: vec![0.0; n],
            child_visits: vec![0; n],
            visits: 0,
        }
    }
}

/// Nodes live in an arena; node 0 is the root.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchTree {
    pub nodes: Vec<SearchNode>,
}

impl SearchTree {
    pub fn root(&self) -> &SearchNode {
        &self.nodes[0]
    }

    /// Root edge with the highest value among visited edges; ties go to the
    /// lowest index.
    pub fn best_root_action(&self) -> Option<usize> {
        let r = self.root();
        let mut best: Option<usize> = None;
        for i in 0..r.actions.len() {
            if r.child_visits[i] == 0 {
                continue;
            }
            if best.map_or(true, |b| r.q[i] > r.q[b]) {
                best = Some(i);
            }
        }
        best
    }
}

/// UCT choice among expanded children. Unvisited ones come first.
pub fn uct_select(node: &SearchNode, w: f64) -> Result<usize, GuidanceError> {
    let expanded: Vec<usize> = (0..node.actions.len()).filter(|&i| node.children[i].is_some()).collect();
    if expanded.is_empty() {
        return Err(GuidanceError::NoChildren);
    }
    if let Some(&i) = expanded.iter().find(|&&i| node.child_visits[i] == 0) {
        return Ok(i);
    }
    let ln_n = (node.visits.max(1) as f64).ln();
    let score = |i: usize| node.q[i] + w * (ln_n / node.child_visits[i] as f64).sqrt();
    let mut best = expanded[0];
    for &i in &expanded[1..] {
        if score(i) > score(best) {
            best = i;
        }
    }
    Ok(best)
}

/// Running-mean update of every edge on `path` with its discounted tail
/// return. `rewards[t]` is the reward at turn `t`.
pub fn backpropagate(tree: &mut SearchTree, path: &[(usize, usize)], rewards: &[f64], gamma: f64) {
    for &(node, a) in path {
        let n = &mut tree.nodes[node];
        let g = discounted_tail(rewards, n.state.turn, gamma);
        n.visits += 1;
        n.child_visits[a] += 1;
        n.q[a] += (g - n.q[a]) / n.child_visits[a] as f64;
    }
}

pub fn discounted_tail(rewards: &[f64], from: usize, gamma: f64) -> f64 {
    rewards
        .iter()
        .skip(from)
        .enumerate()
        .map(|(k, r)| gamma.powi(k as i32) * r)
        .sum()
}

/// History pins plus the turn markers and strategy tag of the turn being
/// decided.
pub fn search_condition(
    prefix: &Trajectory,
    layout: SpanLayout,
    turn: usize,
    tag: Option<TokenId>,
) -> Result<InpaintingCondition, GuidanceError> {
    if prefix.len() != layout.turn_start(turn) {
        return Err(GuidanceError::Unsupported("history does not follow the span layout"));
    }
    let mut c = InpaintingCondition::from_prefix(prefix);
    c.pin(layout.marker_slot(turn, Side::System), TokenId::SYS, PinSource::History)?;
    c.pin(layout.marker_slot(turn, Side::User), TokenId::USR, PinSource::History)?;
    if let Some(tag) = tag {
        c.pin(layout.slot(turn, Side::System, 0), tag, PinSource::Search)?;
    }
    Ok(c)
}

/// Completes the dialogue from `state` with `tag` as the next system
/// strategy and scores the completion. A state that is already over is
/// scored as is.
#[allow(clippy::too_many_arguments)]
pub fn simulate_rollout(
    model: &DenoiserModel,
    env: &dyn Environment,
    state: &DialogueState,
    tag: TokenId,
    extra: &InpaintingCondition,
    schedule: &NoiseSchedule,
    rng_seed: u64,
) -> Result<(Trajectory, Assessment), GuidanceError> {
    if is_terminal(env, state) {
        return Ok((state.prefix.clone(), env.assess(state.prefix.tokens(), true)));
    }
    let layout = env.layout();
    let cond = search_condition(&state.prefix, layout, state.turn, Some(tag))?;
    let floor = layout.turn_start(state.turn);
    let mut cond = cond;
    for (slot, pin) in extra.iter().filter(|(s, _)| *s >= floor) {
        cond.pin(slot, pin.token, pin.source)?;
    }
    let out = sample_dialogue(model, &cond, schedule, rng_seed)?;
    let a = env.assess(out.trajectory.tokens(), true);
    Ok((out.trajectory, a))
}

fn child_node(env: &dyn Environment, traj: &Trajectory, turn: usize) -> SearchNode {
    let layout = env.layout();
    match state_at(traj, turn) {
        Ok(s) if s.prefix.len() == layout.turn_start(turn) && !is_terminal(env, &s) => {
            let legal = env.legal_actions(&s);
            SearchNode::new(s, legal)
        }
        Ok(s) => SearchNode::new(s, Vec::new()),
        Err(_) => {
            let s = DialogueState {
                prefix: traj.clone(),
                turn,
                pending_system: None,
            };
            SearchNode::new(s, Vec::new())
        }
    }
}

/// Runs `budget` select, expand, simulate and backpropagate iterations from
/// `root` and returns the chosen tag with the final tree. `extra` pins (for
/// instance keyword pins) are added to every rollout.
#[allow(clippy::too_many_arguments)]
pub fn plan(
    model: &DenoiserModel,
    env: &dyn Environment,
    root: &DialogueState,
    extra: &InpaintingCondition,
    config: &SearchConfig,
    schedule: &NoiseSchedule,
    rng_seed: u64,
    trace: &mut Vec<TraceRecord>,
) -> Result<(TokenId, SearchTree), GuidanceError> {
    if config.budget == 0 {
        return Err(GuidanceError::ZeroBudget);
    }
    let legal = env.legal_actions(root);
    if legal.is_empty() {
        return Err(GuidanceError::NoLegalActions);
    }
    let t_max = env.t_max();
    let gamma = env.target().gamma;
    let mut tree = SearchTree {
        nodes: vec![SearchNode::new(root.clone(), legal)],
    };
    let mut expand_rng = seed::rng(seed::derive(rng_seed, seed::stream::EXPANSION));
    let rollout_seed = seed::derive(rng_seed, seed::stream::ROLLOUT);
    for k in 0..config.budget {
        let mut path: Vec<(usize, usize)> = Vec::new();
        let mut node = 0;
        let rewards = loop {
            let n = &tree.nodes[node];
            if n.terminal {
                break env.assess(n.state.prefix.tokens(), true).rewards_by_turn(t_max);
            }
            let untried: Vec<usize> = (0..n.actions.len()).filter(|&i| n.children[i].is_none()).collect();
            if !untried.is_empty() {
                let a = untried[expand_rng.gen_range(0..untried.len())];
                let turn = n.state.turn;
                let (traj, assessment) = simulate_rollout(
                    model,
                    env,
                    &n.state,
                    n.actions[a],
                    extra,
                    schedule,
                    seed::derive(rollout_seed, k as u64),
                )?;
                let child = child_node(env, &traj, turn + 1);
                tree.nodes.push(child);
                let id = tree.nodes.len() - 1;
                tree.nodes[node].children[a] = Some(id);
                path.push((node, a));
                break assessment.rewards_by_turn(t_max);
            }
            let a = uct_select(n, config.exploration)?;
            path.push((node, a));
            node = n.children[a].expect("selected child is expanded");
        };
        backpropagate(&mut tree, &path, &rewards, gamma);
        trace.push(TraceRecord {
            turn: root.turn,
            iteration: k,
            path: path.iter().map(|&(n, a)| tree.nodes[n].actions[a]).collect(),
            reward: discounted_tail(&rewards, root.turn, gamma),
            root_q: tree.root().q.clone(),
        });
    }
    let best = tree.best_root_action().expect("budget is positive");
    Ok((tree.root().actions[best], tree))
}
