//! Reverse (unmasking) process with inpainting, plus the forward masking
//! process used for training views and tests.
//!
//! Sampling starts from a canvas where every unpinned slot is masked and
//! walks the schedule from `N` down to `1`. Within a step, slots are revealed
//! one at a time in descending confidence (ties: lowest slot), each drawn
//! from the constrained predictive distribution given everything revealed so
//! far. Constraints keep the end padding contiguous:
//! - a slot after an `<end>` can only be `<end>`;
//! - a slot before visible content can not be `<end>`.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::condition::{ConditionError, InpaintingCondition};
use super::denoiser::{softmax_in_place, DenoiserModel};
use super::schedule::NoiseSchedule;
use super::DiffusionError;
use crate::dialogue::Trajectory;
use crate::seed;
use crate::vocab::TokenId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SampleEvent {
    Unmask {
        step: usize,
        slot: usize,
        token: TokenId,
        log_prob: f64,
    },
    /// Marker repair: these slots were re-masked before resampling.
    Remask { slots: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleOutcome {
    pub trajectory: Trajectory,
    /// Full canvas including end padding.
    pub canvas: Vec<TokenId>,
    pub log_score: f64,
    pub events: Vec<SampleEvent>,
    pub repaired: bool,
}

/// Masks `round(mask_fraction(n) * #unpinned)` unpinned slots of a complete
/// token sequence. Selection is a partial Fisher-Yates shuffle of the
/// unpinned slot list driven by `ChaCha8(seed)`.
pub fn forward_mask(
    tokens: &[TokenId],
    n: usize,
    schedule: &NoiseSchedule,
    cond: &InpaintingCondition,
    seed: u64,
    strict: bool,
) -> Result<Vec<TokenId>, DiffusionError> {
    if n > schedule.steps() {
        return Err(DiffusionError::StepOutOfRange {
            step: n,
            steps: schedule.steps(),
        });
    }
    if let Some(i) = tokens.iter().position(|&t| t == TokenId::MASK) {
        return Err(DiffusionError::ContainsMask(i));
    }
    if strict {
        for (slot, pin) in cond.iter() {
            match tokens.get(slot) {
                Some(&t) if t == pin.token => {}
                _ => {
                    return Err(ConditionError::PinConflict {
                        slot,
                        existing: tokens.get(slot).copied().unwrap_or(TokenId::MASK),
                        new: pin.token,
                    }
                    .into())
                }
            }
        }
    }
    let mut unpinned: Vec<usize> = (0..tokens.len()).filter(|&s| cond.get(s).is_none()).collect();
    let k = schedule.masked_count(n, unpinned.len());
    let mut rng = seed::rng(seed);
    let u = unpinned.len();
    for i in 0..k {
        let j = rng.gen_range(i..u);
        unpinned.swap(i, j);
    }
    let mut out = tokens.to_vec();
    for &slot in &unpinned[..k] {
        out[slot] = TokenId::MASK;
    }
    Ok(out)
}

/// Constrained predictive distribution at a masked slot, computed from scratch.
pub fn constrained_distribution(
    model: &DenoiserModel,
    canvas: &[TokenId],
    slot: usize,
) -> Result<Vec<f64>, DiffusionError> {
    let mut p = model.predict(canvas, slot)?;
    let end_before = canvas[..slot].contains(&TokenId::END);
    let content_after = canvas[slot + 1..]
        .iter()
        .any(|&t| t != TokenId::MASK && t != TokenId::END);
    apply_constraints(&mut p, end_before, content_after);
    Ok(p)
}

fn apply_constraints(p: &mut [f64], end_before: bool, content_after: bool) {
    let e = TokenId::END.index();
    if end_before {
        p.iter_mut().for_each(|x| *x = 0.0);
        p[e] = 1.0;
    } else if content_after {
        let rest = 1.0 - p[e];
        p[e] = 0.0;
        p.iter_mut().for_each(|x| *x /= rest);
    }
}

struct Canvas<'m> {
    model: &'m DenoiserModel,
    tokens: Vec<TokenId>,
    /// Unconstrained prediction per masked slot.
    probs: Vec<Vec<f64>>,
    fresh: Vec<bool>,
    scratch: Vec<f64>,
}

impl<'m> Canvas<'m> {
    fn new(model: &'m DenoiserModel, tokens: Vec<TokenId>) -> Self {
        let l = tokens.len();
        let v = model.vocab_size();
        Self {
            model,
            tokens,
            probs: vec![vec![0.0; v]; l],
            fresh: vec![false; l],
            scratch: vec![0.0; v],
        }
    }

    fn refresh(&mut self, slot: usize) {
        if self.fresh[slot] {
            return;
        }
        self.model.log_scores(&self.tokens, slot, &mut self.scratch);
        softmax_in_place(&mut self.scratch);
        self.probs[slot].copy_from_slice(&self.scratch);
        self.fresh[slot] = true;
    }

    fn reveal(&mut self, slot: usize, token: TokenId) {
        self.tokens[slot] = token;
        self.fresh[slot] = false;
        let l = self.tokens.len() as isize;
        for &d in self.model.offsets() {
            let s = slot as isize + d;
            if (0..l).contains(&s) {
                self.fresh[s as usize] = false;
            }
        }
    }

    fn remask(&mut self, slots: &[usize]) {
        for &s in slots {
            self.reveal(s, TokenId::MASK);
        }
    }

    fn first_end(&self) -> Option<usize> {
        self.tokens.iter().position(|&t| t == TokenId::END)
    }

    fn last_content(&self) -> Option<usize> {
        self.tokens
            .iter()
            .rposition(|&t| t != TokenId::MASK && t != TokenId::END)
    }

    /// Picks the most confident masked slot and returns it with its
    /// constrained distribution.
    fn most_confident(&mut self) -> Option<(usize, Vec<f64>)> {
        let first_end = self.first_end();
        let last_content = self.last_content();
        let e = TokenId::END.index();
        let mut best: Option<(usize, f64)> = None;
        for slot in 0..self.tokens.len() {
            if self.tokens[slot] != TokenId::MASK {
                continue;
            }
            let conf = if first_end.is_some_and(|f| f < slot) {
                1.0
            } else {
                self.refresh(slot);
                let p = &self.probs[slot];
                if last_content.is_some_and(|c| c > slot) {
                    let rest = 1.0 - p[e];
                    p.iter()
                        .enumerate()
                        .filter(|&(i, _)| i != e)
                        .map(|(_, &x)| x)
                        .fold(0.0, f64::max)
                        / rest
                } else {
                    p.iter().cloned().fold(0.0, f64::max)
                }
            };
            if best.map_or(true, |(_, b)| conf > b) {
                best = Some((slot, conf));
            }
        }
        let (slot, _) = best?;
        self.refresh(slot);
        let mut p = self.probs[slot].clone();
        apply_constraints(
            &mut p,
            first_end.is_some_and(|f| f < slot),
            last_content.is_some_and(|c| c > slot),
        );
        Some((slot, p))
    }

    fn masked(&self) -> usize {
        self.tokens.iter().filter(|&&t| t == TokenId::MASK).count()
    }
}

fn draw(p: &[f64], rng: &mut seed::Rng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &x) in p.iter().enumerate() {
        if x <= 0.0 {
            continue;
        }
        acc += x;
        last = i;
        if u < acc {
            return i;
        }
    }
    last
}

fn unmask_one(canvas: &mut Canvas<'_>, step: usize, rng: &mut seed::Rng, events: &mut Vec<SampleEvent>) -> f64 {
    let (slot, p) = canvas.most_confident().expect("a masked slot remains");
    let tok = draw(&p, rng);
    let log_prob = p[tok].ln();
    let token = TokenId(tok as u32);
    canvas.reveal(slot, token);
    events.push(SampleEvent::Unmask {
        step,
        slot,
        token,
        log_prob,
    });
    log_prob
}

fn split_output(canvas: &[TokenId]) -> Result<Trajectory, DiffusionError> {
    let cut = canvas.iter().position(|&t| t == TokenId::END).unwrap_or(canvas.len());
    let traj = Trajectory::new(canvas[..cut].to_vec()).map_err(|e| DiffusionError::InvalidTrajectory(0, e.to_string()))?;
    traj.turn_starts()
        .map_err(|e| DiffusionError::InvalidTrajectory(0, e.to_string()))?;
    Ok(traj)
}

/// Draws one trajectory honoring every pin in `cond`.
pub fn sample(
    model: &DenoiserModel,
    cond: &InpaintingCondition,
    schedule: &NoiseSchedule,
    seed: u64,
) -> Result<SampleOutcome, DiffusionError> {
    let l = model.canvas_len();
    cond.validate(l)?;
    let mut tokens = vec![TokenId::MASK; l];
    for (slot, pin) in cond.iter() {
        tokens[slot] = pin.token;
    }
    let unpinned = l - cond.len();
    let mut canvas = Canvas::new(model, tokens);
    let mut rng = seed::rng(seed);
    let mut events = Vec::with_capacity(unpinned);
    let mut log_score = 0.0;
    for n in (1..=schedule.steps()).rev() {
        let target = schedule.masked_count(n - 1, unpinned);
        while canvas.masked() > target {
            log_score += unmask_one(&mut canvas, n, &mut rng, &mut events);
        }
    }
    debug_assert_eq!(canvas.masked(), 0);

    let mut repaired = false;
    if split_output(&canvas.tokens).is_err() {
        // one repair pass over unpinned marker and end slots
        let slots: Vec<usize> = (0..l)
            .filter(|&s| {
                cond.get(s).is_none()
                    && matches!(canvas.tokens[s], TokenId::SYS | TokenId::USR | TokenId::END)
            })
            .collect();
        canvas.remask(&slots);
        events.push(SampleEvent::Remask { slots: slots.clone() });
        for _ in 0..slots.len() {
            log_score += unmask_one(&mut canvas, 0, &mut rng, &mut events);
        }
        repaired = true;
    }
    let trajectory = split_output(&canvas.tokens).map_err(|_| DiffusionError::NonconvergentSample)?;
    Ok(SampleOutcome {
        trajectory,
        canvas: canvas.tokens,
        log_score,
        events,
        repaired,
    })
}

/// Recomputes the log score of an outcome by replaying its events from the
/// pinned canvas with [`constrained_distribution`].
pub fn replay_log_score(
    model: &DenoiserModel,
    cond: &InpaintingCondition,
    events: &[SampleEvent],
) -> Result<(f64, Vec<TokenId>), DiffusionError> {
    let mut canvas = vec![TokenId::MASK; model.canvas_len()];
    for (slot, pin) in cond.iter() {
        canvas[slot] = pin.token;
    }
    let mut total = 0.0;
    for ev in events {
        match ev {
            SampleEvent::Unmask { slot, token, .. } => {
                let p = constrained_distribution(model, &canvas, *slot)?;
                total += p[token.index()].ln();
                canvas[*slot] = *token;
            }
            SampleEvent::Remask { slots } => {
                for &s in slots {
                    canvas[s] = TokenId::MASK;
                }
            }
        }
    }
    Ok((total, canvas))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::condition::PinSource;
    use crate::diffusion::denoiser::{padded_canvas, DenoiserConfig};
    use crate::dialogue::encode_text;
    use crate::vocab::Vocabulary;
    use proptest::prelude::*;

    fn vocab() -> Vocabulary {
        Vocabulary::new(["a", "b", "c", "d", "e", "f"]).unwrap()
    }

    fn toy_corpus(v: &Vocabulary) -> Vec<Trajectory> {
        let mut c = Vec::new();
        for _ in 0..30 {
            c.push(encode_text(&[("a b", "c"), ("d", "e f")], v).unwrap());
            c.push(encode_text(&[("b a", "d d"), ("f", "")], v).unwrap());
            c.push(encode_text(&[("c", "c e")], v).unwrap());
        }
        c
    }

    fn toy_model(v: &Vocabulary) -> DenoiserModel {
        DenoiserModel::train(&toy_corpus(v), v, DenoiserConfig::new(12), "toy").unwrap()
    }

    #[test]
    fn forward_mask_boundaries() {
        let v = vocab();
        let t = encode_text(&[("a b", "c d"), ("e", "f")], &v).unwrap();
        let s = NoiseSchedule::new(8).unwrap();
        let none = InpaintingCondition::new();
        assert_eq!(forward_mask(t.tokens(), 0, &s, &none, 1, false).unwrap(), t.tokens());
        let all = forward_mask(t.tokens(), 8, &s, &none, 1, false).unwrap();
        assert!(all.iter().all(|&x| x == TokenId::MASK));

        let mut pins = InpaintingCondition::new();
        pins.pin(2, t.tokens()[2], PinSource::Manual).unwrap();
        let all = forward_mask(t.tokens(), 8, &s, &pins, 1, true).unwrap();
        assert_eq!(all[2], t.tokens()[2]);
        assert_eq!(all.iter().filter(|&&x| x == TokenId::MASK).count(), t.len() - 1);

        let mut bad = InpaintingCondition::new();
        bad.pin(2, TokenId(9), PinSource::Manual).unwrap();
        assert!(matches!(
            forward_mask(t.tokens(), 4, &s, &bad, 1, true),
            Err(DiffusionError::Condition(ConditionError::PinConflict { .. }))
        ));
    }

    /// Independent replay of the seeded selection: draw the same ChaCha
    /// stream and run the swap loop over an explicit slot list.
    #[test]
    fn forward_mask_matches_seeded_replay() {
        let tokens: Vec<TokenId> = (0..16).map(|i| TokenId(4 + (i % 5))).collect();
        let s = NoiseSchedule::new(32).unwrap();
        let none = InpaintingCondition::new();
        let got = forward_mask(&tokens, 16, &s, &none, 7, false).unwrap();

        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut order: Vec<usize> = (0..16).collect();
        let k = (0.5f64 * 16.0).round() as usize;
        for i in 0..k {
            let j = rand::Rng::gen_range(&mut rng, i..16);
            order.swap(i, j);
        }
        let mut expect: Vec<usize> = order[..k].to_vec();
        expect.sort_unstable();
        let masked: Vec<usize> = (0..16).filter(|&i| got[i] == TokenId::MASK).collect();
        assert_eq!(masked, expect);
        assert_eq!(masked.len(), 8);
    }

    #[test]
    fn degenerate_model_reproduces_its_trajectory() {
        let v = vocab();
        let t = encode_text(&[("a b", "c"), ("d", "e f")], &v).unwrap();
        let m = DenoiserModel::train(&vec![t.clone(); 200_000], &v, DenoiserConfig::new(12), "one").unwrap();
        for seed in 0..20 {
            let out = sample(&m, &InpaintingCondition::new(), &NoiseSchedule::default(), seed).unwrap();
            assert_eq!(out.trajectory, t, "seed {seed}");
        }
    }

    #[test]
    fn full_pins_give_zero_score() {
        let v = vocab();
        let m = toy_model(&v);
        let t = encode_text(&[("a b", "c"), ("d", "e f")], &v).unwrap();
        let canvas = padded_canvas(&t, 12).unwrap();
        let mut cond = InpaintingCondition::new();
        for (i, &tok) in canvas.iter().enumerate() {
            cond.pin(i, tok, PinSource::Manual).unwrap();
        }
        let out = sample(&m, &cond, &NoiseSchedule::default(), 3).unwrap();
        assert_eq!(out.canvas, canvas);
        assert_eq!(out.trajectory, t);
        assert_eq!(out.log_score, 0.0);
        assert!(out.events.is_empty());
    }

    #[test]
    fn same_seed_same_outcome() {
        let v = vocab();
        let m = toy_model(&v);
        let s = NoiseSchedule::default();
        let a = sample(&m, &InpaintingCondition::new(), &s, 13).unwrap();
        let b = sample(&m, &InpaintingCondition::new(), &s, 13).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn end_pin_fixes_length() {
        let v = vocab();
        let m = toy_model(&v);
        let mut cond = InpaintingCondition::new();
        cond.pin(5, TokenId::END, PinSource::Manual).unwrap();
        for seed in 0..20 {
            let out = sample(&m, &cond, &NoiseSchedule::default(), seed).unwrap();
            assert!(out.trajectory.len() <= 5);
            assert!(out.canvas[5..].iter().all(|&t| t == TokenId::END));
        }
    }

    #[test]
    fn inconsistent_pins_rejected() {
        let v = vocab();
        let m = toy_model(&v);
        let mut cond = InpaintingCondition::new();
        cond.pin(2, TokenId::END, PinSource::Manual).unwrap();
        cond.pin(6, v.id("a").unwrap(), PinSource::Manual).unwrap();
        assert!(matches!(
            sample(&m, &cond, &NoiseSchedule::default(), 0),
            Err(DiffusionError::Condition(ConditionError::EndOrder(6)))
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn pins_survive_and_score_replays(seed in 0u64..10_000, a in 4u32..10, b in 4u32..10, steps in 1usize..40) {
            let v = vocab();
            let m = toy_model(&v);
            let mut cond = InpaintingCondition::new();
            cond.pin(0, TokenId::SYS, PinSource::Manual).unwrap();
            cond.pin(1, TokenId(a), PinSource::Word).unwrap();
            cond.pin(4, TokenId(b), PinSource::Word).unwrap();
            let s = NoiseSchedule::new(steps).unwrap();
            match sample(&m, &cond, &s, seed) {
                Ok(out) => {
                    for (slot, pin) in cond.iter() {
                        prop_assert_eq!(out.canvas[slot], pin.token);
                    }
                    prop_assert!(!out.trajectory.contains_mask());
                    prop_assert!(out.trajectory.is_valid());
                    let (replayed, canvas) = replay_log_score(&m, &cond, &out.events).unwrap();
                    prop_assert_eq!(canvas, out.canvas.clone());
                    prop_assert!((replayed - out.log_score).abs() < 1e-9);
                }
                Err(DiffusionError::NonconvergentSample) => {}
                Err(e) => prop_assert!(false, "unexpected error {e}"),
            }
        }
    }
}
