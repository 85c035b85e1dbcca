//! Windowed count-based denoiser.
//!
//! The prediction for a masked slot `i` combines a per-slot token prior with
//! one pairwise likelihood per visible neighbour inside the context window:
//!
//! ```text
//! p(x | ctx) ∝ (c_i(x) + α) / (n_i + αV) · Π_{d ∈ window, tok[i+d] visible} (c_d(x, tok[i+d]) + α) / (c_d(x) + αV)
//! ```
//!
//! `V` is the set of tokens that occur somewhere in the training corpus; the
//! mask token and tokens the corpus never uses receive no mass. Counts are taken
//! over end-padded training canvases. The masking process is independent of
//! token content, so the window statistics gathered from fully observed
//! canvases are the sufficient statistics of every masked view.

use serde::{Deserialize, Serialize};

use super::DiffusionError;
use crate::dialogue::Trajectory;
use crate::parallel;
use crate::vocab::{TokenId, Vocabulary};

pub const DEFAULT_CONTEXT_RADIUS: usize = 3;
pub const DEFAULT_ALPHA: f64 = 0.1;
pub const CHECKPOINT_FORMAT: &str = "diffplan-denoiser/1";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DenoiserConfig {
    pub canvas_len: usize,
    pub context_radius: usize,
    pub alpha: f64,
    /// Adds the neighbours at `±turn_stride` to the window when it lies
    /// beyond the radius; 0 disables them.
    #[serde(default)]
    pub turn_stride: usize,
}

impl DenoiserConfig {
    pub fn new(canvas_len: usize) -> Self {
        Self {
            canvas_len,
            context_radius: DEFAULT_CONTEXT_RADIUS,
            alpha: DEFAULT_ALPHA,
            turn_stride: 0,
        }
    }

    /// Context offsets in table order.
    pub fn offsets(&self) -> Vec<isize> {
        let r = self.context_radius as isize;
        let k = self.turn_stride as isize;
        let far = k > r;
        let mut out = Vec::with_capacity(2 * self.context_radius + 2);
        if far {
            out.push(-k);
        }
        out.extend((-r..0).chain(1..=r));
        if far {
            out.push(k);
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct DenoiserModel {
    vocab_size: usize,
    vocab_hash: String,
    config: DenoiserConfig,
    offsets: Vec<isize>,
    trained_on: String,
    slot_counts: Vec<u64>,
    pair_counts: Vec<u64>,
    slot_log: Vec<f64>,
    pair_log: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Checkpoint {
    format: String,
    vocab_hash: String,
    vocab_size: usize,
    canvas_len: usize,
    context_radius: usize,
    alpha: f64,
    #[serde(default)]
    turn_stride: usize,
    trained_on: String,
    /// `[slot, token, count]`
    slot_counts: Vec<[u64; 3]>,
    /// `[offset index, center, neighbour, count]`
    pair_counts: Vec<[u64; 4]>,
}

struct Counts {
    slot: Vec<u64>,
    pair: Vec<u64>,
}

/// End-padded canvas for a completed trajectory.
pub fn padded_canvas(traj: &Trajectory, canvas_len: usize) -> Result<Vec<TokenId>, DiffusionError> {
    if traj.len() > canvas_len {
        return Err(DiffusionError::TrajectoryTooLong {
            len: traj.len(),
            canvas_len,
        });
    }
    let mut canvas = traj.tokens().to_vec();
    canvas.resize(canvas_len, TokenId::END);
    Ok(canvas)
}

impl DenoiserModel {
    pub fn train(
        corpus: &[Trajectory],
        vocab: &Vocabulary,
        config: DenoiserConfig,
        trained_on: impl Into<String>,
    ) -> Result<Self, DiffusionError> {
        if corpus.is_empty() {
            return Err(DiffusionError::EmptyCorpus);
        }
        if config.canvas_len == 0 || !(config.alpha > 0.0) {
            return Err(DiffusionError::InvalidConfig("canvas_len and alpha must be positive"));
        }
        for (i, t) in corpus.iter().enumerate() {
            t.turn_starts()
                .map_err(|e| DiffusionError::InvalidTrajectory(i, e.to_string()))?;
            if t.len() > config.canvas_len {
                return Err(DiffusionError::TrajectoryTooLong {
                    len: t.len(),
                    canvas_len: config.canvas_len,
                });
            }
        }
        let v = vocab.len();
        let offs = config.offsets();
        let l = config.canvas_len;
        let counts = parallel::fold_reduce(
            corpus,
            || Counts {
                slot: vec![0; l * v],
                pair: vec![0; offs.len() * v * v],
            },
            |mut acc, traj| {
                let canvas = padded_canvas(traj, l).expect("length checked");
                for (i, &x) in canvas.iter().enumerate() {
                    acc.slot[i * v + x.index()] += 1;
                    for (di, &d) in offs.iter().enumerate() {
                        let j = i as isize + d;
                        if j < 0 || j >= l as isize {
                            continue;
                        }
                        let y = canvas[j as usize];
                        acc.pair[(di * v + x.index()) * v + y.index()] += 1;
                    }
                }
                acc
            },
            |mut a, b| {
                a.slot.iter_mut().zip(&b.slot).for_each(|(x, y)| *x += y);
                a.pair.iter_mut().zip(&b.pair).for_each(|(x, y)| *x += y);
                a
            },
        );
        Ok(Self::from_counts(
            v,
            vocab.fingerprint(),
            config,
            trained_on.into(),
            counts.slot,
            counts.pair,
        ))
    }

    fn from_counts(
        vocab_size: usize,
        vocab_hash: String,
        config: DenoiserConfig,
        trained_on: String,
        slot_counts: Vec<u64>,
        pair_counts: Vec<u64>,
    ) -> Self {
        let v = vocab_size;
        let alpha = config.alpha;
        // smoothing only spreads mass over tokens the corpus actually uses
        let seen: Vec<bool> = (0..v)
            .map(|x| x != 0 && (0..config.canvas_len).any(|i| slot_counts[i * v + x] > 0))
            .collect();
        let support = seen.iter().filter(|&&s| s).count() as f64;
        let mut slot_log = vec![f64::NEG_INFINITY; slot_counts.len()];
        for i in 0..config.canvas_len {
            let row = &slot_counts[i * v..(i + 1) * v];
            let total: u64 = row.iter().sum();
            let denom = (total as f64 + alpha * support).ln();
            for x in (1..v).filter(|&x| seen[x]) {
                slot_log[i * v + x] = (row[x] as f64 + alpha).ln() - denom;
            }
        }
        let mut pair_log = vec![0.0; pair_counts.len()];
        let offsets = config.offsets();
        for di in 0..offsets.len() {
            for x in 0..v {
                let base = (di * v + x) * v;
                let row = &pair_counts[base..base + v];
                let total: u64 = row.iter().sum();
                let denom = (total as f64 + alpha * support).ln();
                for y in 0..v {
                    pair_log[base + y] = (row[y] as f64 + alpha).ln() - denom;
                }
            }
        }
        Self {
            vocab_size,
            vocab_hash,
            config,
            offsets,
            trained_on,
            slot_counts,
            pair_counts,
            slot_log,
            pair_log,
        }
    }

    pub fn config(&self) -> DenoiserConfig {
        self.config
    }

    pub fn canvas_len(&self) -> usize {
        self.config.canvas_len
    }

    pub fn context_radius(&self) -> usize {
        self.config.context_radius
    }

    pub fn offsets(&self) -> &[isize] {
        &self.offsets
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn vocab_hash(&self) -> &str {
        &self.vocab_hash
    }

    pub fn trained_on(&self) -> &str {
        &self.trained_on
    }

    pub fn slot_count(&self, slot: usize, token: TokenId) -> u64 {
        self.slot_counts[slot * self.vocab_size + token.index()]
    }

    /// Count of `neighbour` appearing `offset` slots away from `center`.
    pub fn pair_count(&self, offset: isize, center: TokenId, neighbour: TokenId) -> u64 {
        let di = self
            .offsets
            .iter()
            .position(|&d| d == offset)
            .unwrap_or_else(|| panic!("offset {offset} outside window"));
        self.pair_counts[(di * self.vocab_size + center.index()) * self.vocab_size + neighbour.index()]
    }

    /// Unnormalized log-scores for `slot`; the mask entry is `-inf`.
    pub(crate) fn log_scores(&self, canvas: &[TokenId], slot: usize, out: &mut [f64]) {
        let v = self.vocab_size;
        out.copy_from_slice(&self.slot_log[slot * v..(slot + 1) * v]);
        let l = self.config.canvas_len as isize;
        for (di, &d) in self.offsets.iter().enumerate() {
            let j = slot as isize + d;
            if j < 0 || j >= l {
                continue;
            }
            let y = canvas[j as usize];
            if y == TokenId::MASK {
                continue;
            }
            let y = y.index();
            for x in 1..v {
                out[x] += self.pair_log[(di * v + x) * v + y];
            }
        }
    }

    /// Normalized categorical over the vocabulary for a masked slot.
    pub fn predict(&self, canvas: &[TokenId], slot: usize) -> Result<Vec<f64>, DiffusionError> {
        self.check_canvas(canvas)?;
        if slot >= canvas.len() || canvas[slot] != TokenId::MASK {
            return Err(DiffusionError::SlotNotMasked(slot));
        }
        let mut out = vec![0.0; self.vocab_size];
        self.log_scores(canvas, slot, &mut out);
        softmax_in_place(&mut out);
        Ok(out)
    }

    pub(crate) fn check_canvas(&self, canvas: &[TokenId]) -> Result<(), DiffusionError> {
        if canvas.len() != self.config.canvas_len {
            return Err(DiffusionError::CanvasLength {
                got: canvas.len(),
                expected: self.config.canvas_len,
            });
        }
        if let Some(t) = canvas.iter().find(|t| t.index() >= self.vocab_size) {
            return Err(DiffusionError::TokenOutOfVocabulary(*t));
        }
        Ok(())
    }

    pub fn to_checkpoint(&self) -> String {
        let v = self.vocab_size;
        let slot_counts = self
            .slot_counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(k, &c)| [(k / v) as u64, (k % v) as u64, c])
            .collect();
        let pair_counts = self
            .pair_counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(k, &c)| [(k / (v * v)) as u64, ((k / v) % v) as u64, (k % v) as u64, c])
            .collect();
        let ck = Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            vocab_hash: self.vocab_hash.clone(),
            vocab_size: v,
            canvas_len: self.config.canvas_len,
            context_radius: self.config.context_radius,
            alpha: self.config.alpha,
            turn_stride: self.config.turn_stride,
            trained_on: self.trained_on.clone(),
            slot_counts,
            pair_counts,
        };
        let mut s = serde_json::to_string(&ck).expect("checkpoint serializes");
        s.push('\n');
        s
    }

    pub fn from_checkpoint(text: &str, vocab: &Vocabulary) -> Result<Self, DiffusionError> {
        let ck: Checkpoint =
            serde_json::from_str(text).map_err(|e| DiffusionError::Checkpoint(e.to_string()))?;
        if ck.format != CHECKPOINT_FORMAT {
            return Err(DiffusionError::Checkpoint(format!("unknown format `{}`", ck.format)));
        }
        let expected = vocab.fingerprint();
        if ck.vocab_hash != expected || ck.vocab_size != vocab.len() {
            return Err(DiffusionError::VocabularyMismatch {
                checkpoint: ck.vocab_hash,
                vocabulary: expected,
            });
        }
        let v = ck.vocab_size;
        let config = DenoiserConfig {
            canvas_len: ck.canvas_len,
            context_radius: ck.context_radius,
            alpha: ck.alpha,
            turn_stride: ck.turn_stride,
        };
        let mut slot = vec![0u64; ck.canvas_len * v];
        for [s, t, c] in ck.slot_counts {
            let k = s as usize * v + t as usize;
            *slot
                .get_mut(k)
                .ok_or_else(|| DiffusionError::Checkpoint("slot entry out of range".into()))? = c;
        }
        let mut pair = vec![0u64; config.offsets().len() * v * v];
        for [d, x, y, c] in ck.pair_counts {
            let k = (d as usize * v + x as usize) * v + y as usize;
            *pair
                .get_mut(k)
                .ok_or_else(|| DiffusionError::Checkpoint("pair entry out of range".into()))? = c;
        }
        Ok(Self::from_counts(v, ck.vocab_hash, config, ck.trained_on, slot, pair))
    }
}

pub(crate) fn softmax_in_place(xs: &mut [f64]) {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for x in xs.iter_mut() {
        *x = if x.is_finite() { (*x - max).exp() } else { 0.0 };
        total += *x;
    }
    for x in xs.iter_mut() {
        *x /= total;
    }
}
