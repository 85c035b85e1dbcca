//! Mixed-quality training corpora: each episode is driven either by the
//! scripted strong policy or by a random-legal policy.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::suite::Suite;
use super::EnvError;
use crate::dialogue::Trajectory;
use crate::episode::{run_episode, EpisodeError, ExpertPlanner, Planner, RandomPlanner};
use crate::parallel;
use crate::seed;
use crate::vocab::{TokenId, Vocabulary};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusRecord {
    pub scenario: String,
    pub seed: u64,
    pub tokens: Vec<TokenId>,
    pub success: bool,
}

impl CorpusRecord {
    pub fn trajectory(&self) -> Result<Trajectory, EnvError> {
        Ok(Trajectory::new(self.tokens.clone())?)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("quality mix {0} outside [0, 1]")]
    QualityMix(f64),
    #[error("corpus size must be positive")]
    Empty,
    #[error("episode {index}: {source}")]
    Episode { index: usize, source: EpisodeError },
    #[error(transparent)]
    Env(#[from] EnvError),
}

/// Whether episode `index` of a corpus is driven by the strong policy.
pub fn uses_strong_policy(seed: u64, quality_mix: f64) -> bool {
    seed::rng(seed::derive(seed, seed::stream::POLICY_MIX)).gen_bool(quality_mix)
}

pub fn episode_seed(corpus_seed: u64, index: usize) -> u64 {
    seed::derive(corpus_seed, index as u64)
}

pub fn generate_corpus(
    suite: &Suite,
    vocab: &Vocabulary,
    size: usize,
    quality_mix: f64,
    corpus_seed: u64,
) -> Result<Vec<CorpusRecord>, CorpusError> {
    if !(0.0..=1.0).contains(&quality_mix) {
        return Err(CorpusError::QualityMix(quality_mix));
    }
    if size == 0 {
        return Err(CorpusError::Empty);
    }
    let indices: Vec<usize> = (0..size).collect();
    parallel::map(&indices, |&index| {
        let seed = episode_seed(corpus_seed, index);
        let env = suite.environment(seed, vocab)?;
        let planner: &dyn Planner = if uses_strong_policy(seed, quality_mix) {
            &ExpertPlanner
        } else {
            &RandomPlanner
        };
        let r = run_episode(planner, env.as_ref(), seed).map_err(|source| CorpusError::Episode { index, source })?;
        Ok(CorpusRecord {
            scenario: r.scenario_id,
            seed,
            tokens: r.trajectory.into_tokens(),
            success: r.success,
        })
    })
    .into_iter()
    .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::suite::builtin_suites;

    fn suite(id: &str) -> Suite {
        builtin_suites().into_iter().find(|s| s.id == id).unwrap()
    }

    fn rate(rs: &[CorpusRecord]) -> f64 {
        rs.iter().filter(|r| r.success).count() as f64 / rs.len() as f64
    }

    #[test]
    fn records_are_valid_and_deterministic() {
        let v = Vocabulary::standard();
        for s in builtin_suites() {
            let a = generate_corpus(&s, &v, 20, 0.5, 1).unwrap();
            let b = generate_corpus(&s, &v, 20, 0.5, 1).unwrap();
            assert_eq!(a, b);
            for r in &a {
                let t = r.trajectory().unwrap();
                assert!(t.is_valid());
                assert!(t.len() <= s.canvas_len().unwrap());
            }
        }
    }

    #[test]
    fn success_grows_with_quality() {
        let v = Vocabulary::standard();
        for id in ["negotiation-buyer", "keyword-chain", "recommendation"] {
            let s = suite(id);
            let lo = rate(&generate_corpus(&s, &v, 400, 0.0, 3).unwrap());
            let hi = rate(&generate_corpus(&s, &v, 400, 1.0, 3).unwrap());
            assert!(hi > lo, "{id}: {lo} vs {hi}");
        }
        let trivial = rate(&generate_corpus(&suite("trivial-accept"), &v, 200, 1.0, 3).unwrap());
        assert_eq!(trivial, 1.0);
    }

    #[test]
    fn invalid_arguments() {
        let v = Vocabulary::standard();
        let s = suite("keyword-chain");
        assert!(matches!(generate_corpus(&s, &v, 0, 0.5, 1), Err(CorpusError::Empty)));
        assert!(matches!(generate_corpus(&s, &v, 5, 1.5, 1), Err(CorpusError::QualityMix(_))));
    }
}
