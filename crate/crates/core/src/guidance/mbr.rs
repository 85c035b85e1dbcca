//! Minimum Bayes risk selection among sampled candidates.

use serde::{Deserialize, Serialize};

use super::GuidanceError;
use crate::dialogue::Trajectory;
use crate::metrics::levenshtein;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MBRCandidate {
    pub trajectory: Trajectory,
    /// Index of the alternative whose condition produced this sample.
    pub condition_variant: usize,
    pub risk: f64,
}

impl MBRCandidate {
    pub fn new(trajectory: Trajectory, condition_variant: usize) -> Self {
        Self {
            trajectory,
            condition_variant,
            risk: 0.0,
        }
    }
}

/// Token-level edit distance between two trajectories.
pub fn edit_distance_risk(a: &Trajectory, b: &Trajectory) -> f64 {
    levenshtein(a.tokens(), b.tokens()) as f64
}

/// Mean risk of each candidate against all the others. A lone candidate has
/// risk 0.
pub fn mean_pairwise_risks<F>(candidates: &[MBRCandidate], risk: F) -> Vec<f64>
where
    F: Fn(&Trajectory, &Trajectory) -> f64,
{
    let n = candidates.len();
    if n < 2 {
        return vec![0.0; n];
    }
    let mut sums = vec![0.0; n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                sums[i] += risk(&candidates[i].trajectory, &candidates[j].trajectory);
            }
        }
    }
    sums.into_iter().map(|s| s / (n - 1) as f64).collect()
}

/// The candidate with the smallest mean pairwise risk; ties go to the lowest
/// index. The returned candidate carries its risk.
pub fn mbr_decode<F>(candidates: &[MBRCandidate], risk: F) -> Result<(usize, MBRCandidate), GuidanceError>
where
    F: Fn(&Trajectory, &Trajectory) -> f64,
{
    if candidates.is_empty() {
        return Err(GuidanceError::EmptyCandidates);
    }
    let risks = mean_pairwise_risks(candidates, risk);
    let mut best = 0;
    for (i, &r) in risks.iter().enumerate() {
        if r < risks[best] {
            best = i;
        }
    }
    let mut out = candidates[best].clone();
    out.risk = risks[best];
    Ok((best, out))
}
