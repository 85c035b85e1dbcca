use serde::{Deserialize, Serialize};

use super::DiffusionError;

pub const DEFAULT_STEPS: usize = 32;

/// Linear absorbing-state schedule: at step `n` a fraction `n / N` of the
/// unpinned slots is masked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    steps: usize,
}

impl NoiseSchedule {
    pub fn new(steps: usize) -> Result<Self, DiffusionError> {
        if steps == 0 {
            return Err(DiffusionError::InvalidSchedule);
        }
        Ok(Self { steps })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn mask_fraction(&self, n: usize) -> f64 {
        n.min(self.steps) as f64 / self.steps as f64
    }

    /// Number of the `unpinned` slots that are masked at step `n`.
    pub fn masked_count(&self, n: usize, unpinned: usize) -> usize {
        (self.mask_fraction(n) * unpinned as f64).round() as usize
    }
}

impl Default for NoiseSchedule {
    fn default() -> Self {
        Self {
            steps: DEFAULT_STEPS,
        }
    }
}
