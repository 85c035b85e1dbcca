//! Target-achievement metrics over episode results.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dialogue::Role;
use crate::vocab::TokenId;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("no episode results")]
    EmptyResults,
    #[error("buyer and seller targets coincide")]
    DegenerateScenario,
    #[error("empty keyword target")]
    EmptyTarget,
}

/// What a metric needs from one finished episode.
pub trait Outcome {
    fn success(&self) -> bool;
    fn turns_used(&self) -> usize;
}

/// How failed episodes enter the average turn count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TurnConvention {
    /// Failures count as `t_max` turns.
    #[default]
    FailuresAsMax,
    /// Average over successful episodes only.
    SuccessOnly,
}

/// Classic dynamic-programming edit distance.
pub fn levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

pub fn success_rate<O: Outcome>(results: &[O]) -> Result<f64, MetricsError> {
    if results.is_empty() {
        return Err(MetricsError::EmptyResults);
    }
    let wins = results.iter().filter(|r| r.success()).count();
    Ok(wins as f64 / results.len() as f64)
}

pub fn average_turn<O: Outcome>(results: &[O], t_max: usize, convention: TurnConvention) -> Result<f64, MetricsError> {
    if results.is_empty() {
        return Err(MetricsError::EmptyResults);
    }
    let (sum, n) = match convention {
        TurnConvention::FailuresAsMax => results.iter().fold((0usize, 0usize), |(s, n), r| {
            (s + if r.success() { r.turns_used() } else { t_max }, n + 1)
        }),
        TurnConvention::SuccessOnly => results
            .iter()
            .filter(|r| r.success())
            .fold((0, 0), |(s, n), r| (s + r.turns_used(), n + 1)),
    };
    if n == 0 {
        // nothing succeeded: fall back to the failure convention
        return Ok(t_max as f64);
    }
    Ok(sum as f64 / n as f64)
}

/// Share of the bracket between the two targets captured by `role`.
/// A missing deal scores zero.
pub fn sell_to_list_ratio(
    role: Role,
    buyer_target: f64,
    seller_target: f64,
    deal: Option<f64>,
) -> Result<f64, MetricsError> {
    if buyer_target == seller_target {
        return Err(MetricsError::DegenerateScenario);
    }
    let Some(p) = deal else { return Ok(0.0) };
    let denom = buyer_target - seller_target;
    Ok(match role {
        Role::Buyer => (p - seller_target) / denom,
        Role::Seller => (buyer_target - p) / denom,
    })
}

/// First mention of each target keyword, in trajectory order.
pub fn first_mentions(target: &[TokenId], tokens: &[TokenId]) -> Vec<TokenId> {
    let mut seen = Vec::new();
    for &t in tokens {
        if target.contains(&t) && !seen.contains(&t) {
            seen.push(t);
        }
    }
    seen
}

pub fn keyword_coverage_ratio(target: &[TokenId], tokens: &[TokenId]) -> Result<f64, MetricsError> {
    if target.is_empty() {
        return Err(MetricsError::EmptyTarget);
    }
    let hit = target.iter().filter(|k| tokens.contains(k)).count();
    Ok(hit as f64 / target.len() as f64)
}

pub fn keyword_order_distance(target: &[TokenId], tokens: &[TokenId]) -> Result<usize, MetricsError> {
    if target.is_empty() {
        return Err(MetricsError::EmptyTarget);
    }
    Ok(levenshtein(target, &first_mentions(target, tokens)))
}

/// Multiset precision/recall F1 over content tokens; reserved tokens
/// (markers, end, mask) are ignored.
pub fn token_f1(candidate: &[TokenId], reference: &[TokenId]) -> f64 {
    let bag = |xs: &[TokenId]| {
        let mut m: HashMap<TokenId, usize> = HashMap::new();
        for &x in xs.iter().filter(|t| !t.is_reserved()) {
            *m.entry(x).or_default() += 1;
        }
        m
    };
    let c = bag(candidate);
    let r = bag(reference);
    let nc: usize = c.values().sum();
    let nr: usize = r.values().sum();
    if nc == 0 && nr == 0 {
        return 1.0;
    }
    let overlap: usize = c.iter().map(|(k, &n)| n.min(r.get(k).copied().unwrap_or(0))).sum();
    if overlap == 0 {
        return 0.0;
    }
    let p = overlap as f64 / nc as f64;
    let rec = overlap as f64 / nr as f64;
    2.0 * p * rec / (p + rec)
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

/// Aggregated metrics of one (suite, planner) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub fingerprint: String,
    pub suite: String,
    pub planner: String,
    pub n_episodes: usize,
    pub success_rate: f64,
    pub average_turn: f64,
    pub turn_convention: TurnConvention,
    pub mean_slr: Option<f64>,
    pub kcr: Option<f64>,
    pub mean_edit_distance: Option<f64>,
    pub token_f1: Option<f64>,
}

/// Per-episode values feeding the optional report columns.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub slr: Option<f64>,
    pub kcr: Option<f64>,
    pub edit_distance: Option<usize>,
    pub token_f1: Option<f64>,
}

impl MetricReport {
    pub const COLUMNS: [&'static str; 10] = [
        "fingerprint",
        "suite",
        "planner",
        "n_episodes",
        "success_rate",
        "average_turn",
        "mean_slr",
        "kcr",
        "mean_edit_distance",
        "token_f1",
    ];

    pub fn from_results<O: Outcome>(
        results: &[O],
        per_episode: &[EpisodeMetrics],
        t_max: usize,
        convention: TurnConvention,
        labels: (&str, &str, &str),
    ) -> Result<Self, MetricsError> {
        let (fingerprint, suite, planner) = labels;
        Ok(Self {
            fingerprint: fingerprint.to_string(),
            suite: suite.to_string(),
            planner: planner.to_string(),
            n_episodes: results.len(),
            success_rate: success_rate(results)?,
            average_turn: average_turn(results, t_max, convention)?,
            turn_convention: convention,
            mean_slr: mean(per_episode.iter().filter_map(|m| m.slr)),
            kcr: mean(per_episode.iter().filter_map(|m| m.kcr)),
            mean_edit_distance: mean(per_episode.iter().filter_map(|m| m.edit_distance.map(|d| d as f64))),
            token_f1: mean(per_episode.iter().filter_map(|m| m.token_f1)),
        })
    }

    pub fn tsv_header() -> String {
        Self::COLUMNS.join("\t")
    }

    pub fn tsv_row(&self) -> String {
        let opt = |x: Option<f64>| x.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"));
        [
            self.fingerprint.clone(),
            self.suite.clone(),
            self.planner.clone(),
            self.n_episodes.to_string(),
            format!("{:.4}", self.success_rate),
            format!("{:.4}", self.average_turn),
            opt(self.mean_slr),
            opt(self.kcr),
            opt(self.mean_edit_distance),
            opt(self.token_f1),
        ]
        .join("\t")
    }

    pub fn to_text(&self) -> String {
        let opt = |x: Option<f64>| x.map_or_else(|| "n/a".to_string(), |v| format!("{v:.4}"));
        let at = match self.turn_convention {
            TurnConvention::FailuresAsMax => "failures count as max turns",
            TurnConvention::SuccessOnly => "successful episodes only",
        };
        format!(
            "suite        {}\nplanner      {}\nfingerprint  {}\nepisodes     {}\nsuccess rate {:.4}\navg turns    {:.4} ({at})\nmean SLR     {}\nKCR          {}\nedit dist    {}\ntoken F1     {}\n",
            self.suite,
            self.planner,
            self.fingerprint,
            self.n_episodes,
            self.success_rate,
            self.average_turn,
            opt(self.mean_slr),
            opt(self.kcr),
            opt(self.mean_edit_distance),
            opt(self.token_f1),
        )
    }
}
