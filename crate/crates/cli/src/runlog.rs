//! Run logs: JSON Lines, one header record followed by one record per
//! episode (and per search simulation when tracing). Nothing time-dependent
//! is written here, so identical runs give identical files.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use diffplan_core::episode::EpisodeResult;
use diffplan_core::guidance::TraceRecord;
use diffplan_core::metrics::{EpisodeMetrics, Outcome};
use diffplan_core::Vocabulary;

use crate::CliError;

pub const SCHEMA: &str = "diffplan-runlog";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Header {
    pub schema: String,
    pub version: u32,
    pub fingerprint: String,
    pub seed_offset: u64,
    pub config: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpisodeRecord {
    pub suite: String,
    pub planner: String,
    pub seed: u64,
    pub scenario: String,
    pub success: bool,
    pub turns_used: usize,
    pub deal_price: Option<f64>,
    pub final_reward: f64,
    pub metrics: EpisodeMetrics,
    pub dialogue: String,
}

impl EpisodeRecord {
    pub fn new(suite: &str, planner: &str, r: &EpisodeResult, vocab: &Vocabulary) -> Self {
        Self {
            suite: suite.to_string(),
            planner: planner.to_string(),
            seed: r.seed,
            scenario: r.scenario_id.clone(),
            success: r.success,
            turns_used: r.turns_used,
            deal_price: r.deal_price,
            final_reward: r.final_reward,
            metrics: r.metrics,
            dialogue: vocab.render(r.trajectory.tokens()),
        }
    }
}

impl Outcome for EpisodeRecord {
    fn success(&self) -> bool {
        self.success
    }

    fn turns_used(&self) -> usize {
        self.turns_used
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceLine {
    pub suite: String,
    pub planner: String,
    pub seed: u64,
    #[serde(flatten)]
    pub record: TraceRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Line {
    Episode(EpisodeRecord),
    Trace(TraceLine),
}

pub fn write_header(w: &mut impl Write, header: &Header) -> Result<(), CliError> {
    writeln!(w, "{}", serde_json::to_string(header)?)?;
    Ok(())
}

pub fn write_line(w: &mut impl Write, line: &Line) -> Result<(), CliError> {
    writeln!(w, "{}", serde_json::to_string(line)?)?;
    Ok(())
}

pub fn read(r: impl BufRead) -> Result<(Header, Vec<Line>), CliError> {
    let mut lines = r.lines();
    let first = lines.next().ok_or_else(|| CliError::Format("run log is empty".into()))??;
    let header: Header = serde_json::from_str(&first)?;
    if header.schema != SCHEMA || header.version != VERSION {
        return Err(CliError::Format(format!(
            "unsupported run log {} v{}",
            header.schema, header.version
        )));
    }
    let mut out = Vec::new();
    for (i, l) in lines.enumerate() {
        let l = l?;
        let line: Line =
            serde_json::from_str(&l).map_err(|e| CliError::Format(format!("run log line {}: {e}", i + 2)))?;
        out.push(line);
    }
    Ok((header, out))
}
