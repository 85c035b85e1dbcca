//! Experiment configuration. Files are TOML; unknown keys anywhere are an
//! error rather than a silent no-op.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use diffplan_core::diffusion::DenoiserConfig;
use diffplan_core::env::suite::{builtin_suites, find_suite, Suite};
use diffplan_core::env::Family;
use diffplan_core::guidance::{GuidanceMode, PlannerConfig};
use diffplan_core::metrics::TurnConvention;

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub name: String,
    /// Suite definitions; the built-in suites when absent. Relative paths
    /// resolve against the config file's directory.
    pub suites_file: Option<PathBuf>,
    /// Suite ids to run, in report order.
    pub suites: Vec<String>,
    /// Planner names, e.g. `random`, `greedy`, `diffusion-search`.
    pub planners: Vec<String>,
    pub episodes: usize,
    pub seed: u64,
    /// Worker threads; 0 uses every core.
    pub workers: usize,
    pub turn_convention: TurnConvention,
    /// Write one run-log record per search simulation.
    pub trace: bool,
    pub corpus: CorpusConfig,
    pub model: ModelConfig,
    pub planner: PlannerConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            name: "experiment".into(),
            suites_file: None,
            suites: vec!["negotiation-buyer".into()],
            planners: vec!["random".into(), "greedy".into(), "diffusion-search".into()],
            episodes: 100,
            seed: 1,
            workers: 0,
            turn_convention: TurnConvention::default(),
            trace: false,
            corpus: CorpusConfig::default(),
            model: ModelConfig::default(),
            planner: PlannerConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorpusConfig {
    pub size: usize,
    /// Share of episodes played by the scripted strong policy.
    pub quality_mix: f64,
    pub seed: u64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            size: 3000,
            quality_mix: 0.5,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub context_radius: usize,
    pub alpha: f64,
    pub turn_stride: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        let d = DenoiserConfig::new(1);
        Self {
            context_radius: d.context_radius,
            alpha: d.alpha,
            turn_stride: d.turn_stride,
        }
    }
}

impl ModelConfig {
    pub fn denoiser(&self, canvas_len: usize) -> DenoiserConfig {
        DenoiserConfig {
            canvas_len,
            context_radius: self.context_radius,
            alpha: self.alpha,
            turn_stride: self.turn_stride,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlannerKind {
    Random,
    Greedy,
    Expert,
    Diffusion(GuidanceMode),
}

impl PlannerKind {
    pub fn parse(name: &str) -> Result<Self, CliError> {
        match name {
            "random" => Ok(Self::Random),
            "greedy" => Ok(Self::Greedy),
            "expert" => Ok(Self::Expert),
            _ => name
                .strip_prefix("diffusion-")
                .and_then(|m| m.parse().ok())
                .map(Self::Diffusion)
                .ok_or_else(|| CliError::Config(format!("unknown planner `{name}`"))),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SuitesFile {
    suite: Vec<Suite>,
}

pub fn parse_suites(text: &str) -> Result<Vec<Suite>, CliError> {
    let file: SuitesFile = toml::from_str(text).map_err(|e| CliError::Config(format!("suites file: {e}")))?;
    Ok(file.suite)
}

/// A validated configuration with its suites resolved.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub config: Config,
    pub suites: Vec<Suite>,
    pub planners: Vec<PlannerKind>,
    pub seed_offset: u64,
    pub fingerprint: String,
}

impl Resolved {
    pub fn load(path: &Path, seed_offset: u64) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base, seed_offset)
    }

    pub fn from_toml(text: &str, base: &Path, seed_offset: u64) -> Result<Self, CliError> {
        let config: Config = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        Self::new(config, base, seed_offset)
    }

    pub fn new(config: Config, base: &Path, seed_offset: u64) -> Result<Self, CliError> {
        let all = match &config.suites_file {
            Some(p) => {
                let p = base.join(p);
                let text = std::fs::read_to_string(&p)
                    .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
                parse_suites(&text)?
            }
            None => builtin_suites(),
        };
        let bad = |m: String| Err(CliError::Config(m));
        if config.suites.is_empty() {
            return bad("no suites selected".into());
        }
        if config.planners.is_empty() {
            return bad("no planners selected".into());
        }
        if config.episodes == 0 {
            return bad("episodes must be positive".into());
        }
        if config.corpus.size == 0 {
            return bad("corpus size must be positive".into());
        }
        if !(0.0..=1.0).contains(&config.corpus.quality_mix) {
            return bad("corpus quality_mix must lie in [0, 1]".into());
        }
        if !(config.model.alpha > 0.0) {
            return bad("model alpha must be positive".into());
        }
        if config.planner.steps == 0 {
            return bad("planner steps must be positive".into());
        }
        let mut suites = Vec::new();
        for id in &config.suites {
            let s = find_suite(&all, id).map_err(|e| CliError::Config(e.to_string()))?;
            s.validate().map_err(|e| CliError::Config(e.to_string()))?;
            suites.push(s.clone());
        }
        let planners = config
            .planners
            .iter()
            .map(|p| PlannerKind::parse(p))
            .collect::<Result<Vec<_>, _>>()?;
        for s in &suites {
            let family = s.family().map_err(|e| CliError::Config(e.to_string()))?;
            for (p, name) in planners.iter().zip(&config.planners) {
                let needed = match p {
                    PlannerKind::Diffusion(m) if m.uses_words() => Some(Family::Keyword),
                    PlannerKind::Diffusion(GuidanceMode::Semantic) => Some(Family::Recommendation),
                    _ => None,
                };
                if needed.is_some_and(|f| f != family) {
                    return bad(format!("planner `{name}` does not apply to suite `{}`", s.id));
                }
            }
        }
        let searching = planners
            .iter()
            .any(|p| matches!(p, PlannerKind::Diffusion(m) if m.uses_search()));
        if searching && config.planner.search.budget == 0 {
            return bad("search budget must be positive".into());
        }
        let fingerprint = fingerprint(&config, &suites, seed_offset);
        Ok(Self {
            config,
            suites,
            planners,
            seed_offset,
            fingerprint,
        })
    }

    pub fn needs_model(&self) -> bool {
        self.planners.iter().any(|p| matches!(p, PlannerKind::Diffusion(_)))
    }

    /// Seed of the `i`-th episode; shared by every planner so results pair up.
    pub fn episode_seed(&self, i: usize) -> u64 {
        diffplan_core::seed::derive(self.config.seed.wrapping_add(self.seed_offset), i as u64)
    }
}

/// SHA-256 over the canonical JSON of everything that can change results.
/// The worker count and the suites file path are left out.
pub fn fingerprint(config: &Config, suites: &[Suite], seed_offset: u64) -> String {
    let mut c = config.clone();
    c.workers = 0;
    c.suites_file = None;
    let value = serde_json::json!({
        "config": c,
        "suites": suites,
        "seed_offset": seed_offset,
    });
    // serde_json maps are ordered by key, so this text is canonical
    let text = value.to_string();
    let digest = Sha256::digest(text.as_bytes());
    format!("{digest:x}")[..16].to_string()
}
