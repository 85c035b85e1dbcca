//! The subcommands. Every artifact carries the config fingerprint.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use diffplan_core::diffusion::DenoiserModel;
use diffplan_core::env::suite::Suite;
use diffplan_core::env::{generate_corpus, CorpusRecord};
use diffplan_core::episode::{run_episode, EpisodeResult, ExpertPlanner, GreedyPlanner, Planner, RandomPlanner};
use diffplan_core::guidance::{DiffusionPlanner, PlannerConfig};
use diffplan_core::metrics::{EpisodeMetrics, MetricReport};
use diffplan_core::{parallel, Vocabulary};

use crate::config::{PlannerKind, Resolved};
use crate::runlog::{self, EpisodeRecord, Header, Line, TraceLine};
use crate::{CliError, Options};

pub const CORPUS_FORMAT: &str = "diffplan-corpus";
pub const CORPUS_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusHeader {
    pub format: String,
    pub version: u32,
    pub fingerprint: String,
    pub suite: String,
    pub size: usize,
    pub quality_mix: f64,
    pub seed: u64,
}

pub fn corpus_path(out: &Path, suite: &str) -> PathBuf {
    out.join(format!("corpus-{suite}.jsonl"))
}

pub fn model_path(out: &Path, suite: &str) -> PathBuf {
    out.join(format!("model-{suite}.ckpt"))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn corpus_for(r: &Resolved, suite: &Suite, vocab: &Vocabulary) -> Result<Vec<CorpusRecord>, CliError> {
    let c = r.config.corpus;
    generate_corpus(suite, vocab, c.size, c.quality_mix, c.seed).map_err(|e| CliError::Runtime(e.to_string()))
}

fn train(r: &Resolved, suite: &Suite, corpus: &[CorpusRecord], vocab: &Vocabulary) -> Result<DenoiserModel, CliError> {
    let trajs = corpus
        .iter()
        .map(|rec| rec.trajectory())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let canvas = suite.canvas_len().map_err(|e| CliError::Config(e.to_string()))?;
    DenoiserModel::train(&trajs, vocab, r.config.model.denoiser(canvas), r.fingerprint.clone())
        .map_err(|e| CliError::Runtime(e.to_string()))
}

/// The checkpoint in `out` when it was trained under this fingerprint,
/// otherwise a model trained in memory on a freshly generated corpus.
pub fn model_for(r: &Resolved, suite: &Suite, out: &Path, vocab: &Vocabulary) -> Result<DenoiserModel, CliError> {
    let path = model_path(out, &suite.id);
    if let Ok(text) = fs::read_to_string(&path) {
        if let Ok(m) = DenoiserModel::from_checkpoint(&text, vocab) {
            if m.trained_on() == r.fingerprint {
                return Ok(m);
            }
        }
    }
    train(r, suite, &corpus_for(r, suite, vocab)?, vocab)
}

pub fn build_planner<'m>(
    kind: PlannerKind,
    model: Option<&'m DenoiserModel>,
    base: &PlannerConfig,
) -> Result<Box<dyn Planner + 'm>, CliError> {
    Ok(match kind {
        PlannerKind::Random => Box::new(RandomPlanner),
        PlannerKind::Greedy => Box::new(GreedyPlanner),
        PlannerKind::Expert => Box::new(ExpertPlanner),
        PlannerKind::Diffusion(mode) => {
            let model = model.ok_or_else(|| CliError::Runtime("diffusion planner without a model".into()))?;
            let cfg = PlannerConfig {
                mode,
                ..base.clone()
            };
            Box::new(DiffusionPlanner::new(model, cfg).map_err(|e| CliError::Config(e.to_string()))?)
        }
    })
}

pub fn cmd_gen_corpus(opts: &Options) -> Result<(), CliError> {
    let r = opts.resolve()?;
    let vocab = Vocabulary::standard();
    opts.with_workers(&r, || {
        for suite in &r.suites {
            let records = corpus_for(&r, suite, &vocab)?;
            let header = CorpusHeader {
                format: CORPUS_FORMAT.into(),
                version: CORPUS_VERSION,
                fingerprint: r.fingerprint.clone(),
                suite: suite.id.clone(),
                size: r.config.corpus.size,
                quality_mix: r.config.corpus.quality_mix,
                seed: r.config.corpus.seed,
            };
            let path = corpus_path(&opts.out, &suite.id);
            let mut w = create(&path)?;
            writeln!(w, "{}", serde_json::to_string(&header)?)?;
            for rec in &records {
                writeln!(w, "{}", serde_json::to_string(rec)?)?;
            }
            w.flush()?;
            let ok = records.iter().filter(|x| x.success).count();
            println!("{}: {} episodes ({ok} successful) -> {}", suite.id, records.len(), path.display());
        }
        Ok(())
    })
}

pub fn read_corpus(path: &Path) -> Result<(CorpusHeader, Vec<CorpusRecord>), CliError> {
    let f = File::open(path).map_err(|e| CliError::Runtime(format!("cannot open {}: {e}", path.display())))?;
    let mut lines = BufReader::new(f).lines();
    let first = lines
        .next()
        .ok_or_else(|| CliError::Format(format!("{} is empty", path.display())))??;
    let header: CorpusHeader = serde_json::from_str(&first)?;
    if header.format != CORPUS_FORMAT || header.version != CORPUS_VERSION {
        return Err(CliError::Format(format!("{}: unsupported corpus format", path.display())));
    }
    let mut records = Vec::new();
    for l in lines {
        records.push(serde_json::from_str(&l?)?);
    }
    Ok((header, records))
}

pub fn cmd_train(opts: &Options) -> Result<(), CliError> {
    let r = opts.resolve()?;
    let vocab = Vocabulary::standard();
    opts.with_workers(&r, || {
        for suite in &r.suites {
            let path = corpus_path(&opts.out, &suite.id);
            let (header, records) = read_corpus(&path)?;
            if header.fingerprint != r.fingerprint {
                return Err(CliError::Runtime(format!(
                    "{} was generated under config {}, current config is {}; rerun gen-corpus",
                    path.display(),
                    header.fingerprint,
                    r.fingerprint
                )));
            }
            let model = train(&r, suite, &records, &vocab)?;
            let out = model_path(&opts.out, &suite.id);
            let mut w = create(&out)?;
            w.write_all(model.to_checkpoint().as_bytes())?;
            w.flush()?;
            println!("{}: trained on {} episodes -> {}", suite.id, records.len(), out.display());
        }
        Ok(())
    })
}

#[derive(Debug, Serialize)]
struct Timing {
    suite: String,
    planner: String,
    seconds: f64,
}

/// Files written by `run`.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub report_text: PathBuf,
    pub report_tsv: PathBuf,
    pub runlog: PathBuf,
    pub timings: PathBuf,
    pub reports: Vec<MetricReport>,
}

pub fn cmd_run(opts: &Options) -> Result<RunArtifacts, CliError> {
    let r = opts.resolve()?;
    let vocab = Vocabulary::standard();
    fs::create_dir_all(&opts.out)?;
    let paths = RunArtifacts {
        report_text: opts.out.join("report.txt"),
        report_tsv: opts.out.join("report.tsv"),
        runlog: opts.out.join("runlog.jsonl"),
        timings: opts.out.join("timings.json"),
        reports: Vec::new(),
    };
    let mut log = create(&paths.runlog)?;
    runlog::write_header(
        &mut log,
        &Header {
            schema: runlog::SCHEMA.into(),
            version: runlog::VERSION,
            fingerprint: r.fingerprint.clone(),
            seed_offset: r.seed_offset,
            config: serde_json::to_value(&r.config)?,
        },
    )?;
    let started = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let mut timings = Vec::new();
    let mut reports = Vec::new();
    let seeds: Vec<u64> = (0..r.config.episodes).map(|i| r.episode_seed(i)).collect();
    opts.with_workers(&r, || {
        for suite in &r.suites {
            let model = if r.needs_model() {
                Some(model_for(&r, suite, &opts.out, &vocab)?)
            } else {
                None
            };
            for (&kind, name) in r.planners.iter().zip(&r.config.planners) {
                let planner = build_planner(kind, model.as_ref(), &r.config.planner)?;
                let clock = Instant::now();
                let results = parallel::map(&seeds, |&seed| -> Result<EpisodeResult, CliError> {
                    let env = suite
                        .environment(seed, &vocab)
                        .map_err(|e| CliError::Runtime(e.to_string()))?;
                    run_episode(planner.as_ref(), env.as_ref(), seed)
                        .map_err(|e| CliError::Runtime(format!("{} seed {seed}: {e}", suite.id)))
                })
                .into_iter()
                .collect::<Result<Vec<_>, _>>()?;
                timings.push(Timing {
                    suite: suite.id.clone(),
                    planner: name.clone(),
                    seconds: clock.elapsed().as_secs_f64(),
                });
                let mut records = Vec::with_capacity(results.len());
                for res in &results {
                    let rec = EpisodeRecord::new(&suite.id, name, res, &vocab);
                    runlog::write_line(&mut log, &Line::Episode(rec.clone()))?;
                    if r.config.trace {
                        for t in &res.trace {
                            runlog::write_line(
                                &mut log,
                                &Line::Trace(TraceLine {
                                    suite: suite.id.clone(),
                                    planner: name.clone(),
                                    seed: res.seed,
                                    record: t.clone(),
                                }),
                            )?;
                        }
                    }
                    records.push(rec);
                }
                reports.push(report_for(&r, suite, name, &records)?);
            }
        }
        Ok::<(), CliError>(())
    })?;
    log.flush()?;
    write_reports(&paths.report_text, &paths.report_tsv, &reports)?;
    let mut t = create(&paths.timings)?;
    let timing = serde_json::json!({
        "fingerprint": r.fingerprint,
        "started_unix": started,
        "cells": timings,
    });
    writeln!(t, "{}", serde_json::to_string_pretty(&timing)?)?;
    t.flush()?;
    Ok(RunArtifacts { reports, ..paths })
}

fn report_for(r: &Resolved, suite: &Suite, planner: &str, records: &[EpisodeRecord]) -> Result<MetricReport, CliError> {
    let per: Vec<EpisodeMetrics> = records.iter().map(|x| x.metrics).collect();
    MetricReport::from_results(
        records,
        &per,
        suite.t_max,
        r.config.turn_convention,
        (&r.fingerprint, &suite.id, planner),
    )
    .map_err(|e| CliError::Runtime(e.to_string()))
}

pub fn render_reports(reports: &[MetricReport]) -> (String, String) {
    let text = reports.iter().map(|x| x.to_text()).collect::<Vec<_>>().join("\n");
    let mut tsv = MetricReport::tsv_header();
    tsv.push('\n');
    for x in reports {
        tsv.push_str(&x.tsv_row());
        tsv.push('\n');
    }
    (text, tsv)
}

fn write_reports(text_path: &Path, tsv_path: &Path, reports: &[MetricReport]) -> Result<(), CliError> {
    let (text, tsv) = render_reports(reports);
    fs::write(text_path, text)?;
    fs::write(tsv_path, tsv)?;
    Ok(())
}

/// Rebuilds the reports from the run log in `out` and prints them.
pub fn cmd_report(opts: &Options) -> Result<Vec<MetricReport>, CliError> {
    let r = opts.resolve()?;
    let path = opts.out.join("runlog.jsonl");
    let f = File::open(&path).map_err(|e| CliError::Runtime(format!("cannot open {}: {e}", path.display())))?;
    let (header, lines) = runlog::read(BufReader::new(f))?;
    if header.fingerprint != r.fingerprint {
        return Err(CliError::Runtime(format!(
            "run log was written under config {}, current config is {}",
            header.fingerprint, r.fingerprint
        )));
    }
    let mut cells: BTreeMap<(usize, usize), Vec<EpisodeRecord>> = BTreeMap::new();
    for line in lines {
        let Line::Episode(rec) = line else { continue };
        let si = r.config.suites.iter().position(|s| *s == rec.suite);
        let pi = r.config.planners.iter().position(|p| *p == rec.planner);
        match (si, pi) {
            (Some(si), Some(pi)) => cells.entry((si, pi)).or_default().push(rec),
            _ => return Err(CliError::Format(format!("run log cell {}/{} not in config", rec.suite, rec.planner))),
        }
    }
    let mut reports = Vec::new();
    for ((si, pi), records) in &cells {
        reports.push(report_for(&r, &r.suites[*si], &r.config.planners[*pi], records)?);
    }
    let (text, tsv) = render_reports(&reports);
    print!("{text}");
    fs::write(opts.out.join("report.tsv"), tsv)?;
    Ok(reports)
}
