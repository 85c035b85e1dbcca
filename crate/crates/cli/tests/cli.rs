use std::fs;
use std::path::Path;

use proptest::prelude::*;

use diffplan_cli::commands::{corpus_path, model_path, read_corpus};
use diffplan_cli::config::PlannerKind;
use diffplan_cli::{cmd_report, cmd_run, main_with, Options, Resolved};
use diffplan_core::guidance::GuidanceMode;

fn run_cli(args: &[&str], input: &str) -> (i32, String) {
    let mut out = Vec::new();
    let mut argv = vec!["diffplan"];
    argv.extend_from_slice(args);
    let code = main_with(argv, &mut input.as_bytes(), &mut out);
    (code, String::from_utf8(out).unwrap())
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("exp.toml");
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

const SMALL: &str = r#"
suites = ["keyword-chain"]
planners = ["random", "diffusion-word"]
episodes = 6

[corpus]
size = 300
"#;

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "episodes = 3\nbogus = true\n");
    assert_eq!(run_cli(&["run", "--config", &cfg], "").0, 2);
    assert_eq!(run_cli(&["run", "--frobnicate"], "").0, 2);
    assert_eq!(run_cli(&["launch"], "").0, 2);
    assert_eq!(run_cli(&["run", "--config", "/nonexistent/exp.toml"], "").0, 2);
    let cfg = write_config(dir.path(), "suites = ['negotiation-buyer']\nplanners = ['diffusion-word']\n");
    assert_eq!(run_cli(&["run", "--config", &cfg], "").0, 2);
    assert_eq!(run_cli(&["--help"], "").0, 0);
}

#[test]
fn train_without_corpus_fails() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("out");
    assert_eq!(run_cli(&["train", "--config", &cfg, "--out", out.to_str().unwrap()], "").0, 1);
}

#[test]
fn corpus_train_run_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("out");
    let out_s = out.to_str().unwrap();
    assert_eq!(run_cli(&["gen-corpus", "--config", &cfg, "--out", out_s], "").0, 0);
    let (header, records) = read_corpus(&corpus_path(&out, "keyword-chain")).unwrap();
    assert_eq!(records.len(), 300);
    let r = Resolved::load(Path::new(&cfg), 0).unwrap();
    assert_eq!(header.fingerprint, r.fingerprint);

    assert_eq!(run_cli(&["train", "--config", &cfg, "--out", out_s], "").0, 0);
    assert!(model_path(&out, "keyword-chain").exists());
    assert_eq!(run_cli(&["run", "--config", &cfg, "--out", out_s, "--workers", "1"], "").0, 0);

    let opts = Options::new(&cfg, &out);
    let tsv = fs::read_to_string(out.join("report.tsv")).unwrap();
    let rebuilt = cmd_report(&opts).unwrap();
    assert_eq!(rebuilt.len(), 2);
    assert_eq!(fs::read_to_string(out.join("report.tsv")).unwrap(), tsv);
    assert!(out.join("timings.json").exists());

    // a changed config no longer matches the stored log or corpus
    let cfg2 = write_config(dir.path(), &SMALL.replace("episodes = 6", "episodes = 7"));
    assert_eq!(run_cli(&["report", "--config", &cfg2, "--out", out_s], "").0, 1);
    assert_eq!(run_cli(&["train", "--config", &cfg2, "--out", out_s], "").0, 1);
}

#[test]
fn seed_offset_changes_episodes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "planners = ['random']\nepisodes = 5\n");
    let a = cmd_run(&Options::new(&cfg, dir.path().join("a"))).unwrap();
    let mut shifted = Options::new(&cfg, dir.path().join("b"));
    shifted.seed_offset = 9;
    let b = cmd_run(&shifted).unwrap();
    assert_ne!(fs::read(a.runlog).unwrap(), fs::read(b.runlog).unwrap());
}

#[test]
fn repl_suggests_and_finishes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "suites = ['keyword-chain']\nplanners = ['random']\n");
    let out = dir.path().join("out");
    let args = ["repl", "--config", cfg.as_str(), "--out", out.to_str().unwrap()];

    let (code, text) = run_cli(&args, "cofee\nquit\n");
    assert_eq!(code, 0);
    assert!(text.contains("unknown token `cofee`; did you mean: coffee"), "{text}");

    let (_, text) = run_cli(&args, "ack\n");
    let hint = &text[text.find("a user span").expect("width hint")..];
    let example = hint.split('`').nth(1).unwrap();
    let (code, text) = run_cli(&args, &format!("{example}\n").repeat(20));
    assert_eq!(code, 0);
    assert!(text.contains(" after "), "{text}");
}

proptest! {
    #[test]
    fn planner_names_round_trip(i in 0..GuidanceMode::ALL.len()) {
        let mode = GuidanceMode::ALL[i];
        prop_assert_eq!(PlannerKind::parse(&format!("diffusion-{mode}")).unwrap(), PlannerKind::Diffusion(mode));
    }

    #[test]
    fn fingerprint_ignores_workers(episodes in 1usize..500, seed in 0u64..1000, workers in 0usize..16) {
        let base = format!("episodes = {episodes}\nseed = {seed}\n");
        let a = Resolved::from_toml(&base, Path::new("."), 0).unwrap();
        let b = Resolved::from_toml(&format!("{base}workers = {workers}\n"), Path::new("."), 0).unwrap();
        let c = Resolved::from_toml(&format!("episodes = {episodes}\nseed = {}\n", seed + 1), Path::new("."), 0).unwrap();
        prop_assert_eq!(&a.fingerprint, &b.fingerprint);
        prop_assert_ne!(&a.fingerprint, &c.fingerprint);
    }
}
