use std::fs;
use std::path::{Path, PathBuf};

use lexevo_core::events::EventBody;
use lexevo_core::model::RoundOutcome;
use lexevo_core::runner::{replay, run_experiment, ExperimentConfig, Manifest, ReplayError, RunError, RunOptions};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn smoke_config(script: &Path) -> ExperimentConfig {
    ExperimentConfig {
        scenario: "pet_trade".into(),
        trials: 2,
        rounds: 2,
        master_seed: 11,
        provider: format!("scripted:{}", script.display()),
        ..ExperimentConfig::default()
    }
}

fn opts(out: &Path) -> RunOptions {
    RunOptions { out: out.to_owned(), force: false, jobs: 2 }
}

#[test]
fn run_writes_logs_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let report = run_experiment(&smoke_config(&fixture("smoke_script.jsonl")), &opts(&out)).unwrap();
    assert!(out.join("trial-001.jsonl").is_file());
    assert!(out.join("trial-002.jsonl").is_file());
    let manifest = Manifest::read(&out).unwrap();
    assert_eq!(manifest.trials.len(), 2);
    assert_eq!(manifest.master_seed, 11);
    assert!(manifest.trials.iter().all(|t| t.error.is_none() && t.events > 0));
    assert_eq!(report.records[&1].len(), 2);
    assert!(report.records.values().flatten().all(|r| r.outcome == RoundOutcome::Clean));
}

#[test]
fn trials_use_independent_streams() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    run_experiment(&smoke_config(&fixture("smoke_script.jsonl")), &opts(&out)).unwrap();
    let starts: Vec<u64> = ["trial-001.jsonl", "trial-002.jsonl"]
        .iter()
        .map(|f| {
            let first = fs::read_to_string(out.join(f)).unwrap();
            let e: lexevo_core::Event = serde_json::from_str(first.lines().next().unwrap()).unwrap();
            match e.body {
                EventBody::TrialStart { stream, .. } => stream,
                other => panic!("{other:?}"),
            }
        })
        .collect();
    assert_eq!(starts, [1, 2]);
}

#[test]
fn occupied_output_needs_force() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    fs::create_dir_all(&out).unwrap();
    fs::write(out.join("notes.txt"), "keep me").unwrap();
    let cfg = smoke_config(&fixture("smoke_script.jsonl"));
    assert!(matches!(run_experiment(&cfg, &opts(&out)), Err(RunError::Config(_))));

    let forced = RunOptions { force: true, ..opts(&out) };
    run_experiment(&cfg, &forced).unwrap();
    assert_eq!(fs::read_to_string(out.join("notes.txt")).unwrap(), "keep me");
}

#[test]
fn exhausted_script_aborts_the_trial() {
    let tmp = tempfile::tempdir().unwrap();
    let script = tmp.path().join("short.jsonl");
    fs::write(&script, "{\"match\": \"index\", \"index\": 1, \"response\": \"Plan: chat.\"}\n").unwrap();
    let out = tmp.path().join("run");
    match run_experiment(&smoke_config(&script), &opts(&out)) {
        Err(RunError::Aborted(failures)) => {
            assert_eq!(failures.iter().map(|f| f.0).collect::<Vec<_>>(), [1, 2]);
        }
        other => panic!("{other:?}"),
    }
    // partial logs and the manifest are still written for inspection
    let manifest = Manifest::read(&out).unwrap();
    assert!(manifest.trials.iter().all(|t| t.error.is_some()));
}

#[test]
fn replay_of_one_trial_file() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    run_experiment(&smoke_config(&fixture("smoke_script.jsonl")), &opts(&out)).unwrap();
    let report = replay(&out.join("trial-002.jsonl")).unwrap();
    assert_eq!(report.trials, 1);
    assert_eq!(report.divergences, 0);
    assert!(report.events > 0);
}

#[test]
fn replay_reports_the_first_divergent_line() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    run_experiment(&smoke_config(&fixture("smoke_script.jsonl")), &opts(&out)).unwrap();
    let path = out.join("trial-001.jsonl");
    let text = fs::read_to_string(&path).unwrap();
    let edited = text.replacen("\"accuracy\":", "\"accuracy\":1", 1);
    // keep the line parseable as JSON: the number gains a leading digit
    assert_ne!(edited, text);
    fs::write(&path, edited).unwrap();
    let report = replay(&out).unwrap();
    assert_eq!(report.divergences, 1);
    assert_eq!(report.first.unwrap().trial, 1);
}

#[test]
fn replay_refuses_a_changed_script() {
    let tmp = tempfile::tempdir().unwrap();
    let script = tmp.path().join("script.jsonl");
    fs::copy(fixture("smoke_script.jsonl"), &script).unwrap();
    let out = tmp.path().join("run");
    run_experiment(&smoke_config(&script), &opts(&out)).unwrap();
    let mut text = fs::read_to_string(&script).unwrap();
    text.push_str("# edited\n");
    fs::write(&script, text).unwrap();
    match replay(&out) {
        Err(ReplayError::HashMismatch { what, .. }) => assert_eq!(what, "provider script"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn replay_needs_a_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(matches!(replay(tmp.path()), Err(ReplayError::Manifest(_))));
}
