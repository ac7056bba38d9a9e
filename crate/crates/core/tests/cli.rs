//! The `mislc` binary: subcommands, outputs and exit codes.

mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use mislc::datamodel::{AnnotationRecord, Verdict};
use mislc::detector::RetrievalMode;
use mislc::jsonl;

fn mislc(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mislc"))
        .args(args)
        .current_dir(cwd)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn chunk_and_build_index() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    common::write_corpus(&root.join("corpus"));

    let out = mislc(&["chunk", "corpus", "--out", "chunks.jsonl", "--budget", "12"], root);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let chunks = fs::read_to_string(root.join("chunks.jsonl")).unwrap();
    assert!(chunks.lines().count() > 3);
    assert!(chunks.contains("\"chunk_id\":\"defamation#0\""));

    let out = mislc(&["build-index", "chunks.jsonl", "--out", "idx"], root);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let from_manifest = fs::read(root.join("idx/postings.bin")).unwrap();

    let out = mislc(&["build-index", "corpus", "--out", "idx2", "--budget", "12"], root);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(from_manifest, fs::read(root.join("idx2/postings.bin")).unwrap());
}

#[test]
fn empty_corpus_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    fs::create_dir(dir.path().join("empty")).unwrap();
    let out = mislc(&["build-index", "empty", "--out", "idx"], dir.path());
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("EmptyCorpus"), "{}", stderr(&out));
}

#[test]
fn oversize_paragraph_without_hard_split() {
    let dir = tempfile::tempdir().unwrap();
    common::write_corpus(&dir.path().join("corpus"));
    let out = mislc(&["chunk", "corpus", "--out", "c.jsonl", "--budget", "3", "--no-hard-split"], dir.path());
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("OversizeParagraph"));
}

#[test]
fn run_eval_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let fx = common::E2e::new(dir.path());
    let cfg = fx.write_config(RetrievalMode::FlareLegalWeb, "a");
    let mut bytes = Vec::new();
    for name in ["first", "second"] {
        let out = mislc(&["run", "--config", cfg.to_str().unwrap(), "--name", name], dir.path());
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        let run = dir.path().join("runs").join(name);
        assert!(run.join("config.resolved.toml").is_file());
        let out = mislc(
            &["eval", run.join("predictions.jsonl").to_str().unwrap(), "--dataset", fx.dataset.to_str().unwrap()],
            dir.path(),
        );
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        assert!(stdout(&out).starts_with("n=6 "), "{}", stdout(&out));
        let csv = fs::read_to_string(run.join("label_distribution.csv")).unwrap();
        assert!(csv.starts_with("run,non_mislc,unclear,mislc\n"));
        bytes.push((
            fs::read(run.join("predictions.jsonl")).unwrap(),
            fs::read(run.join("report.json")).unwrap(),
        ));
    }
    assert_eq!(bytes[0], bytes[1]);
}

#[test]
fn flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let fx = common::E2e::new(dir.path());
    let cfg = fx.write_config(RetrievalMode::None, "plain");
    let out = mislc(
        &["run", "--config", cfg.to_str().unwrap(), "--retrieval", "oracle_web", "--name", "ow"],
        dir.path(),
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let resolved = fs::read_to_string(dir.path().join("runs/ow/config.resolved.toml")).unwrap();
    assert!(resolved.contains("mode = \"oracle_web\""), "{resolved}");
}

#[test]
fn invalid_theta_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let fx = common::E2e::new(dir.path());
    let cfg = fx.write_config(RetrievalMode::FlareLegal, "t");
    let out = mislc(&["run", "--config", cfg.to_str().unwrap(), "--theta", "1.5"], dir.path());
    assert_eq!(code(&out), 2, "{}", stderr(&out));
}

#[test]
fn missing_dataset_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = mislc(&["run", "--dataset", "nope.jsonl", "--llm-script", "nope.json"], dir.path());
    assert_eq!(code(&out), 2);
}

#[test]
fn unknown_config_key_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.toml"), "[run]\nseeed = 3\n").unwrap();
    let out = mislc(&["run", "--config", "bad.toml"], dir.path());
    assert_eq!(code(&out), 2);
}

#[test]
fn missing_index_for_legal_mode() {
    let dir = tempfile::tempdir().unwrap();
    let fx = common::E2e::new(dir.path());
    let mut cfg = fx.config(RetrievalMode::RalmLegal, "x");
    cfg.run.index = None;
    fs::write(dir.path().join("x.toml"), cfg.to_toml()).unwrap();
    let out = mislc(&["run", "--config", "x.toml"], dir.path());
    assert_eq!(code(&out), 2, "{}", stderr(&out));
}

#[test]
fn eval_rejects_unknown_sample() {
    let dir = tempfile::tempdir().unwrap();
    let fx = common::E2e::new(dir.path());
    let pred = mislc::datamodel::Prediction::error("ghost", "");
    jsonl::write(&dir.path().join("p.jsonl"), &[pred]).unwrap();
    let out = mislc(&["eval", "p.jsonl", "--dataset", fx.dataset.to_str().unwrap()], dir.path());
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("UnknownSample"));
}

#[test]
fn sweep_theta_writes_table() {
    let dir = tempfile::tempdir().unwrap();
    let fx = common::E2e::new(dir.path());
    let cfg = fx.write_config(RetrievalMode::FlareLegal, "sweep");
    let out = mislc(&["sweep-theta", "--config", cfg.to_str().unwrap(), "--grid", "0,0.5,1"], dir.path());
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let csv = fs::read_to_string(dir.path().join("runs/sweep/sweep_theta.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4, "{csv}");
    let regens: Vec<usize> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(5).unwrap().parse().unwrap())
        .collect();
    assert_eq!(regens[0], 0);
    assert!(regens.windows(2).all(|w| w[0] <= w[1]), "{regens:?}");

    let out = mislc(&["sweep-theta", "--config", cfg.to_str().unwrap(), "--grid", "0.2,1.5"], dir.path());
    assert_eq!(code(&out), 2);
}

#[test]
fn filter_command() {
    let dir = tempfile::tempdir().unwrap();
    jsonl::write(&dir.path().join("votes.jsonl"), &common::synthetic_votes(300, 1)).unwrap();
    let out = mislc(&["filter", "votes.jsonl", "--out-dir", "f", "--k", "200", "--runs", "2"], dir.path());
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let kept = fs::read_to_string(dir.path().join("f/kept.txt")).unwrap();
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("f/filter.json")).unwrap()).unwrap();
    assert_eq!(report["runs"].as_array().unwrap().len(), 2);
    assert_eq!(kept.lines().count(), report["intersection"].as_array().unwrap().len());
}

fn annotations() -> Vec<AnnotationRecord> {
    let mut out = Vec::new();
    let verdicts = [Verdict::Yes, Verdict::No, Verdict::Unclear];
    for s in 0..60 {
        for a in 0..3 {
            // annotator 2 disagrees on every fifth sample
            let v = if a == 2 && s % 5 == 0 { verdicts[(s + 1) % 3] } else { verdicts[s % 3] };
            out.push(AnnotationRecord {
                sample_id: format!("s{s:02}"),
                annotator_id: format!("expert{a}"),
                verdict: v,
                issues: if s % 3 == 0 { ["defamation".to_string()].into() } else { Default::default() },
                no_claim: s % 7 == 6,
                defence: false,
                evidence_urls: if s % 2 == 0 { vec![format!("https://e.example/{s}")] } else { vec![] },
            });
        }
    }
    out
}

#[test]
fn annotation_commands() {
    let dir = tempfile::tempdir().unwrap();
    jsonl::write(&dir.path().join("ann.jsonl"), &annotations()).unwrap();

    let out = mislc(&["agreement", "ann.jsonl", "--out", "alpha.json"], dir.path());
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let alpha: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("alpha.json")).unwrap()).unwrap();
    let a = alpha["alpha"].as_f64().unwrap();
    assert!(a > 0.5 && a < 1.0, "{a}");

    let out = mislc(&["experts", "ann.jsonl", "--out", "experts.json"], dir.path());
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stdout(&out).starts_with("3 experts"), "{}", stdout(&out));

    let out = mislc(&["experts", "ann.jsonl", "--out", "e2.json", "--min-count", "60"], dir.path());
    assert_eq!(code(&out), 1, "nobody has more than 60 annotations");

    let out = mislc(&["label", "ann.jsonl", "--out", "labels.jsonl"], dir.path());
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let labels = fs::read_to_string(dir.path().join("labels.jsonl")).unwrap();
    assert_eq!(labels.lines().count(), 60);
}

#[test]
fn help_lists_subcommands() {
    let dir = tempfile::tempdir().unwrap();
    let out = mislc(&["--help"], dir.path());
    assert_eq!(code(&out), 0);
    let help = stdout(&out);
    for cmd in ["chunk", "build-index", "run", "eval", "sweep-theta", "filter", "agreement", "experts", "label"] {
        assert!(help.contains(cmd), "help lacks {cmd}");
    }
}
