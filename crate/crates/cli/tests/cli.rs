use std::path::PathBuf;
use std::process::{Command, Output};

fn toy_config() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures/toy/config.toml")
}

fn regrag(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_regrag")).args(args).output().unwrap()
}

#[test]
fn retrieve_generate_score_on_toy_fixture() {
    let out = tempfile::tempdir().unwrap();
    let cfg = toy_config();
    let common = ["-c", cfg.to_str().unwrap(), "--output-dir", out.path().to_str().unwrap()];
    for cmd in ["retrieve", "generate", "score"] {
        let res = regrag(&[&[cmd][..], &common[..]].concat());
        assert!(res.status.success(), "{cmd}: {}", String::from_utf8_lossy(&res.stderr));
    }
    for f in ["run.trec", "metrics.txt", "answers.jsonl", "trajectory.jsonl", "repass_report.jsonl", "score.txt"] {
        assert!(out.path().join(f).is_file(), "missing {f}");
    }
    let table = String::from_utf8(regrag(&[&["score"][..], &common[..]].concat()).stdout).unwrap();
    assert!(table.contains("RePASs"));
}

#[test]
fn overrides_reach_the_run() {
    let out = tempfile::tempdir().unwrap();
    let cfg = toy_config();
    let res = regrag(&[
        "generate",
        "-c",
        cfg.to_str().unwrap(),
        "--output-dir",
        out.path().to_str().unwrap(),
        "--strategy",
        "noc",
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let answers = std::fs::read_to_string(out.path().join("answers.jsonl")).unwrap();
    assert!(answers.lines().all(|l| l.contains("\"strategy_tag\":\"NOC\"")));
    assert!(!out.path().join("trajectory.jsonl").exists());
}

#[test]
fn failures_exit_nonzero_with_a_structured_error() {
    let out = tempfile::tempdir().unwrap();
    let cfg = toy_config();
    let res = regrag(&[
        "retrieve",
        "-c",
        cfg.to_str().unwrap(),
        "--output-dir",
        out.path().to_str().unwrap(),
        "--corpus",
        "/nonexistent/corpus.jsonl",
    ]);
    assert_eq!(res.status.code(), Some(1));
    let line = String::from_utf8(res.stderr).unwrap();
    let err: serde_json::Value = serde_json::from_str(line.lines().last().unwrap()).unwrap();
    assert_eq!(err["error"], "config");
    assert!(err["message"].as_str().unwrap().contains("corpus"));
}

#[test]
fn bad_fusion_grid_is_rejected() {
    let out = tempfile::tempdir().unwrap();
    let target = out.path().join("sweep");
    let cfg = toy_config();
    let res = regrag(&[
        "sweep-fusion",
        "-c",
        cfg.to_str().unwrap(),
        "--output-dir",
        target.to_str().unwrap(),
        "--grid",
        "0.9:0.9",
    ]);
    assert_eq!(res.status.code(), Some(1));
    assert!(!target.exists(), "output written before the grid was validated");
}

#[test]
fn zero_rerank_depth_is_rejected_before_any_output() {
    let out = tempfile::tempdir().unwrap();
    let target = out.path().join("sweep");
    let cfg = toy_config();
    let res = regrag(&[
        "sweep-rerank-depth",
        "-c",
        cfg.to_str().unwrap(),
        "--output-dir",
        target.to_str().unwrap(),
        "--depths",
        "10,0",
    ]);
    assert_eq!(res.status.code(), Some(1));
    assert!(!target.exists());
}
