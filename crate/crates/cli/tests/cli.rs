#[path = "../../core/tests/support/mock.rs"]
mod mock;

use std::path::Path;
use std::process::{Command, Output};

use logicbench::dataset::read_jsonl;
use logicbench::eval::{read_prompts, read_records};
use mock::{MockServer, Reply};

fn logicbench(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_logicbench")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn gen(dir: &Path, n: &str) {
    let out = logicbench(&["gen", "--n", n, "--depths", "1:7", "--seed", "3", "--out", dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
}

#[test]
fn gen_then_verify() {
    let dir = tempfile::tempdir().unwrap();
    gen(dir.path(), "140");
    for name in ["train.jsonl", "validation.jsonl", "test.jsonl", "metadata.json"] {
        assert!(dir.path().join(name).exists(), "{name} missing");
    }
    let test = dir.path().join("test.jsonl");
    let n = read_jsonl(&test).unwrap().len();
    let out = logicbench(&["verify", test.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout(&out).trim(), format!("{n}/{n} labels verified"));

    let out = logicbench(&["verify", dir.path().to_str().unwrap()]);
    assert_eq!(stdout(&out).trim(), "140/140 labels verified");
}

#[test]
fn flipped_label_fails_verification() {
    let dir = tempfile::tempdir().unwrap();
    gen(dir.path(), "70");
    let path = dir.path().join("train.jsonl");
    let mut instances = read_jsonl(&path).unwrap();
    let victim = instances[3].id.clone();
    let original = instances[3].label;
    let text = std::fs::read_to_string(&path).unwrap();
    let line = text.lines().nth(3).unwrap();
    let label = format!("\"label\":\"{}\"", instances[3].label);
    let other = if instances[3].label.as_str() == "True" { "\"label\":\"False\"" } else { "\"label\":\"True\"" };
    std::fs::write(&path, text.replace(line, &line.replacen(&label, other, 1))).unwrap();
    instances = read_jsonl(&path).unwrap();
    assert_ne!(instances[3].label, original);

    let out = logicbench(&["verify", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains(&format!("FAILED {victim}")), "{}", stderr(&out));
    assert_eq!(stderr(&out).matches("FAILED").count(), 1);
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(logicbench(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(logicbench(&["gen", "--n", "70"]).status.code(), Some(2));
    assert_eq!(logicbench(&["gen", "--depths", "5", "--out", "x"]).status.code(), Some(2));
    assert_eq!(logicbench(&["gen", "--depths", "0:3", "--out", "x"]).status.code(), Some(2));
    assert_eq!(logicbench(&["verify"]).status.code(), Some(2));
}

#[test]
fn io_and_range_errors_exit_1() {
    let out = logicbench(&["verify", "/definitely/not/here.jsonl"]);
    assert_eq!(out.status.code(), Some(1));
    let dir = tempfile::tempdir().unwrap();
    let out = logicbench(&["gen", "--n", "30", "--depths", "1:11", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("invalid depth range"));
}

#[test]
fn stats_reports_metrics_and_histograms() {
    let dir = tempfile::tempdir().unwrap();
    gen(dir.path(), "70");
    let out = logicbench(&["stats", dir.path().to_str().unwrap()]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("instances: 70"));
    assert!(text.contains("flesch-kincaid grade: "));
    assert!(text.contains("vocabulary: "));
    assert_eq!(text.lines().filter(|l| l.trim_end().ends_with(" 10")).count(), 7);

    let out = logicbench(&["stats", "--json", dir.path().to_str().unwrap()]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["instances"], 70);
}

#[test]
fn prompts_for_every_mode() {
    let dir = tempfile::tempdir().unwrap();
    gen(dir.path(), "210");
    let test = read_jsonl(&dir.path().join("test.jsonl")).unwrap();
    for (mode, marker) in [
        ("zero-shot", None),
        ("few-shot", Some("Example 3")),
        ("chain-of-thought", Some("Reasoning: ")),
        ("pk-test", None),
    ] {
        let out_path = dir.path().join(format!("{mode}.jsonl"));
        let out = logicbench(&[
            "prompts",
            "--data",
            dir.path().to_str().unwrap(),
            "--mode",
            mode,
            "--out",
            out_path.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{mode}: {}", stderr(&out));
        let prompts = read_prompts(&out_path).unwrap();
        assert_eq!(prompts.len(), test.len());
        for (p, inst) in prompts.iter().zip(&test) {
            assert_eq!(p.id, inst.id);
            if let Some(m) = marker {
                assert!(p.prompt.contains(m));
            }
            let has_paragraph = p.prompt.contains(&inst.paragraph[0]);
            assert_eq!(has_paragraph, mode != "pk-test");
        }
    }
    let bad = logicbench(&[
        "prompts",
        "--data",
        dir.path().to_str().unwrap(),
        "--mode",
        "few-shot",
        "--shots",
        "0",
        "--out",
        "x.jsonl",
    ]);
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn eval_fails_fast_without_token() {
    let server = MockServer::start(|_, _| Reply::content("True"));
    let dir = tempfile::tempdir().unwrap();
    gen(dir.path(), "21");
    let prompts = dir.path().join("p.jsonl");
    logicbench(&["prompts", "--data", dir.path().to_str().unwrap(), "--out", prompts.to_str().unwrap()]);
    let out = logicbench(&[
        "eval",
        "--prompts",
        prompts.to_str().unwrap(),
        "--base-url",
        &server.base_url,
        "--model",
        "m",
        "--token-env",
        "LOGICBENCH_CLI_TEST_UNSET",
        "--out",
        dir.path().join("r.jsonl").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("LOGICBENCH_CLI_TEST_UNSET"));
    assert_eq!(server.hits(), 0);
}

#[test]
fn eval_and_score_round_trip() {
    let server = MockServer::start(|_, _| Reply::content("Answer: True"));
    let dir = tempfile::tempdir().unwrap();
    gen(dir.path(), "70");
    let d = |name: &str| dir.path().join(name).to_str().unwrap().to_string();
    logicbench(&["prompts", "--data", &d(""), "--out", &d("p.jsonl")]);
    let out = logicbench(&[
        "eval",
        "--prompts",
        &d("p.jsonl"),
        "--base-url",
        &server.base_url,
        "--model",
        "m",
        "--out",
        &d("r.jsonl"),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let records = read_records(Path::new(&d("r.jsonl"))).unwrap();
    assert!(records.iter().all(|r| r.extracted.is_some() && r.failure.is_none()));

    let out = logicbench(&["score", "--records", &d("r.jsonl"), "--gold", &d("test.jsonl"), "--out", &d("report")]);
    assert!(out.status.success(), "{}", stderr(&out));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d("report.json")).unwrap()).unwrap();
    let gold = read_jsonl(Path::new(&d("test.jsonl"))).unwrap();
    let trues = gold.iter().filter(|i| i.label.as_str() == "True").count();
    let expected = (1000.0 * trues as f64 / gold.len() as f64).round() / 10.0;
    assert_eq!(report["overall"]["accuracy"].as_f64().unwrap(), expected);
    assert!(std::fs::read_to_string(d("report.csv")).unwrap().starts_with("breakdown,"));
}
