//! End-to-end runs of the `lift3d` binary: the lift → qagen → eval loop on a
//! synthetic corpus, self-evaluation scores, exit codes, and the selfcheck
//! command.

mod common;

use std::path::Path;
use std::process::{Command, Output};

use lift3d::pipeline::{PredictionRecord, QaRecord, RepoRecord, SCHEMA_VERSION};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_lift3d"))
}

fn run_ok(args: &[&str]) -> Output {
    let output = bin().args(args).output().unwrap();
    assert!(
        output.status.success(),
        "command {args:?} failed:\n{}",
        String::from_utf8_lossy(&output.stderr)
    );
    output
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Vec<T> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

fn write_predictions(path: &Path, rows: impl IntoIterator<Item = (String, String)>) {
    let mut out = String::new();
    for (id, prediction) in rows {
        let record = PredictionRecord {
            schema_version: SCHEMA_VERSION,
            id,
            prediction,
        };
        let value = serde_json::to_value(&record).unwrap();
        out.push_str(&serde_json::to_string(&value).unwrap());
        out.push('\n');
    }
    std::fs::write(path, out).unwrap();
}

#[test]
fn full_pipeline_and_self_evaluation() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = common::build_corpus(dir.path(), 6, 31);
    let config = corpus.config.to_str().unwrap().to_string();
    let repo = dir.path().join("repo.jsonl");
    let qa = dir.path().join("qa.jsonl");

    // lift
    let output = run_ok(&["lift", "--config", &config, "--out", repo.to_str().unwrap()]);
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("scenes: 6"), "summary missing: {stderr}");
    let records: Vec<RepoRecord> = read_jsonl(&repo);
    assert_eq!(records.len(), 6);

    // qagen needs the repo path in the config.
    let qa_config_path = dir.path().join("qa_config.toml");
    std::fs::write(
        &qa_config_path,
        format!("seed = 7\n[inputs]\nrepo = {:?}\n", repo.to_str().unwrap()),
    )
    .unwrap();
    run_ok(&[
        "qagen",
        "--config",
        qa_config_path.to_str().unwrap(),
        "--out",
        qa.to_str().unwrap(),
    ]);
    let qa_records: Vec<QaRecord> = read_jsonl(&qa);
    assert!(!qa_records.is_empty());

    // QA self-evaluation: predictions are the reference answers.
    let preds = dir.path().join("preds.jsonl");
    write_predictions(
        &preds,
        qa_records
            .iter()
            .map(|r| (r.item.id.clone(), r.item.answer.clone())),
    );
    let eval_config = dir.path().join("eval_qa.toml");
    std::fs::write(
        &eval_config,
        format!(
            "[eval]\ntask = \"qa\"\nreferences = {:?}\npredictions = {:?}\n",
            qa.to_str().unwrap(),
            preds.to_str().unwrap()
        ),
    )
    .unwrap();
    let report_path = dir.path().join("report_qa.json");
    let output = run_ok(&[
        "eval",
        "--config",
        eval_config.to_str().unwrap(),
        "--out",
        report_path.to_str().unwrap(),
    ]);
    let table = String::from_utf8_lossy(&output.stdout);
    assert!(table.contains("overall"), "missing table: {table}");
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report_path).unwrap()).unwrap();
    assert_eq!(report["task"], "qa");
    assert_eq!(report["overall"]["accuracy"], 100.0);
    assert_eq!(report["open_ended"]["accuracy"], 100.0);
    assert_eq!(report["numerical"]["accuracy"], 100.0);

    // Detection self-evaluation: per-scene bbox lines from the detection QA.
    let det_preds = dir.path().join("det_preds.jsonl");
    write_predictions(
        &det_preds,
        qa_records
            .iter()
            .filter(|r| r.item.qtype == "detection")
            .map(|r| (r.item.scene_id.clone(), r.item.answer.clone())),
    );
    let det_config = dir.path().join("eval_det.toml");
    std::fs::write(
        &det_config,
        format!(
            "[eval]\ntask = \"detection\"\nreferences = {:?}\npredictions = {:?}\n",
            repo.to_str().unwrap(),
            det_preds.to_str().unwrap()
        ),
    )
    .unwrap();
    let det_report_path = dir.path().join("report_det.json");
    run_ok(&[
        "eval",
        "--config",
        det_config.to_str().unwrap(),
        "--out",
        det_report_path.to_str().unwrap(),
    ]);
    let det_report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&det_report_path).unwrap()).unwrap();
    assert_eq!(det_report["f1"], 1.0);
    assert_eq!(det_report["precision"], 1.0);
    assert_eq!(det_report["recall"], 1.0);

    // Grounding self-evaluation.
    let g_preds = dir.path().join("g_preds.jsonl");
    write_predictions(
        &g_preds,
        qa_records
            .iter()
            .filter(|r| r.item.qtype.starts_with("grounding"))
            .map(|r| (r.item.id.clone(), r.item.answer.clone())),
    );
    let g_config = dir.path().join("eval_g.toml");
    std::fs::write(
        &g_config,
        format!(
            "[inputs]\nrepo = {:?}\n[eval]\ntask = \"grounding\"\nreferences = {:?}\npredictions = {:?}\n",
            repo.to_str().unwrap(),
            qa.to_str().unwrap(),
            g_preds.to_str().unwrap()
        ),
    )
    .unwrap();
    let g_report_path = dir.path().join("report_g.json");
    run_ok(&[
        "eval",
        "--config",
        g_config.to_str().unwrap(),
        "--out",
        g_report_path.to_str().unwrap(),
    ]);
    let g_report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&g_report_path).unwrap()).unwrap();
    // Depth-aligned 3D IoU is 1 up to the 2-decimal wire quantization of the
    // answer tokens. Projected IoU compares the 3D hull's projection against
    // the tight source rectangle, which differ for depth-sloped objects, so
    // it is well below 1 even for a perfect prediction.
    assert!(g_report["mean_iou3d"].as_f64().unwrap() > 0.95);
    assert!(g_report["mean_offset3d"].as_f64().unwrap() < 0.01);
    assert!(g_report["mean_proj_iou"].as_f64().unwrap() > 0.4);
    assert!(g_report["mean_proj_offset"].as_f64().unwrap() < 0.05);
    assert_eq!(g_report["unparsed"], 0);
}

#[test]
fn qagen_binary_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = common::build_corpus(dir.path(), 3, 77);
    let repo = dir.path().join("repo.jsonl");
    run_ok(&[
        "lift",
        "--config",
        corpus.config.to_str().unwrap(),
        "--out",
        repo.to_str().unwrap(),
    ]);
    let qa_config = dir.path().join("qa_config.toml");
    std::fs::write(
        &qa_config,
        format!("seed = 5\n[inputs]\nrepo = {:?}\n", repo.to_str().unwrap()),
    )
    .unwrap();
    let a = dir.path().join("a.jsonl");
    let b = dir.path().join("b.jsonl");
    for (out, workers) in [(&a, "1"), (&b, "4")] {
        run_ok(&[
            "qagen",
            "--config",
            qa_config.to_str().unwrap(),
            "--workers",
            workers,
            "--out",
            out.to_str().unwrap(),
        ]);
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = common::build_corpus(dir.path(), 2, 88);
    let repo = dir.path().join("repo.jsonl");
    run_ok(&[
        "lift",
        "--config",
        corpus.config.to_str().unwrap(),
        "--out",
        repo.to_str().unwrap(),
    ]);
    let qa_config = dir.path().join("qa_config.toml");
    std::fs::write(
        &qa_config,
        format!("seed = 5\n[inputs]\nrepo = {:?}\n", repo.to_str().unwrap()),
    )
    .unwrap();
    let a = dir.path().join("a.jsonl");
    let b = dir.path().join("b.jsonl");
    run_ok(&[
        "qagen",
        "--config",
        qa_config.to_str().unwrap(),
        "--out",
        a.to_str().unwrap(),
    ]);
    run_ok(&[
        "qagen",
        "--config",
        qa_config.to_str().unwrap(),
        "--seed",
        "999",
        "--out",
        b.to_str().unwrap(),
    ]);
    assert_ne!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn input_errors_exit_with_code_one() {
    let dir = tempfile::tempdir().unwrap();
    // Missing config file.
    let output = bin()
        .args([
            "lift",
            "--config",
            "/nonexistent.toml",
            "--out",
            "/tmp/x.jsonl",
        ])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&output.stderr).contains("error:"));

    // Config with an unknown key.
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "no_such_key = true\n").unwrap();
    let output = bin()
        .args([
            "lift",
            "--config",
            bad.to_str().unwrap(),
            "--out",
            "/tmp/x.jsonl",
        ])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));

    // Valid config but missing required inputs for the command.
    let empty = dir.path().join("empty.toml");
    std::fs::write(&empty, "").unwrap();
    let output = bin()
        .args([
            "qagen",
            "--config",
            empty.to_str().unwrap(),
            "--out",
            "/tmp/x.jsonl",
        ])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&output.stderr).contains("inputs.repo"));
}

#[test]
fn corrupt_repo_line_fails_strict_passes_lenient() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = common::build_corpus(dir.path(), 2, 11);
    let repo = dir.path().join("repo.jsonl");
    run_ok(&[
        "lift",
        "--config",
        corpus.config.to_str().unwrap(),
        "--out",
        repo.to_str().unwrap(),
    ]);
    // Corrupt the second line.
    let mut lines: Vec<String> = std::fs::read_to_string(&repo)
        .unwrap()
        .lines()
        .map(str::to_string)
        .collect();
    lines[1] = "{broken".into();
    std::fs::write(&repo, lines.join("\n") + "\n").unwrap();

    let strict_config = dir.path().join("strict.toml");
    std::fs::write(
        &strict_config,
        format!("[inputs]\nrepo = {:?}\n", repo.to_str().unwrap()),
    )
    .unwrap();
    let out = dir.path().join("qa.jsonl");
    let output = bin()
        .args([
            "qagen",
            "--config",
            strict_config.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1), "strict must abort");
    assert!(String::from_utf8_lossy(&output.stderr).contains("line 2"));

    let lenient_config = dir.path().join("lenient.toml");
    std::fs::write(
        &lenient_config,
        format!(
            "parse_mode = \"lenient\"\n[inputs]\nrepo = {:?}\n",
            repo.to_str().unwrap()
        ),
    )
    .unwrap();
    run_ok(&[
        "qagen",
        "--config",
        lenient_config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    // And --strict must override the lenient config.
    let output = bin()
        .args([
            "qagen",
            "--config",
            lenient_config.to_str().unwrap(),
            "--strict",
            "--out",
            out.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
}

#[test]
fn selfcheck_runs_clean() {
    let output = bin().arg("selfcheck").output().unwrap();
    assert_eq!(output.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.lines().filter(|l| l.starts_with("ok ")).count() >= 6);
}
