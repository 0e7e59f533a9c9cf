use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use labelfix_service::{Client, Policy};

const TINY: &[&str] = &[
    "--set=groups=30",
    "--set=frames_min=5",
    "--set=frames_max=5",
    "--set=phase1_epochs=2",
    "--set=phase2_epochs=1",
    "--set=k_target=40",
    "--set=per_iteration=10",
    "--set=finetune_epochs=1",
    "--set=wdl_epochs=1",
];

fn labelfix(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_labelfix"))
        .args(args)
        .arg("--out")
        .arg(out)
        .args(TINY)
        .output()
        .expect("binary runs")
}

fn ok(out: &Path, args: &[&str]) -> String {
    let o = labelfix(out, args);
    assert!(o.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

fn full_run(out: &Path) {
    for verb in ["datagen", "split", "baseline", "al", "teacher", "pseudo", "student", "eval", "report"] {
        ok(out, &[verb]);
    }
}

#[test]
fn pipeline_runs_and_reruns_are_skipped() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    full_run(out);
    for f in ["report.txt", "reports/student.json", "al/audit.jsonl", "corrections.csv", "trend.json"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let report = fs::read_to_string(out.join("report.txt")).unwrap();
    for stage in ["noisy-baseline", "al-clean", "teacher", "student"] {
        assert!(report.contains(stage), "{stage} missing from report");
    }

    for verb in ["datagen", "split", "baseline", "al", "teacher", "pseudo", "student", "eval"] {
        assert!(ok(out, &[verb]).contains("up to date"), "{verb} reran");
    }
    assert!(!ok(out, &["baseline", "--force"]).contains("up to date"));

    ok(out, &["student", "--wdl"]);
    ok(out, &["eval"]);
    let report = ok(out, &["report"]);
    assert!(report.lines().any(|l| l.starts_with("student-wdl ")), "{report}");
}

#[test]
fn artifacts_carry_the_config_hash() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    full_run(out);
    let hash = fs::read_to_string(out.join("report.txt")).unwrap().lines().next().unwrap()["config ".len()..].to_string();
    assert_eq!(hash.len(), 64);
    for f in ["dataset.manifest", "pseudo.manifest", "corrections.csv", "effort.csv", "al/effort.csv"] {
        let first = fs::read_to_string(out.join(f)).unwrap().lines().next().unwrap().to_string();
        assert!(first.contains(&format!("config={hash}")), "{f}: {first}");
    }
    for f in ["split.json", "al/state.json", "trend.json", "teacher-validation.json", "reports/teacher.json"] {
        let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join(f)).unwrap()).unwrap();
        assert_eq!(v["config_hash"], hash.as_str(), "{f}");
    }
}

#[test]
fn zero_noise_summary_has_no_noisy_frames() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["datagen", "--set=p_absent=0", "--set=p_spurious=0"]);
    let s: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("dataset-summary.json")).unwrap()).unwrap();
    assert_eq!(s["noisy_frames"], 0);
    assert_eq!(s["closed_form_noisy_fraction"], 0.0);
}

#[test]
fn reports_are_byte_identical_across_runs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    full_run(a.path());
    full_run(b.path());
    for f in ["report.txt", "reports/student.json", "reports/teacher.json", "al/state.json", "dataset.manifest"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f} differs");
    }
}

#[test]
fn exit_codes_distinguish_failures() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    assert_eq!(labelfix(out, &["datagen", "--set=classes=1"]).status.code(), Some(2));
    assert_eq!(labelfix(out, &["datagen", "--set=no_such_key=1"]).status.code(), Some(2));
    assert_eq!(labelfix(out, &["student", "--label-smoothing", "1.5"]).status.code(), Some(2));

    let missing = labelfix(out, &["baseline"]);
    assert_eq!(missing.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("labelfix datagen"));
    assert_eq!(labelfix(out, &["report"]).status.code(), Some(3));
}

#[test]
fn perfect_predictions_score_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    ok(out, &["datagen"]);
    ok(out, &["split"]);
    let dataset = labelfix::load_manifest(&out.join("dataset.manifest")).unwrap();
    let split: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("split.json")).unwrap()).unwrap();
    let test: Vec<u64> = split["test_ids"].as_array().unwrap().iter().map(|v| v.as_u64().unwrap()).collect();
    let lines: Vec<String> = dataset
        .samples()
        .iter()
        .filter(|s| test.contains(&s.sample_id))
        .map(|s| serde_json::json!({"sample_id": s.sample_id, "labels": s.true_labels}).to_string())
        .collect();
    assert_eq!(lines.len(), test.len());
    let preds = out.join("perfect.jsonl");
    fs::write(&preds, lines.join("\n")).unwrap();

    ok(out, &["eval", "--predictions", preds.to_str().unwrap(), "--name", "oracle"]);
    let r: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("reports/oracle.json")).unwrap()).unwrap();
    for key in ["map", "mar", "maa", "maf1"] {
        assert_eq!(r["report"][key].as_f64(), Some(1.0), "{key}");
    }
}

#[test]
fn report_refuses_mixed_configurations() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    for verb in ["datagen", "split", "baseline", "eval"] {
        ok(out, &[verb]);
    }
    ok(out, &["report"]);
    fs::copy(out.join("reports/noisy-baseline.json"), dir.path().join("keep.json")).unwrap();
    for verb in ["datagen", "split", "baseline", "eval"] {
        ok(out, &[verb, "--seed", "5"]);
    }
    fs::copy(dir.path().join("keep.json"), out.join("reports/old-baseline.json")).unwrap();
    let o = labelfix(out, &["report", "--seed", "5"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("different configurations"));
}

#[test]
fn serve_oracle_drives_the_loop() {
    use std::io::{BufRead, BufReader};
    use std::process::Stdio;

    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    for verb in ["datagen", "split", "baseline"] {
        ok(out, &[verb]);
    }
    let mut child = Command::new(env!("CARGO_BIN_EXE_labelfix"))
        .args(["al", "--oracle", "serve", "--linger-secs", "0", "--set=serve_addr=127.0.0.1:0", "--out"])
        .arg(out)
        .args(TINY)
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut stdout = BufReader::new(child.stdout.take().unwrap());
    let mut line = String::new();
    while !line.starts_with("listening on ") {
        line.clear();
        assert!(stdout.read_line(&mut line).unwrap() > 0, "server exited early");
    }
    let url = line.trim().trim_start_matches("listening on ").to_string();
    let client = Client::new(url);
    let outcomes = client.run("tester", &Policy::AcceptSuggestion, 20).unwrap();
    assert_eq!(outcomes.last().unwrap().status, labelfix_service::Status::Done);
    assert!(child.wait().unwrap().success());

    let state: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("al/state.json")).unwrap()).unwrap();
    assert_eq!(state["oracle"], "serve");
    assert_eq!(state["clean_ids"].as_array().unwrap().len(), 40);
}
