use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &[&str] = &["--users", "3", "--behaviors", "3", "--samples-per-cell", "6"];
const TRAIN: &[&str] = &["--pairs", "40", "--batches", "4", "--epochs", "2", "--feature-size", "8"];

fn rfbp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rfbp"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = rfbp(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    rfbp(args).status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(dir: &Path) {
    let mut args = vec!["synth", "--out", s(dir), "--seed", "3"];
    args.extend_from_slice(SMALL);
    let out = ok(&args);
    assert!(out.contains("54 samples"), "{out}");
}

#[test]
fn stepwise_workflow() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let pairs = tmp.path().join("pairs.csv");
    let model = tmp.path().join("model");
    let feats = tmp.path().join("features");
    let reports = tmp.path().join("reports");
    synth(&data);

    let out = ok(&["validate-source", "--dataset", s(&data), "--validators", "knn,nb"]);
    assert!(out.contains("VALID"), "{out}");

    let mut args = vec!["make-pairs", "--dataset", s(&data), "--out", s(&pairs), "--balance", "equal"];
    args.extend_from_slice(TRAIN);
    let out = ok(&args);
    assert!(out.contains("20 similar, 20 dissimilar"), "{out}");
    assert_eq!(fs::read_to_string(&pairs).unwrap().lines().count(), 41);

    let mut args = vec!["train", "--dataset", s(&data), "--pairs-file", s(&pairs), "--out", s(&model)];
    args.extend_from_slice(TRAIN);
    ok(&args);
    for f in ["checkpoint.bin", "history.json", "normalizer.json"] {
        assert!(model.join(f).is_file(), "missing {f}");
    }

    ok(&["extract", "--dataset", s(&data), "--model", s(&model), "--out", s(&feats), "--feature-size", "8"]);
    let manifest = fs::read_to_string(feats.join("manifest.json")).unwrap();
    let manifest: serde_json::Value = serde_json::from_str(&manifest).unwrap();
    assert_eq!(manifest["sample_shape"], serde_json::json!([8]));

    let out = ok(&["validate-features", "--dataset", s(&feats), "--validators", "knn,random", "--out", s(&reports)]);
    assert!(out.contains("knn") && out.contains("random"), "{out}");
    assert!(reports.join("features_knn_identity.json").is_file());
}

#[test]
fn run_writes_summary_and_is_repeatable() {
    let tmp = tempfile::tempdir().unwrap();
    let mut summaries = Vec::new();
    for name in ["a", "b"] {
        let out_dir = tmp.path().join(name);
        let mut args = vec!["run", "--out", s(&out_dir), "--validators", "knn", "--seed", "4"];
        args.extend_from_slice(SMALL);
        args.extend_from_slice(TRAIN);
        let out = ok(&args);
        assert!(out.contains("Original"), "{out}");
        summaries.push(fs::read(out_dir.join("summary.json")).unwrap());
        assert!(out_dir.join("checkpoint.bin").is_file());
    }
    assert_eq!(summaries[0], summaries[1]);
}

#[test]
fn sweep_prints_csv_and_reports_bad_values() {
    let mut args = vec!["sweep", "--param", "alpha", "--values", "0.5,2", "--validators", "nb"];
    args.extend_from_slice(SMALL);
    args.extend_from_slice(TRAIN);
    let out = rfbp(&args);
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(lines[0], "value,id_acc,beh_acc,diff");
    assert!(lines[1].starts_with("0.5,"));
    assert_eq!(lines[2], "2,,,");
    assert!(String::from_utf8(out.stderr).unwrap().contains("alpha = 2"));
}

#[test]
fn import_csv_round_trips_into_a_dataset() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = tmp.path().join("in.csv");
    fs::write(&csv, "0.5,1.5,0,1\n2.5,3.5,1,0\n").unwrap();
    let out_dir = tmp.path().join("ds");
    let out = ok(&["import", "--csv", s(&csv), "--shape", "2", "--out", s(&out_dir)]);
    assert!(out.contains("imported 2 samples"), "{out}");
    assert_eq!(fs::read(out_dir.join("data.f32")).unwrap().len(), 16);
}

#[test]
fn configuration_errors_exit_with_2() {
    assert_eq!(code(&["run", "--alpha", "1.5"]), 2);
    assert_eq!(code(&["run", "--no-such-flag"]), 2);
    assert_eq!(code(&["run", "--preset", "lidar"]), 2);
    assert_eq!(code(&["validate-source", "--dataset", "/nonexistent/rfbp"]), 2);
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("cfg.json");
    fs::write(&cfg, "{\"train\": {\"alpha\": \"high\"}}").unwrap();
    assert_eq!(code(&["run", "--config", s(&cfg)]), 2);
}

#[test]
fn stage_failures_exit_with_3() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("one-user");
    ok(&["synth", "--out", s(&data), "--users", "1", "--behaviors", "3", "--samples-per-cell", "4"]);
    let out = rfbp(&["make-pairs", "--dataset", s(&data), "--out", s(&tmp.path().join("p.csv"))]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8(out.stderr).unwrap().contains("rule 1"));
}

#[test]
fn corrupt_data_exits_with_4() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth(&data);
    let blob = data.join("data.f32");
    let mut bytes = fs::read(&blob).unwrap();
    bytes.truncate(bytes.len() - 4);
    fs::write(&blob, bytes).unwrap();
    assert_eq!(code(&["validate-source", "--dataset", s(&data)]), 4);

    let pairs = tmp.path().join("pairs.csv");
    fs::write(&pairs, "idx_a,idx_b,y_s,id_label\n0,1,7,0\n").unwrap();
    let good = tmp.path().join("good");
    synth(&good);
    let code = code(&["train", "--dataset", s(&good), "--pairs-file", s(&pairs), "--out", s(&tmp.path().join("m"))]);
    assert_eq!(code, 4);
}
