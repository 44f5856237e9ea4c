use std::fs;
use std::path::{Path, PathBuf};

use rfbp_core::dataset::Task;
use rfbp_core::harness::{
    run_experiment, run_sweep, validate_source, ExperimentConfig, Preset, SweepParam,
    VALID_THRESHOLD,
};
use rfbp_core::model::{load_checkpoint, TrainConfig};
use rfbp_core::store;
use rfbp_core::synth::{synth_dataset, SynthConfig};
use rfbp_core::validators::{ModelSpec, SplitSpec};
use rfbp_core::ErrorKind;

fn tiny() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.synth = SynthConfig {
        num_users: 3,
        num_behaviors: 3,
        samples_per_cell: 8,
        sample_shape: vec![2, 12, 9],
        ..SynthConfig::default()
    };
    cfg.train = TrainConfig {
        pairs: 40,
        batches: 4,
        epochs: 3,
        ..TrainConfig::default()
    };
    cfg.extractor.fc1_width = 16;
    cfg.extractor.feature_size = 8;
    cfg.validators = vec![ModelSpec::Knn { k: 3 }, ModelSpec::Nb];
    cfg.apply_seed(11);
    cfg
}

fn tree_bytes(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    fn walk(dir: &Path, root: &Path, out: &mut Vec<(PathBuf, Vec<u8>)>) {
        for e in fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(&p, root, out);
            } else {
                out.push((p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    let mut out = Vec::new();
    walk(root, root, &mut out);
    out.sort();
    out
}

#[test]
fn full_run_writes_every_artifact_and_repeats_bitwise() {
    let tmp = tempfile::tempdir().unwrap();
    let mut outs = Vec::new();
    for name in ["a", "b"] {
        let mut cfg = tiny();
        cfg.out = Some(tmp.path().join(name));
        let ds = cfg.load_dataset().unwrap();
        let outcome = run_experiment(&cfg, &ds).unwrap();
        assert_eq!(outcome.raw_reports.len(), 4);
        assert_eq!(outcome.run.feature_reports.len(), 4);
        assert_eq!(outcome.summary.row(Task::Identity).chance, 1.0 / 3.0);
        outs.push(tmp.path().join(name));
    }
    let a = tree_bytes(&outs[0]);
    // config.json records the output directory, which differs by construction.
    let strip = |v: Vec<(PathBuf, Vec<u8>)>| -> Vec<(PathBuf, Vec<u8>)> {
        v.into_iter().filter(|(p, _)| p != Path::new("config.json")).collect()
    };
    assert_eq!(strip(a.clone()), strip(tree_bytes(&outs[1])));
    let names: Vec<String> = a.iter().map(|(p, _)| p.display().to_string()).collect();
    for expected in [
        "checkpoint.bin",
        "pairs.csv",
        "history.json",
        "summary.json",
        "summary.txt",
        "normalizer.json",
        "features/manifest.json",
        "reports/raw_knn_identity.json",
        "reports/features_nb_behavior_confusion.csv",
    ] {
        assert!(names.iter().any(|n| n == expected), "missing {expected} in {names:?}");
    }
    let ck = load_checkpoint(&outs[0].join("checkpoint.bin")).unwrap();
    assert_eq!(ck.training.unwrap().history.epochs.len(), 3);
    let feats = store::read_dataset(&outs[0].join("features")).unwrap();
    assert_eq!(feats.sample_shape(), &[8]);
    let summary = fs::read_to_string(outs[0].join("summary.txt")).unwrap();
    assert!(summary.contains("Ran. Gue.") && summary.contains("Original"), "{summary}");
}

#[test]
fn different_seed_gives_different_pairs() {
    let a = tiny();
    let mut b = tiny();
    b.apply_seed(12);
    assert_ne!(a.pair_seed(), b.pair_seed());
    assert_ne!(a.net_seed(), b.net_seed());
    assert_ne!(a.train.seed, b.train.seed);
}

#[test]
fn source_validation_verdicts() {
    let cfg = tiny();
    let validators = vec![ModelSpec::Knn { k: 3 }, ModelSpec::Nb, ModelSpec::Random];
    let ds = synth_dataset(&cfg.synth).unwrap();
    let r = validate_source(&ds, &validators, &SplitSpec::default(), VALID_THRESHOLD).unwrap();
    assert!(r.valid, "{r}");
    assert_eq!(r.rows.len(), 3);
    assert!(r.to_string().contains("VALID"));

    let flat = synth_dataset(&SynthConfig {
        behavior_gain: 0.0,
        ..cfg.synth.clone()
    })
    .unwrap();
    let r = validate_source(&flat, &validators, &SplitSpec::default(), VALID_THRESHOLD).unwrap();
    assert!(!r.valid, "{r}");
    assert!(r.to_string().contains("INVALID"));
}

#[test]
fn sweep_keeps_going_past_a_failing_value() {
    let cfg = tiny();
    let ds = cfg.load_dataset().unwrap();
    let values: Vec<String> = ["0.0", "1.5", "1.0"].iter().map(|s| s.to_string()).collect();
    let r = run_sweep(&cfg, &ds, SweepParam::Alpha, &values).unwrap();
    assert_eq!(r.rows.len(), 3);
    assert!(r.rows[0].error.is_none() && r.rows[2].error.is_none());
    assert!(r.rows[1].error.as_deref().unwrap().contains("alpha"));
    let csv = r.to_csv();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "value,id_acc,beh_acc,diff");
    assert_eq!(lines[2], "1.5,,,");
    assert_eq!(lines.len(), 4);
}

#[test]
fn sweep_over_activations_and_sizes() {
    let mut cfg = tiny();
    cfg.validators = vec![ModelSpec::Nb];
    let ds = cfg.load_dataset().unwrap();
    let acts: Vec<String> = ["none", "relu", "sigmoid", "tanh"].iter().map(|s| s.to_string()).collect();
    let r = run_sweep(&cfg, &ds, SweepParam::Activation, &acts).unwrap();
    assert!(r.rows.iter().all(|row| row.error.is_none()), "{r:?}");
    let sizes: Vec<String> = ["4", "1"].iter().map(|s| s.to_string()).collect();
    let r = run_sweep(&cfg, &ds, SweepParam::FeatureSize, &sizes).unwrap();
    assert!(r.rows[0].error.is_none());
    assert!(r.rows[1].error.is_some());
}

#[test]
fn presets_and_config_errors() {
    let wifi = ExperimentConfig::preset(Preset::Wifi);
    assert_eq!(wifi.synth.sample_shape, vec![9, 56, 10]);
    assert_eq!((wifi.train.alpha, wifi.extractor.feature_size), (0.8, 128));
    let rfid = ExperimentConfig::preset(Preset::Rfid);
    assert_eq!((rfid.train.alpha, rfid.extractor.feature_size), (0.7, 64));
    assert_eq!("lidar".parse::<Preset>().unwrap_err().kind(), ErrorKind::Config);

    let mut bad = tiny();
    bad.train.alpha = 1.2;
    assert_eq!(bad.validate().unwrap_err().kind(), ErrorKind::Config);
    let mut bad = tiny();
    bad.validators.clear();
    assert_eq!(bad.validate().unwrap_err().kind(), ErrorKind::Config);
}

#[test]
fn failing_stage_is_named() {
    let mut cfg = tiny();
    cfg.synth.num_users = 1;
    let ds = cfg.load_dataset().unwrap();
    let err = rfbp_core::harness::train_and_audit(&ds, &cfg, |_| {}).unwrap_err();
    assert!(err.to_string().contains("make-pairs"), "{err}");
    assert_eq!(err.kind(), ErrorKind::Stage);
}

#[test]
fn config_file_round_trips_through_json() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("cfg.json");
    let cfg = tiny();
    store::write_json(&cfg, &path).unwrap();
    assert_eq!(ExperimentConfig::from_json_file(&path).unwrap(), cfg);
    fs::write(&path, "{\"train\": {\"alpha\": \"high\"}}").unwrap();
    assert_eq!(ExperimentConfig::from_json_file(&path).unwrap_err().kind(), ErrorKind::Config);
}
