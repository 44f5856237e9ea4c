//! End-to-end experiments: source validation, pairs -> train -> extract ->
//! evaluate, and parameter sweeps.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::{SignalDataset, Task};
use crate::error::{Error, Result};
use crate::model::{
    extract_all, save_checkpoint, train_with, EpochLoss, ExtractorConfig, HeadConfig, History,
    NetConfig, RfbpNet, TrainConfig, TrainingMeta,
};
use crate::nn::Activation;
use crate::pairing::{build_pairs, Balance, PairSet};
use crate::preprocess::Normalizer;
use crate::store;
use crate::synth::SynthConfig;
use crate::validators::{evaluate, quality, EvalReport, ModelSpec, SplitSpec};

/// Source data counts as feature-sufficient above this accuracy.
pub const VALID_THRESHOLD: f64 = 0.8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    /// Dataset directory; when absent the synthetic generator is used.
    pub dataset: Option<PathBuf>,
    pub synth: SynthConfig,
    pub balance: Balance,
    pub train: TrainConfig,
    pub extractor: ExtractorConfig,
    pub head: HeadConfig,
    /// Validators run on raw samples and on features. The first one is the
    /// designated feature-quality evaluator.
    pub validators: Vec<ModelSpec>,
    pub split: SplitSpec,
    /// Master seed; every stage derives its own seed from it.
    pub seed: u64,
    pub out: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: None,
            synth: SynthConfig::default(),
            balance: Balance::None,
            train: TrainConfig::default(),
            extractor: ExtractorConfig::default(),
            head: HeadConfig::default(),
            validators: vec!["nn".parse().expect("known validator")],
            split: SplitSpec::default(),
            seed: 0,
            out: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Rfid,
    Wifi,
}

impl FromStr for Preset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rfid" => Ok(Preset::Rfid),
            "wifi" => Ok(Preset::Wifi),
            other => Err(Error::Config(format!(
                "unknown preset '{other}' (expected rfid or wifi)"
            ))),
        }
    }
}

impl ExperimentConfig {
    /// RFID: `[2,30,49]` samples, alpha 0.7, 64 features. WiFi: `[9,56,10]`
    /// samples, alpha 0.8, 128 features.
    pub fn preset(preset: Preset) -> Self {
        let mut cfg = Self::default();
        match preset {
            Preset::Rfid => {
                cfg.train.alpha = 0.7;
                cfg.extractor.feature_size = 64;
            }
            Preset::Wifi => {
                cfg.synth.sample_shape = SynthConfig::wifi_shape();
                cfg.extractor.input_shape = SynthConfig::wifi_shape();
                cfg.train.alpha = 0.8;
                cfg.extractor.feature_size = 128;
            }
        }
        cfg
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_slice(&bytes)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Copies the master seed into every stage.
    pub fn apply_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.train.seed = derive_seed(seed, Stage::Train);
        self.split.seed = derive_seed(seed, Stage::Split);
    }

    pub fn pair_seed(&self) -> u64 {
        derive_seed(self.seed, Stage::Pairs)
    }

    pub fn net_seed(&self) -> u64 {
        derive_seed(self.seed, Stage::Init)
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.split.validate()?;
        if self.validators.is_empty() {
            return Err(Error::Config("at least one validator is required".into()));
        }
        if let Some(d) = &self.dataset {
            if !d.is_dir() {
                return Err(Error::Config(format!(
                    "dataset directory {} does not exist",
                    d.display()
                )));
            }
        }
        Ok(())
    }

    /// Reads the configured dataset or synthesizes one.
    pub fn load_dataset(&self) -> Result<SignalDataset> {
        match &self.dataset {
            Some(dir) => store::read_dataset(dir),
            None => crate::synth::synth_dataset(&self.synth),
        }
    }
}

#[derive(Clone, Copy)]
enum Stage {
    Pairs = 1,
    Init = 2,
    Train = 3,
    Split = 4,
}

/// SplitMix64 of the master seed offset by the stage tag.
fn derive_seed(seed: u64, stage: Stage) -> u64 {
    let mut z = seed.wrapping_add((stage as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceRow {
    pub model: String,
    pub identity_accuracy: f64,
    pub behavior_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceReport {
    pub rows: Vec<SourceRow>,
    pub threshold: f64,
    /// Some validator exceeds the threshold on both tasks.
    pub valid: bool,
    pub reports: Vec<EvalReport>,
}

impl fmt::Display for SourceReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<10} {:>9} {:>9}", "validator", "identity", "behavior")?;
        for r in &self.rows {
            writeln!(
                f,
                "{:<10} {:>8.2}% {:>8.2}%",
                r.model,
                100.0 * r.identity_accuracy,
                100.0 * r.behavior_accuracy
            )?;
        }
        write!(
            f,
            "{} (threshold {:.0}%)",
            if self.valid { "VALID" } else { "INVALID" },
            100.0 * self.threshold
        )
    }
}

pub fn validate_source(
    ds: &SignalDataset,
    validators: &[ModelSpec],
    split: &SplitSpec,
    threshold: f64,
) -> Result<SourceReport> {
    let mut rows = Vec::with_capacity(validators.len());
    let mut reports = Vec::new();
    for spec in validators {
        let id = evaluate(ds, Task::Identity, spec, split)?;
        let beh = evaluate(ds, Task::Behavior, spec, split)?;
        rows.push(SourceRow {
            model: spec.name().into(),
            identity_accuracy: id.accuracy,
            behavior_accuracy: beh.accuracy,
        });
        reports.push(id);
        reports.push(beh);
    }
    let valid = rows
        .iter()
        .any(|r| r.identity_accuracy > threshold && r.behavior_accuracy > threshold);
    Ok(SourceReport {
        rows,
        threshold,
        valid,
        reports,
    })
}

/// One line of the chance / raw / feature comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub task: Task,
    pub chance: f64,
    pub original: f64,
    pub features: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub evaluator: String,
    pub alpha: f64,
    pub feature_size: usize,
    pub rows: Vec<SummaryRow>,
    /// Identity minus behavior accuracy on features.
    pub quality: f64,
}

impl RunSummary {
    pub fn row(&self, task: Task) -> &SummaryRow {
        self.rows
            .iter()
            .find(|r| r.task == task)
            .expect("summary holds both tasks")
    }
}

impl fmt::Display for RunSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<10} {:>10} {:>10} {:>10}",
            "task", "Ran. Gue.", "Original", "RFBP-Net"
        )?;
        for r in &self.rows {
            writeln!(
                f,
                "{:<10} {:>9.2}% {:>9.2}% {:>9.2}%",
                r.task.name(),
                100.0 * r.chance,
                100.0 * r.original,
                100.0 * r.features
            )?;
        }
        write!(
            f,
            "evaluator {}, alpha {}, feature size {}, quality {:.4}",
            self.evaluator, self.alpha, self.feature_size, self.quality
        )
    }
}

/// Everything produced by one training run.
#[derive(Debug, Clone)]
pub struct TrainedRun {
    pub pairs: PairSet,
    pub normalizer: Normalizer,
    pub net: RfbpNet<f32>,
    pub history: History,
    pub features: SignalDataset,
    /// Per validator, identity then behavior.
    pub feature_reports: Vec<EvalReport>,
}

impl TrainedRun {
    /// Evaluator reports on features: (identity, behavior).
    pub fn primary(&self) -> (&EvalReport, &EvalReport) {
        (&self.feature_reports[0], &self.feature_reports[1])
    }
}

fn stage<T>(name: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| e.in_stage(name))
}

fn evaluate_all(ds: &SignalDataset, cfg: &ExperimentConfig) -> Result<Vec<EvalReport>> {
    let mut out = Vec::with_capacity(2 * cfg.validators.len());
    for spec in &cfg.validators {
        for task in Task::BOTH {
            out.push(evaluate(ds, task, spec, &cfg.split)?);
        }
    }
    Ok(out)
}

/// Raw-sample reports for every configured validator (identity, then behavior).
pub fn evaluate_raw(ds: &SignalDataset, cfg: &ExperimentConfig) -> Result<Vec<EvalReport>> {
    stage("validate-source", evaluate_all(ds, cfg))
}

/// Normalizes, builds pairs, trains, extracts and evaluates the features.
pub fn train_and_audit(
    ds: &SignalDataset,
    cfg: &ExperimentConfig,
    mut on_epoch: impl FnMut(&EpochLoss),
) -> Result<TrainedRun> {
    stage("config", cfg.validate())?;
    let all: Vec<usize> = (0..ds.len()).collect();
    let normalizer = stage("normalize", Normalizer::fit_dataset(ds, &all))?;
    let mut norm_ds = ds.clone();
    stage("normalize", normalizer.apply_dataset(&mut norm_ds))?;
    let pairs = stage(
        "make-pairs",
        build_pairs(&norm_ds, cfg.train.pairs, cfg.pair_seed(), cfg.balance, &dataset_id(ds)),
    )?;
    let net_cfg = NetConfig {
        extractor: ExtractorConfig {
            input_shape: ds.sample_shape().to_vec(),
            ..cfg.extractor.clone()
        },
        head: cfg.head.clone(),
        num_identities: ds.num_classes(Task::Identity),
        seed: cfg.net_seed(),
    };
    let mut net = stage("train", RfbpNet::new(net_cfg))?;
    let history = stage(
        "train",
        train_with(&mut net, &pairs, &norm_ds, &cfg.train, &mut on_epoch),
    )?;
    let features = stage("extract", extract_all(&mut net, &norm_ds))?;
    let feature_reports = stage("validate-features", evaluate_all(&features, cfg))?;
    Ok(TrainedRun {
        pairs,
        normalizer,
        net,
        history,
        features,
        feature_reports,
    })
}

fn dataset_id(ds: &SignalDataset) -> String {
    match ds.seed {
        Some(s) => format!("{}:{s}", ds.provenance["generator"].as_str().unwrap_or("dataset")),
        None => ds.provenance["source"].as_str().unwrap_or("dataset").to_string(),
    }
}

pub fn summarize(
    cfg: &ExperimentConfig,
    ds: &SignalDataset,
    raw: &[EvalReport],
    run: &TrainedRun,
) -> RunSummary {
    let (fid, fbeh) = run.primary();
    let rows = Task::BOTH
        .iter()
        .zip([(&raw[0], fid), (&raw[1], fbeh)])
        .map(|(&task, (r, f))| SummaryRow {
            task,
            chance: 1.0 / ds.num_classes(task) as f64,
            original: r.accuracy,
            features: f.accuracy,
        })
        .collect();
    RunSummary {
        evaluator: cfg.validators[0].name().into(),
        alpha: cfg.train.alpha,
        feature_size: cfg.extractor.feature_size,
        rows,
        quality: quality(fid, fbeh),
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub raw_reports: Vec<EvalReport>,
    pub run: TrainedRun,
    pub summary: RunSummary,
}

/// Full workflow. With an output directory, every artifact is written there.
pub fn run_experiment(cfg: &ExperimentConfig, ds: &SignalDataset) -> Result<RunOutcome> {
    let raw_reports = evaluate_raw(ds, cfg)?;
    if let Some(out) = &cfg.out {
        stage("write", write_reports(&raw_reports, &out.join("reports"), "raw"))?;
    }
    let run = train_and_audit(ds, cfg, |_| {})?;
    let summary = summarize(cfg, ds, &raw_reports, &run);
    if let Some(out) = &cfg.out {
        stage("write", write_run(cfg, &run, out))?;
        stage("write", store::write_json(&summary, &out.join("summary.json")))?;
        stage(
            "write",
            fs::write(out.join("summary.txt"), format!("{summary}\n"))
                .map_err(|e| Error::io(out.join("summary.txt"), e)),
        )?;
    }
    Ok(RunOutcome {
        raw_reports,
        run,
        summary,
    })
}

pub fn write_reports(reports: &[EvalReport], dir: &Path, prefix: &str) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for r in reports {
        let stem = format!("{prefix}_{}_{}", r.model, r.task);
        store::write_report(r, &dir.join(format!("{stem}.json")))?;
        store::write_confusion_csv(r, &dir.join(format!("{stem}_confusion.csv")))?;
    }
    Ok(())
}

/// Writes pairs, normalizer, checkpoint, history, features and feature reports.
pub fn write_run(cfg: &ExperimentConfig, run: &TrainedRun, out: &Path) -> Result<()> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    store::write_json(cfg, &out.join("config.json"))?;
    store::write_pairs(&run.pairs.records, &out.join("pairs.csv"))?;
    store::write_normalizer(&run.normalizer, out, "normalizer")?;
    let meta = TrainingMeta {
        config: cfg.train.clone(),
        history: run.history.clone(),
    };
    save_checkpoint(&run.net, Some(&meta), &out.join("checkpoint.bin"))?;
    store::write_json(&run.history, &out.join("history.json"))?;
    store::write_dataset(&run.features, &out.join("features"))?;
    write_reports(&run.feature_reports, &out.join("reports"), "features")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    Pairs,
    Alpha,
    FeatureSize,
    Activation,
}

impl FromStr for SweepParam {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pairs" => Ok(SweepParam::Pairs),
            "alpha" => Ok(SweepParam::Alpha),
            "feature_size" | "feature-size" => Ok(SweepParam::FeatureSize),
            "activation" => Ok(SweepParam::Activation),
            other => Err(Error::Config(format!(
                "unknown sweep parameter '{other}' (expected pairs, alpha, feature_size or activation)"
            ))),
        }
    }
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Pairs => "pairs",
            SweepParam::Alpha => "alpha",
            SweepParam::FeatureSize => "feature_size",
            SweepParam::Activation => "activation",
        }
    }

    /// Copy of `base` with the parameter set to `value`.
    pub fn apply(self, base: &ExperimentConfig, value: &str) -> Result<ExperimentConfig> {
        let mut cfg = base.clone();
        let bad = |e: String| Error::Config(format!("{} value '{value}': {e}", self.name()));
        match self {
            SweepParam::Pairs => cfg.train.pairs = value.parse().map_err(|e| bad(format!("{e}")))?,
            SweepParam::Alpha => cfg.train.alpha = value.parse().map_err(|e| bad(format!("{e}")))?,
            SweepParam::FeatureSize => {
                cfg.extractor.feature_size = value.parse().map_err(|e| bad(format!("{e}")))?
            }
            SweepParam::Activation => {
                cfg.extractor.final_activation = value.parse::<Activation>()?
            }
        }
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: String,
    pub id_acc: Option<f64>,
    pub beh_acc: Option<f64>,
    pub diff: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub parameter: SweepParam,
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    /// `value,id_acc,beh_acc,diff`; failed values keep their row with empty cells.
    pub fn to_csv(&self) -> String {
        let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut out = String::from("value,id_acc,beh_acc,diff\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{}\n",
                r.value,
                cell(r.id_acc),
                cell(r.beh_acc),
                cell(r.diff)
            ));
        }
        out
    }
}

/// One training run per value with the base seeds. A failing value is
/// recorded and the sweep moves on.
pub fn run_sweep(
    base: &ExperimentConfig,
    ds: &SignalDataset,
    param: SweepParam,
    values: &[String],
) -> Result<SweepResult> {
    if values.is_empty() {
        return Err(Error::Config("a sweep needs at least one value".into()));
    }
    let mut rows = Vec::with_capacity(values.len());
    for value in values {
        let outcome = param.apply(base, value).and_then(|mut cfg| {
            if let Some(out) = &base.out {
                cfg.out = Some(out.join(format!("{}_{value}", param.name())));
            }
            let run = train_and_audit(ds, &cfg, |_| {})?;
            if let Some(out) = &cfg.out {
                stage("write", write_run(&cfg, &run, out))?;
            }
            Ok(run)
        });
        rows.push(match outcome {
            Ok(run) => {
                let (id, beh) = run.primary();
                SweepRow {
                    value: value.clone(),
                    id_acc: Some(id.accuracy),
                    beh_acc: Some(beh.accuracy),
                    diff: Some(quality(id, beh)),
                    error: None,
                }
            }
            Err(e) => SweepRow {
                value: value.clone(),
                id_acc: None,
                beh_acc: None,
                diff: None,
                error: Some(e.to_string()),
            },
        });
    }
    let result = SweepResult {
        parameter: param,
        rows,
    };
    if let Some(out) = &base.out {
        fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
        let csv = out.join(format!("sweep_{}.csv", param.name()));
        fs::write(&csv, result.to_csv()).map_err(|e| Error::io(&csv, e))?;
        store::write_json(&result, &out.join(format!("sweep_{}.json", param.name())))?;
    }
    Ok(result)
}
