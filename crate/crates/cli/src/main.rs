//! `rfbp`: command-line driver for the feature extraction workflow.
//!
//! Exit codes: 0 success, 2 configuration error, 3 stage failure,
//! 4 invariant violation (corrupt or inconsistent data).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rfbp_core::dataset::Task;
use rfbp_core::harness::{
    self, ExperimentConfig, Preset, SweepParam, VALID_THRESHOLD,
};
use rfbp_core::model::{
    extract_all, load_checkpoint, save_checkpoint, train_with, ExtractorConfig, NetConfig,
    RfbpNet, TrainingMeta,
};
use rfbp_core::nn::Activation;
use rfbp_core::pairing::{build_pairs, pair_stats, Balance, PairSet};
use rfbp_core::preprocess::Normalizer;
use rfbp_core::store;
use rfbp_core::synth::synth_dataset;
use rfbp_core::validators::{evaluate, ModelSpec};
use rfbp_core::{Error, ErrorKind, Result};

#[derive(Parser)]
#[command(name = "rfbp", version, about = "Identity-preserving, behavior-suppressing feature extraction for RF data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset.
    Synth(Common),
    /// Check that raw data supports both identity and behavior recognition.
    ValidateSource(Common),
    /// Build training pairs for a dataset.
    MakePairs(Common),
    /// Train the Siamese network on a dataset and a pair file.
    Train {
        #[command(flatten)]
        common: Common,
        /// pairs.csv produced by make-pairs.
        #[arg(long)]
        pairs_file: PathBuf,
    },
    /// Extract features with a trained checkpoint.
    Extract {
        #[command(flatten)]
        common: Common,
        /// Directory written by `train`.
        #[arg(long)]
        model: PathBuf,
    },
    /// Audit a feature dataset with the validators.
    ValidateFeatures(Common),
    /// Full workflow: pairs, train, extract, evaluate.
    Run(Common),
    /// One full run per parameter value.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// pairs, alpha, feature_size or activation.
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
    },
    /// Convert a CSV of flattened samples plus labels into a dataset directory.
    Import {
        #[arg(long)]
        csv: PathBuf,
        /// Sample shape, e.g. 2,30,49.
        #[arg(long, value_delimiter = ',', required = true)]
        shape: Vec<usize>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args, Clone, Default)]
struct Common {
    /// JSON experiment config; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// rfid or wifi.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Number of training pairs.
    #[arg(long)]
    pairs: Option<usize>,
    #[arg(long)]
    batches: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    feature_size: Option<usize>,
    #[arg(long)]
    activation: Option<String>,
    #[arg(long)]
    balance: Option<String>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    margin: Option<f64>,
    /// Comma-separated validator names (knn, nb, dt, svm, nn, cnn, random).
    #[arg(long, value_delimiter = ',')]
    validators: Option<Vec<String>>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Synthetic generator: number of users.
    #[arg(long)]
    users: Option<usize>,
    /// Synthetic generator: number of behaviors.
    #[arg(long)]
    behaviors: Option<usize>,
    /// Synthetic generator: samples per (user, behavior) cell.
    #[arg(long)]
    samples_per_cell: Option<usize>,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    identity_gain: Option<f64>,
    #[arg(long)]
    behavior_gain: Option<f64>,
}

impl Common {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut cfg = match (&self.config, &self.preset) {
            (Some(path), _) => ExperimentConfig::from_json_file(path)?,
            (None, Some(p)) => ExperimentConfig::preset(p.parse::<Preset>()?),
            (None, None) => ExperimentConfig::default(),
        };
        if self.config.is_some() {
            if let Some(p) = &self.preset {
                let preset = ExperimentConfig::preset(p.parse::<Preset>()?);
                cfg.train.alpha = preset.train.alpha;
                cfg.extractor.feature_size = preset.extractor.feature_size;
                cfg.synth.sample_shape = preset.synth.sample_shape;
            }
        }
        if let Some(d) = &self.dataset {
            cfg.dataset = Some(d.clone());
        }
        let synth = &mut cfg.synth;
        synth.num_users = self.users.unwrap_or(synth.num_users);
        synth.num_behaviors = self.behaviors.unwrap_or(synth.num_behaviors);
        synth.samples_per_cell = self.samples_per_cell.unwrap_or(synth.samples_per_cell);
        synth.noise_sigma = self.noise.unwrap_or(synth.noise_sigma);
        synth.identity_gain = self.identity_gain.unwrap_or(synth.identity_gain);
        synth.behavior_gain = self.behavior_gain.unwrap_or(synth.behavior_gain);
        if let Some(v) = self.alpha {
            cfg.train.alpha = v;
        }
        if let Some(v) = self.pairs {
            cfg.train.pairs = v;
        }
        if let Some(v) = self.batches {
            cfg.train.batches = v;
        }
        if let Some(v) = self.epochs {
            cfg.train.epochs = v;
        }
        if let Some(v) = self.feature_size {
            cfg.extractor.feature_size = v;
        }
        if let Some(v) = &self.activation {
            cfg.extractor.final_activation = v.parse::<Activation>()?;
        }
        if let Some(v) = &self.balance {
            cfg.balance = v.parse::<Balance>()?;
        }
        if let Some(v) = self.lr {
            cfg.train.lr = v;
        }
        if let Some(v) = self.margin {
            cfg.train.margin = v;
        }
        if let Some(names) = &self.validators {
            cfg.validators = names
                .iter()
                .map(|n| n.parse::<ModelSpec>())
                .collect::<Result<_>>()?;
        }
        cfg.apply_seed(self.seed.unwrap_or(cfg.seed));
        if let Some(o) = &self.out {
            cfg.out = Some(o.clone());
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn require_out(&self, cfg: &ExperimentConfig) -> Result<PathBuf> {
        cfg.out
            .clone()
            .ok_or_else(|| Error::Config("--out is required for this command".into()))
    }
}

fn require_dataset(cfg: &ExperimentConfig) -> Result<&Path> {
    cfg.dataset
        .as_deref()
        .ok_or_else(|| Error::Config("--dataset is required for this command".into()))
}

fn exit_code(e: &Error) -> u8 {
    match e.kind() {
        ErrorKind::Config => 2,
        ErrorKind::Stage => 3,
        ErrorKind::Invariant => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Synth(c) => cmd_synth(&c),
        Command::ValidateSource(c) => cmd_validate_source(&c),
        Command::MakePairs(c) => cmd_make_pairs(&c),
        Command::Train { common, pairs_file } => cmd_train(&common, &pairs_file),
        Command::Extract { common, model } => cmd_extract(&common, &model),
        Command::ValidateFeatures(c) => cmd_validate_features(&c),
        Command::Run(c) => cmd_run(&c),
        Command::Sweep {
            common,
            param,
            values,
        } => cmd_sweep(&common, &param, &values),
        Command::Import { csv, shape, out } => cmd_import(&csv, &shape, &out),
    }
}

fn cmd_synth(c: &Common) -> Result<()> {
    let mut cfg = c.config()?;
    if let Some(seed) = c.seed {
        cfg.synth.seed = seed;
    }
    let out = c.require_out(&cfg)?;
    let ds = synth_dataset(&cfg.synth)?;
    store::write_dataset(&ds, &out)?;
    println!(
        "wrote {} samples of shape {:?} ({} users x {} behaviors) to {}",
        ds.len(),
        ds.sample_shape(),
        ds.distinct(Task::Identity).len(),
        ds.distinct(Task::Behavior).len(),
        out.display()
    );
    Ok(())
}

fn cmd_validate_source(c: &Common) -> Result<()> {
    let mut cfg = c.config()?;
    if c.validators.is_none() && c.config.is_none() {
        cfg.validators = ModelSpec::classic();
    }
    let ds = store::read_dataset(require_dataset(&cfg)?)?;
    let report = harness::validate_source(&ds, &cfg.validators, &cfg.split, VALID_THRESHOLD)?;
    println!("{report}");
    if let Some(out) = &cfg.out {
        std::fs::create_dir_all(out).map_err(|e| Error::Config(format!("{}: {e}", out.display())))?;
        store::write_json(&report, &out.join("source_report.json"))?;
        harness::write_reports(&report.reports, &out.join("reports"), "raw")?;
    }
    Ok(())
}

fn cmd_make_pairs(c: &Common) -> Result<()> {
    let cfg = c.config()?;
    let out = c.require_out(&cfg)?;
    let ds = store::read_dataset(require_dataset(&cfg)?)?;
    let pairs = build_pairs(
        &ds,
        cfg.train.pairs,
        cfg.pair_seed(),
        cfg.balance,
        &require_dataset(&cfg)?.display().to_string(),
    )?;
    store::write_pairs(&pairs.records, &out)?;
    let stats = pair_stats(&pairs, &ds)?;
    println!(
        "wrote {} pairs ({} similar, {} dissimilar, duplicate rate {:.4}) to {}",
        stats.total,
        stats.similar,
        stats.dissimilar,
        stats.duplicate_rate,
        out.display()
    );
    Ok(())
}

fn cmd_train(c: &Common, pairs_file: &Path) -> Result<()> {
    let cfg = c.config()?;
    let out = c.require_out(&cfg)?;
    let dataset_dir = require_dataset(&cfg)?;
    let mut ds = store::read_dataset(dataset_dir)?;
    let records = store::read_pairs(pairs_file)?;
    let pairs = PairSet {
        target: records.len(),
        records,
        dataset_id: dataset_dir.display().to_string(),
        seed: cfg.pair_seed(),
    };
    let all: Vec<usize> = (0..ds.len()).collect();
    let norm = Normalizer::fit_dataset(&ds, &all)?;
    norm.apply_dataset(&mut ds)?;
    let mut net = RfbpNet::new(NetConfig {
        extractor: ExtractorConfig {
            input_shape: ds.sample_shape().to_vec(),
            ..cfg.extractor.clone()
        },
        head: cfg.head.clone(),
        num_identities: ds.num_classes(Task::Identity),
        seed: cfg.net_seed(),
    })?;
    let history = train_with(&mut net, &pairs, &ds, &cfg.train, |e| {
        if e.epoch % 20 == 0 || e.epoch + 1 == cfg.train.epochs {
            println!(
                "epoch {:>4}  contrastive {:.6}  identity {:.6}  joint {:.6}",
                e.epoch, e.loss_c, e.loss_p, e.loss_f
            );
        }
    })
    .map_err(|e| e.in_stage("train"))?;
    std::fs::create_dir_all(&out).map_err(|e| Error::Config(format!("{}: {e}", out.display())))?;
    store::write_normalizer(&norm, &out, "normalizer")?;
    save_checkpoint(
        &net,
        Some(&TrainingMeta {
            config: cfg.train.clone(),
            history: history.clone(),
        }),
        &out.join("checkpoint.bin"),
    )?;
    store::write_json(&history, &out.join("history.json"))?;
    println!("{} optimizer steps; model written to {}", history.steps, out.display());
    Ok(())
}

fn cmd_extract(c: &Common, model: &Path) -> Result<()> {
    let cfg = c.config()?;
    let out = c.require_out(&cfg)?;
    let mut ds = store::read_dataset(require_dataset(&cfg)?)?;
    let norm = store::read_normalizer(model, "normalizer")?;
    norm.apply_dataset(&mut ds)?;
    let mut ck = load_checkpoint(&model.join("checkpoint.bin"))?;
    let feats = extract_all(&mut ck.net, &ds).map_err(|e| e.in_stage("extract"))?;
    store::write_dataset(&feats, &out)?;
    println!(
        "wrote {} feature vectors of width {} to {}",
        feats.len(),
        ck.net.feature_size(),
        out.display()
    );
    Ok(())
}

fn cmd_validate_features(c: &Common) -> Result<()> {
    let cfg = c.config()?;
    let feats = store::read_dataset(require_dataset(&cfg)?)?;
    let mut reports = Vec::new();
    println!("{:<10} {:>9} {:>9} {:>9}", "validator", "identity", "behavior", "quality");
    for spec in &cfg.validators {
        let id = evaluate(&feats, Task::Identity, spec, &cfg.split)?;
        let beh = evaluate(&feats, Task::Behavior, spec, &cfg.split)?;
        println!(
            "{:<10} {:>8.2}% {:>8.2}% {:>9.4}",
            spec.name(),
            100.0 * id.accuracy,
            100.0 * beh.accuracy,
            id.accuracy - beh.accuracy
        );
        reports.push(id);
        reports.push(beh);
    }
    if let Some(out) = &cfg.out {
        harness::write_reports(&reports, out, "features")?;
    }
    Ok(())
}

fn cmd_run(c: &Common) -> Result<()> {
    let cfg = c.config()?;
    let ds = cfg.load_dataset()?;
    let outcome = harness::run_experiment(&cfg, &ds)?;
    println!("{}", outcome.summary);
    Ok(())
}

fn cmd_sweep(c: &Common, param: &str, values: &[String]) -> Result<()> {
    let cfg = c.config()?;
    let param: SweepParam = param.parse()?;
    let ds = cfg.load_dataset()?;
    let result = harness::run_sweep(&cfg, &ds, param, values)?;
    print!("{}", result.to_csv());
    for r in &result.rows {
        if let Some(e) = &r.error {
            eprintln!("{} = {}: {e}", param.name(), r.value);
        }
    }
    Ok(())
}

fn cmd_import(csv: &Path, shape: &[usize], out: &Path) -> Result<()> {
    let ds = store::import_csv(csv, shape)?;
    store::write_dataset(&ds, out)?;
    println!("imported {} samples of shape {shape:?} into {}", ds.len(), out.display());
    Ok(())
}
