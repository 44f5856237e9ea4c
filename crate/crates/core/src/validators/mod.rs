//! Classic classifiers used to audit raw samples and extracted features.

mod cnn;
mod knn;
mod mlp;
mod nb;
mod split;
mod svm;
mod tree;

pub use cnn::CnnClassifier;
pub use knn::Knn;
pub use mlp::Mlp;
pub use nb::{GaussianNb, VAR_FLOOR};
pub use split::{stratified_split, Split, SplitSpec};
pub use svm::LinearSvm;
pub use tree::{best_split, gini, DecisionTree, SplitChoice, TreeNode, DEFAULT_MAX_DEPTH};

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{SignalDataset, Task};
use crate::error::{Error, Result};
use crate::preprocess::Normalizer;

/// Row-major sample matrix that remembers the per-sample tensor shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub sample_shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(
                "matrix",
                format!("{rows}x{cols} needs {} values, got {}", rows * cols, data.len()),
            ));
        }
        Ok(Self {
            rows,
            cols,
            sample_shape: vec![cols],
            data,
        })
    }

    /// Flattened samples of `ds` at `indices`.
    pub fn from_dataset(ds: &SignalDataset, indices: &[usize]) -> Self {
        let cols = ds.sample_len();
        let mut data = Vec::with_capacity(indices.len() * cols);
        for &i in indices {
            data.extend_from_slice(ds.sample(i));
        }
        Self {
            rows: indices.len(),
            cols,
            sample_shape: ds.sample_shape().to_vec(),
            data,
        }
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }
}

pub trait Classifier {
    fn name(&self) -> String;
    fn fit(&mut self, x: &Matrix, y: &[usize], num_classes: usize) -> Result<()>;
    fn predict(&mut self, x: &Matrix) -> Result<Vec<usize>>;
}

/// Index of the largest score; the smallest index wins ties.
pub fn argmax_smallest(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

/// Uniformly random class, the chance baseline.
#[derive(Debug, Clone)]
pub struct RandomGuess {
    pub seed: u64,
    classes: usize,
}

impl RandomGuess {
    pub fn new(seed: u64) -> Self {
        Self { seed, classes: 0 }
    }
}

impl Classifier for RandomGuess {
    fn name(&self) -> String {
        "random".into()
    }

    fn fit(&mut self, _x: &Matrix, _y: &[usize], num_classes: usize) -> Result<()> {
        self.classes = num_classes;
        Ok(())
    }

    fn predict(&mut self, x: &Matrix) -> Result<Vec<usize>> {
        if self.classes == 0 {
            return Err(Error::State("random guess predict called before fit".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        Ok((0..x.rows).map(|_| rng.random_range(0..self.classes)).collect())
    }
}

/// Which classifier to run, with its hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum ModelSpec {
    Knn { k: usize },
    Nb,
    Dt { max_depth: usize },
    Svm { epochs: usize, lambda: f64 },
    Nn { hidden: usize, epochs: usize },
    Cnn { epochs: usize },
    Random,
}

impl ModelSpec {
    pub const NAMES: [&'static str; 7] = ["knn", "nb", "dt", "svm", "nn", "cnn", "random"];

    /// The vector-input validators reported for source data.
    pub fn classic() -> Vec<ModelSpec> {
        ["knn", "nb", "dt", "svm", "nn"]
            .iter()
            .map(|n| n.parse().expect("known name"))
            .collect()
    }

    pub fn name(&self) -> &'static str {
        match self {
            ModelSpec::Knn { .. } => "knn",
            ModelSpec::Nb => "nb",
            ModelSpec::Dt { .. } => "dt",
            ModelSpec::Svm { .. } => "svm",
            ModelSpec::Nn { .. } => "nn",
            ModelSpec::Cnn { .. } => "cnn",
            ModelSpec::Random => "random",
        }
    }

    pub fn build(&self, seed: u64) -> Box<dyn Classifier> {
        match *self {
            ModelSpec::Knn { k } => Box::new(Knn::new(k)),
            ModelSpec::Nb => Box::new(GaussianNb::default()),
            ModelSpec::Dt { max_depth } => Box::new(DecisionTree::new(max_depth)),
            ModelSpec::Svm { epochs, lambda } => Box::new(LinearSvm::new(epochs, lambda, seed)),
            ModelSpec::Nn { hidden, epochs } => Box::new(Mlp::new(hidden, epochs, seed)),
            ModelSpec::Cnn { epochs } => Box::new(CnnClassifier::new(epochs, seed)),
            ModelSpec::Random => Box::new(RandomGuess::new(seed)),
        }
    }
}

impl FromStr for ModelSpec {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let svm = LinearSvm::default();
        let mlp = Mlp::default();
        Ok(match s {
            "knn" => ModelSpec::Knn { k: 5 },
            "nb" => ModelSpec::Nb,
            "dt" => ModelSpec::Dt {
                max_depth: DEFAULT_MAX_DEPTH,
            },
            "svm" => ModelSpec::Svm {
                epochs: svm.epochs,
                lambda: svm.lambda,
            },
            "nn" => ModelSpec::Nn {
                hidden: mlp.hidden,
                epochs: mlp.epochs,
            },
            "cnn" => ModelSpec::Cnn {
                epochs: CnnClassifier::default().epochs,
            },
            "random" => ModelSpec::Random,
            other => {
                return Err(Error::Config(format!(
                    "unknown validator '{other}' (expected one of {})",
                    Self::NAMES.join(", ")
                )))
            }
        })
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: Task,
    pub model: String,
    pub num_classes: usize,
    pub train_size: usize,
    pub test_size: usize,
    pub accuracy: f64,
    /// `confusion[actual][predicted]`.
    pub confusion: Vec<Vec<u64>>,
    /// `None` for classes with no test samples.
    pub per_class_accuracy: Vec<Option<f64>>,
    pub warnings: Vec<String>,
}

impl EvalReport {
    pub fn from_predictions(
        task: Task,
        model: &str,
        truth: &[usize],
        predicted: &[usize],
        num_classes: usize,
    ) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(Error::shape(
                "eval_report",
                format!("{} labels but {} predictions", truth.len(), predicted.len()),
            ));
        }
        if truth.is_empty() {
            return Err(Error::Param("cannot score an empty test split".into()));
        }
        let mut confusion = vec![vec![0u64; num_classes]; num_classes];
        for (&t, &p) in truth.iter().zip(predicted) {
            if t >= num_classes || p >= num_classes {
                return Err(Error::Label(format!(
                    "label {t} / prediction {p} outside {num_classes} classes"
                )));
            }
            confusion[t][p] += 1;
        }
        let mut report = Self {
            task,
            model: model.to_string(),
            num_classes,
            train_size: 0,
            test_size: truth.len(),
            accuracy: 0.0,
            confusion,
            per_class_accuracy: Vec::new(),
            warnings: Vec::new(),
        };
        report.recompute();
        Ok(report)
    }

    /// Derives accuracy and per-class accuracy from the confusion matrix.
    fn recompute(&mut self) {
        let trace: u64 = (0..self.num_classes).map(|c| self.confusion[c][c]).sum();
        let total: u64 = self.confusion.iter().flatten().sum();
        self.accuracy = trace as f64 / total as f64;
        self.per_class_accuracy = self
            .confusion
            .iter()
            .enumerate()
            .map(|(c, row)| {
                let n: u64 = row.iter().sum();
                (n > 0).then(|| row[c] as f64 / n as f64)
            })
            .collect();
    }

    /// Checks the report's numbers against its own confusion matrix.
    pub fn validate(&self) -> Result<()> {
        let n = self.num_classes;
        if self.confusion.len() != n || self.confusion.iter().any(|r| r.len() != n) {
            return Err(Error::Integrity(format!("confusion matrix is not {n}x{n}")));
        }
        let total: u64 = self.confusion.iter().flatten().sum();
        if total != self.test_size as u64 {
            return Err(Error::Integrity(format!(
                "confusion matrix counts {total} samples, report says {}",
                self.test_size
            )));
        }
        let mut check = self.clone();
        check.recompute();
        if check.accuracy != self.accuracy || check.per_class_accuracy != self.per_class_accuracy {
            return Err(Error::Integrity(format!(
                "accuracy {} does not equal trace/total {}",
                self.accuracy, check.accuracy
            )));
        }
        Ok(())
    }
}

/// Identity accuracy minus behavior accuracy.
pub fn quality(identity: &EvalReport, behavior: &EvalReport) -> f64 {
    identity.accuracy - behavior.accuracy
}

/// Trains `spec` on the train split and scores it on the test split.
///
/// Samples are flattened (the CNN keeps their tensor shape) and min-max
/// normalized with extrema from the train split.
pub fn evaluate(
    ds: &SignalDataset,
    task: Task,
    spec: &ModelSpec,
    split_spec: &SplitSpec,
) -> Result<EvalReport> {
    let split = stratified_split(ds, split_spec)?;
    evaluate_split(ds, task, spec, &split, split_spec.seed)
}

pub fn evaluate_split(
    ds: &SignalDataset,
    task: Task,
    spec: &ModelSpec,
    split: &Split,
    seed: u64,
) -> Result<EvalReport> {
    let labels = ds.labels(task);
    let num_classes = ds.num_classes(task);
    let mut train = Matrix::from_dataset(ds, &split.train);
    let mut test = Matrix::from_dataset(ds, &split.test);
    let norm = Normalizer::fit(ds.sample_shape(), (0..train.rows).map(|i| train.row(i)))?;
    for m in [&mut train, &mut test] {
        let cols = m.cols;
        for row in m.data.chunks_exact_mut(cols) {
            norm.apply_in_place(row)?;
        }
    }
    let train_y: Vec<usize> = split.train.iter().map(|&i| labels[i]).collect();
    let test_y: Vec<usize> = split.test.iter().map(|&i| labels[i]).collect();
    let mut warnings = Vec::new();
    for c in ds.distinct(task) {
        if !train_y.contains(&c) {
            warnings.push(format!("{task} class {c} is absent from the train split"));
        }
    }
    let mut clf = spec.build(seed);
    clf.fit(&train, &train_y, num_classes)?;
    let pred = clf.predict(&test)?;
    let mut report = EvalReport::from_predictions(task, spec.name(), &test_y, &pred, num_classes)?;
    report.train_size = train.rows;
    report.warnings = warnings;
    Ok(report)
}
