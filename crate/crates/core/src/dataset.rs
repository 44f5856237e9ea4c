//! In-memory labelled sample collection.

use serde_json::Value;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Fixed-shape `f32` samples, each with an identity and a behavior label.
///
/// Samples are stored contiguously in index order, each row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalDataset {
    sample_shape: Vec<usize>,
    data: Vec<f32>,
    identity: Vec<usize>,
    behavior: Vec<usize>,
    /// Free-form description of where the data came from.
    pub provenance: Value,
    pub seed: Option<u64>,
}

impl SignalDataset {
    pub fn new(
        sample_shape: Vec<usize>,
        data: Vec<f32>,
        identity: Vec<usize>,
        behavior: Vec<usize>,
    ) -> Result<Self> {
        if sample_shape.is_empty() || sample_shape.contains(&0) {
            return Err(Error::shape(
                "dataset",
                format!("sample shape must have positive dims, got {sample_shape:?}"),
            ));
        }
        let per: usize = sample_shape.iter().product();
        if identity.len() != behavior.len() {
            return Err(Error::shape(
                "dataset",
                format!(
                    "{} identity labels but {} behavior labels",
                    identity.len(),
                    behavior.len()
                ),
            ));
        }
        if data.len() != per * identity.len() {
            return Err(Error::shape(
                "dataset",
                format!(
                    "{} labels x {per} values per sample needs {} values, got {}",
                    identity.len(),
                    per * identity.len(),
                    data.len()
                ),
            ));
        }
        Ok(Self {
            sample_shape,
            data,
            identity,
            behavior,
            provenance: Value::Null,
            seed: None,
        })
    }

    pub fn with_provenance(mut self, provenance: Value, seed: Option<u64>) -> Self {
        self.provenance = provenance;
        self.seed = seed;
        self
    }

    pub fn len(&self) -> usize {
        self.identity.len()
    }

    pub fn is_empty(&self) -> bool {
        self.identity.is_empty()
    }

    pub fn sample_shape(&self) -> &[usize] {
        &self.sample_shape
    }

    pub fn sample_len(&self) -> usize {
        self.sample_shape.iter().product()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn sample(&self, i: usize) -> &[f32] {
        let n = self.sample_len();
        &self.data[i * n..(i + 1) * n]
    }

    pub fn identity_labels(&self) -> &[usize] {
        &self.identity
    }

    pub fn behavior_labels(&self) -> &[usize] {
        &self.behavior
    }

    pub fn labels(&self, task: Task) -> &[usize] {
        match task {
            Task::Identity => &self.identity,
            Task::Behavior => &self.behavior,
        }
    }

    /// Number of classes for a task, taken as `max label + 1`.
    pub fn num_classes(&self, task: Task) -> usize {
        self.labels(task).iter().max().map_or(0, |m| m + 1)
    }

    /// Distinct label values present for a task, ascending.
    pub fn distinct(&self, task: Task) -> Vec<usize> {
        let mut v = self.labels(task).to_vec();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// Stacks the selected samples into `[len(indices), sample_shape...]`.
    pub fn batch(&self, indices: &[usize]) -> Tensor<f32> {
        let n = self.sample_len();
        let mut data = Vec::with_capacity(indices.len() * n);
        for &i in indices {
            data.extend_from_slice(self.sample(i));
        }
        let mut shape = vec![indices.len()];
        shape.extend_from_slice(&self.sample_shape);
        Tensor::new(shape, data).expect("batch shape is consistent by construction")
    }

    /// Subset in the given index order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        let n = self.sample_len();
        let mut data = Vec::with_capacity(indices.len() * n);
        for &i in indices {
            data.extend_from_slice(self.sample(i));
        }
        Self {
            sample_shape: self.sample_shape.clone(),
            data,
            identity: indices.iter().map(|&i| self.identity[i]).collect(),
            behavior: indices.iter().map(|&i| self.behavior[i]).collect(),
            provenance: self.provenance.clone(),
            seed: self.seed,
        }
    }

    /// Applies `f` to every sample in place.
    pub fn map_samples(&mut self, mut f: impl FnMut(&mut [f32])) {
        let n = self.sample_len();
        for chunk in self.data.chunks_exact_mut(n) {
            f(chunk);
        }
    }
}

/// Which label column a classifier is asked to predict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Identity,
    Behavior,
}

impl Task {
    pub const BOTH: [Task; 2] = [Task::Identity, Task::Behavior];

    pub fn name(self) -> &'static str {
        match self {
            Task::Identity => "identity",
            Task::Behavior => "behavior",
        }
    }
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}
