use std::f64::consts::PI;

use super::{argmax_smallest, Classifier, Matrix};
use crate::error::{Error, Result};

pub const VAR_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone)]
struct ClassModel {
    log_prior: f64,
    mean: Vec<f64>,
    var: Vec<f64>,
}

/// Gaussian naive Bayes with maximum-likelihood per-class variances.
#[derive(Debug, Clone)]
pub struct GaussianNb {
    pub var_floor: f64,
    classes: Vec<Option<ClassModel>>,
}

impl Default for GaussianNb {
    fn default() -> Self {
        Self {
            var_floor: VAR_FLOOR,
            classes: Vec::new(),
        }
    }
}

impl GaussianNb {
    /// Unnormalized log joint `log P(c) + sum_j log N(x_j | mu_cj, var_cj)` per
    /// class; `-inf` for classes absent from training.
    pub fn log_joint(&self, x: &[f32]) -> Vec<f64> {
        self.classes
            .iter()
            .map(|m| match m {
                None => f64::NEG_INFINITY,
                Some(m) => {
                    let mut s = m.log_prior;
                    for ((&v, &mu), &var) in x.iter().zip(&m.mean).zip(&m.var) {
                        let d = v as f64 - mu;
                        s -= 0.5 * (2.0 * PI * var).ln() + d * d / (2.0 * var);
                    }
                    s
                }
            })
            .collect()
    }

    /// Normalized posterior probabilities per class.
    pub fn posteriors(&self, x: &[f32]) -> Vec<f64> {
        let lj = self.log_joint(x);
        let max = lj.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = lj.iter().map(|&v| (v - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        exps.iter().map(|e| e / z).collect()
    }
}

impl Classifier for GaussianNb {
    fn name(&self) -> String {
        "nb".into()
    }

    fn fit(&mut self, x: &Matrix, y: &[usize], num_classes: usize) -> Result<()> {
        if x.rows == 0 {
            return Err(Error::Param("naive Bayes needs a non-empty training set".into()));
        }
        let d = x.cols;
        let mut sums = vec![vec![0.0f64; d]; num_classes];
        let mut counts = vec![0usize; num_classes];
        for i in 0..x.rows {
            counts[y[i]] += 1;
            for (s, &v) in sums[y[i]].iter_mut().zip(x.row(i)) {
                *s += v as f64;
            }
        }
        let means: Vec<Vec<f64>> = sums
            .iter()
            .zip(&counts)
            .map(|(s, &n)| s.iter().map(|v| v / n.max(1) as f64).collect())
            .collect();
        let mut sq = vec![vec![0.0f64; d]; num_classes];
        for i in 0..x.rows {
            let c = y[i];
            for ((acc, &v), mu) in sq[c].iter_mut().zip(x.row(i)).zip(&means[c]) {
                let e = v as f64 - mu;
                *acc += e * e;
            }
        }
        self.classes = (0..num_classes)
            .map(|c| {
                (counts[c] > 0).then(|| ClassModel {
                    log_prior: (counts[c] as f64 / x.rows as f64).ln(),
                    mean: means[c].clone(),
                    var: sq[c]
                        .iter()
                        .map(|s| (s / counts[c] as f64).max(self.var_floor))
                        .collect(),
                })
            })
            .collect();
        Ok(())
    }

    fn predict(&mut self, x: &Matrix) -> Result<Vec<usize>> {
        if self.classes.is_empty() {
            return Err(Error::State("naive Bayes predict called before fit".into()));
        }
        Ok((0..x.rows)
            .map(|i| argmax_smallest(&self.log_joint(x.row(i))))
            .collect())
    }
}
