use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{argmax_smallest, Classifier, Matrix};
use crate::error::{Error, Result};

const ETA0: f64 = 0.1;

/// One-vs-rest linear SVM trained by Pegasos-style subgradient descent on the
/// L2-regularized hinge loss. The bias is not regularized.
#[derive(Debug, Clone)]
pub struct LinearSvm {
    pub epochs: usize,
    pub lambda: f64,
    pub seed: u64,
    /// Per class: weights followed by the bias.
    models: Vec<Vec<f64>>,
}

impl LinearSvm {
    pub fn new(epochs: usize, lambda: f64, seed: u64) -> Self {
        Self {
            epochs,
            lambda,
            seed,
            models: Vec::new(),
        }
    }

    fn score(model: &[f64], x: &[f32]) -> f64 {
        let d = x.len();
        model[..d]
            .iter()
            .zip(x)
            .map(|(&w, &v)| w * v as f64)
            .sum::<f64>()
            + model[d]
    }
}

impl Default for LinearSvm {
    fn default() -> Self {
        Self::new(30, 1e-4, 0)
    }
}

impl Classifier for LinearSvm {
    fn name(&self) -> String {
        "svm".into()
    }

    fn fit(&mut self, x: &Matrix, y: &[usize], num_classes: usize) -> Result<()> {
        if x.rows == 0 {
            return Err(Error::Param("svm needs a non-empty training set".into()));
        }
        if !(self.lambda > 0.0) {
            return Err(Error::Param(format!("svm lambda must be positive, got {}", self.lambda)));
        }
        let d = x.cols;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut order: Vec<usize> = (0..x.rows).collect();
        self.models = vec![vec![0.0; d + 1]; num_classes];
        // Offset so the first step size is ETA0 rather than 1 / lambda.
        let t0 = 1.0 / (self.lambda * ETA0);
        let mut t = 0u64;
        for _ in 0..self.epochs {
            order.shuffle(&mut rng);
            for &i in &order {
                t += 1;
                let eta = 1.0 / (self.lambda * (t as f64 + t0));
                let shrink = 1.0 - eta * self.lambda;
                let xi = x.row(i);
                for (c, m) in self.models.iter_mut().enumerate() {
                    let target = if y[i] == c { 1.0 } else { -1.0 };
                    let margin = target * Self::score(m, xi);
                    for w in &mut m[..d] {
                        *w *= shrink;
                    }
                    if margin < 1.0 {
                        for (w, &v) in m[..d].iter_mut().zip(xi) {
                            *w += eta * target * v as f64;
                        }
                        m[d] += eta * target;
                    }
                }
            }
        }
        Ok(())
    }

    fn predict(&mut self, x: &Matrix) -> Result<Vec<usize>> {
        if self.models.is_empty() {
            return Err(Error::State("svm predict called before fit".into()));
        }
        Ok((0..x.rows)
            .map(|i| {
                let scores: Vec<f64> = self.models.iter().map(|m| Self::score(m, x.row(i))).collect();
                argmax_smallest(&scores)
            })
            .collect())
    }
}
