use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{argmax_smallest, Classifier, Matrix};
use crate::error::{Error, Result};
use crate::model::{Extractor, ExtractorConfig};
use crate::nn::{softmax_cross_entropy, Adam, AdamConfig, Layer, Mode};
use crate::tensor::Tensor;

/// Classifier built from the extractor architecture with one output per class.
///
/// Needs `[C, H, W]` samples.
#[derive(Debug, Clone)]
pub struct CnnClassifier {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    net: Option<Extractor<f32>>,
}

impl CnnClassifier {
    pub fn new(epochs: usize, seed: u64) -> Self {
        Self {
            epochs,
            batch_size: 32,
            lr: 1e-3,
            seed,
            net: None,
        }
    }
}

impl Default for CnnClassifier {
    fn default() -> Self {
        Self::new(20, 0)
    }
}

fn batch(x: &Matrix, idx: &[usize]) -> Tensor<f32> {
    let mut data = Vec::with_capacity(idx.len() * x.cols);
    for &i in idx {
        data.extend_from_slice(x.row(i));
    }
    let mut shape = vec![idx.len()];
    shape.extend_from_slice(&x.sample_shape);
    Tensor::new(shape, data).expect("sample shape matches row width")
}

impl Classifier for CnnClassifier {
    fn name(&self) -> String {
        "cnn".into()
    }

    fn fit(&mut self, x: &Matrix, y: &[usize], num_classes: usize) -> Result<()> {
        if x.sample_shape.len() != 3 {
            return Err(Error::Config(format!(
                "cnn validator needs [C,H,W] samples, got shape {:?}",
                x.sample_shape
            )));
        }
        if x.rows < 2 {
            return Err(Error::Param("cnn needs at least two training samples".into()));
        }
        let cfg = ExtractorConfig {
            feature_size: num_classes.max(2),
            ..ExtractorConfig::for_input(&x.sample_shape)
        };
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut net = Extractor::new(&cfg, &mut rng)?;
        let mut opt = Adam::new(AdamConfig {
            lr: self.lr,
            ..AdamConfig::default()
        });
        let mut order: Vec<usize> = (0..x.rows).collect();
        for epoch in 0..self.epochs {
            order.shuffle(&mut rng);
            // Batch norm needs two samples; a trailing singleton is skipped.
            for chunk in order.chunks(self.batch_size.max(2)).filter(|c| c.len() >= 2) {
                let targets: Vec<usize> = chunk.iter().map(|&i| y[i]).collect();
                let logits = net.forward(&batch(x, chunk), Mode::Train)?;
                let (loss, g) = softmax_cross_entropy(&logits, &targets)?;
                if !loss.is_finite() {
                    return Err(Error::NonFinite(format!("cnn loss is {loss} in epoch {epoch}")));
                }
                for p in net.params_mut() {
                    p.zero_grad();
                }
                net.backward(&g)?;
                opt.step(&mut net.params_mut())?;
            }
        }
        self.net = Some(net);
        Ok(())
    }

    fn predict(&mut self, x: &Matrix) -> Result<Vec<usize>> {
        let net = self
            .net
            .as_mut()
            .ok_or_else(|| Error::State("cnn predict called before fit".into()))?;
        let idx: Vec<usize> = (0..x.rows).collect();
        let mut out = Vec::with_capacity(x.rows);
        for chunk in idx.chunks(256) {
            let logits = net.forward(&batch(x, chunk), Mode::Eval)?;
            let m = logits.row_len();
            for r in 0..chunk.len() {
                let row: Vec<f64> = logits.data()[r * m..(r + 1) * m].iter().map(|&v| v as f64).collect();
                out.push(argmax_smallest(&row));
            }
        }
        Ok(out)
    }
}
