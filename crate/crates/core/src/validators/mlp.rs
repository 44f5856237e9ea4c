use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{argmax_smallest, Classifier, Matrix};
use crate::error::{Error, Result};
use crate::nn::{softmax_cross_entropy, Activation, ActivationLayer, Adam, AdamConfig, Layer, Linear, Mode};
use crate::tensor::Tensor;

/// Two fully connected layers (input -> hidden -> classes) with a ReLU in
/// between, trained with softmax cross-entropy and Adam on shuffled minibatches.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub hidden: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    layers: Option<(Linear<f32>, ActivationLayer<f32>, Linear<f32>)>,
}

impl Mlp {
    pub fn new(hidden: usize, epochs: usize, seed: u64) -> Self {
        Self {
            hidden,
            epochs,
            batch_size: 32,
            lr: 1e-3,
            seed,
            layers: None,
        }
    }
}

impl Default for Mlp {
    fn default() -> Self {
        Self::new(128, 100, 0)
    }
}

pub(crate) fn rows_tensor(x: &Matrix, idx: &[usize]) -> Tensor<f32> {
    let mut data = Vec::with_capacity(idx.len() * x.cols);
    for &i in idx {
        data.extend_from_slice(x.row(i));
    }
    Tensor::new(vec![idx.len(), x.cols], data).expect("row-major rows")
}

impl Classifier for Mlp {
    fn name(&self) -> String {
        "nn".into()
    }

    fn fit(&mut self, x: &Matrix, y: &[usize], num_classes: usize) -> Result<()> {
        if x.rows == 0 {
            return Err(Error::Param("mlp needs a non-empty training set".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut fc1 = Linear::new("mlp1", x.cols, self.hidden, &mut rng);
        let mut relu = ActivationLayer::new("mlp_relu", Activation::Relu);
        let mut fc2 = Linear::new("mlp2", self.hidden, num_classes, &mut rng);
        let mut opt = Adam::new(AdamConfig {
            lr: self.lr,
            ..AdamConfig::default()
        });
        let mut order: Vec<usize> = (0..x.rows).collect();
        for epoch in 0..self.epochs {
            order.shuffle(&mut rng);
            for chunk in order.chunks(self.batch_size.max(1)) {
                let input = rows_tensor(x, chunk);
                let targets: Vec<usize> = chunk.iter().map(|&i| y[i]).collect();
                let h = fc1.forward(&input, Mode::Train)?;
                let h = relu.forward(&h, Mode::Train)?;
                let logits = fc2.forward(&h, Mode::Train)?;
                let (loss, g) = softmax_cross_entropy(&logits, &targets)?;
                if !loss.is_finite() {
                    return Err(Error::NonFinite(format!("mlp loss is {loss} in epoch {epoch}")));
                }
                for p in fc1.params_mut().into_iter().chain(fc2.params_mut()) {
                    p.zero_grad();
                }
                let g = fc2.backward(&g)?;
                let g = relu.backward(&g)?;
                fc1.backward(&g)?;
                let mut params = fc1.params_mut();
                params.extend(fc2.params_mut());
                opt.step(&mut params)?;
            }
        }
        self.layers = Some((fc1, relu, fc2));
        Ok(())
    }

    fn predict(&mut self, x: &Matrix) -> Result<Vec<usize>> {
        let (fc1, relu, fc2) = self
            .layers
            .as_mut()
            .ok_or_else(|| Error::State("mlp predict called before fit".into()))?;
        let idx: Vec<usize> = (0..x.rows).collect();
        let mut out = Vec::with_capacity(x.rows);
        for chunk in idx.chunks(256) {
            let h = fc1.forward(&rows_tensor(x, chunk), Mode::Eval)?;
            let h = relu.forward(&h, Mode::Eval)?;
            let logits = fc2.forward(&h, Mode::Eval)?;
            let m = logits.row_len();
            for r in 0..chunk.len() {
                let row: Vec<f64> = logits.data()[r * m..(r + 1) * m].iter().map(|&v| v as f64).collect();
                out.push(argmax_smallest(&row));
            }
        }
        Ok(out)
    }
}
