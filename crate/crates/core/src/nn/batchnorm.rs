use super::{Layer, Mode, Parameter};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Per-channel batch normalisation over `[N,C,H,W]`.
///
/// Running statistics follow `running = (1 - momentum) * running + momentum * batch`,
/// where the batch variance is the unbiased estimate.
#[derive(Debug, Clone)]
pub struct BatchNorm2d<T: Scalar = f32> {
    pub gamma: Parameter<T>,
    pub beta: Parameter<T>,
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
    pub eps: f64,
    pub momentum: f64,
    cache: Option<Cache<T>>,
}

#[derive(Debug, Clone)]
struct Cache<T: Scalar> {
    shape: Vec<usize>,
    mode: Mode,
    x_hat: Vec<T>,
    inv_std: Vec<T>,
}

impl<T: Scalar> BatchNorm2d<T> {
    pub fn new(name: &str, channels: usize) -> Self {
        Self {
            gamma: Parameter::new(
                format!("{name}.gamma"),
                Tensor::full(&[channels], T::one()),
            ),
            beta: Parameter::new(format!("{name}.beta"), Tensor::zeros(&[channels])),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::full(&[channels], T::one()),
            eps: BN_EPS,
            momentum: BN_MOMENTUM,
            cache: None,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.value.len()
    }

    pub fn cast<U: Scalar>(&self) -> BatchNorm2d<U> {
        BatchNorm2d {
            gamma: self.gamma.cast(),
            beta: self.beta.cast(),
            running_mean: self.running_mean.cast(),
            running_var: self.running_var.cast(),
            eps: self.eps,
            momentum: self.momentum,
            cache: None,
        }
    }

    fn check(&self, shape: &[usize]) -> Result<(usize, usize, usize)> {
        let [n, c, h, w] = *shape else {
            return Err(Error::shape(
                "batchnorm2d",
                format!("input must be [N,C,H,W], got {shape:?}"),
            ));
        };
        if c != self.channels() {
            return Err(Error::shape(
                "batchnorm2d",
                format!("channel axis: expected {}, found {c}", self.channels()),
            ));
        }
        Ok((n, c, h * w))
    }
}

impl<T: Scalar> Layer<T> for BatchNorm2d<T> {
    fn forward(&mut self, input: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let (n, c, hw) = self.check(input.shape())?;
        if mode == Mode::Train && n < 2 {
            return Err(Error::Param(
                "batchnorm2d in train mode needs a batch of at least 2 samples".into(),
            ));
        }
        let x = input.data();
        let m = n * hw;
        let eps = T::from_f64(self.eps);
        let mut x_hat = vec![T::zero(); x.len()];
        let mut out = vec![T::zero(); x.len()];
        let mut inv_std = vec![T::zero(); c];
        for ch in 0..c {
            let (mean, var) = match mode {
                Mode::Train => {
                    let mut sum = 0.0f64;
                    for b in 0..n {
                        sum += x[(b * c + ch) * hw..][..hw]
                            .iter()
                            .map(|v| v.as_f64())
                            .sum::<f64>();
                    }
                    let mean = sum / m as f64;
                    let mut ss = 0.0f64;
                    for b in 0..n {
                        ss += x[(b * c + ch) * hw..][..hw]
                            .iter()
                            .map(|v| (v.as_f64() - mean).powi(2))
                            .sum::<f64>();
                    }
                    let var = ss / m as f64;
                    let mo = self.momentum;
                    let rm = &mut self.running_mean.data_mut()[ch];
                    *rm = T::from_f64((1.0 - mo) * rm.as_f64() + mo * mean);
                    let unbiased = if m > 1 { ss / (m - 1) as f64 } else { var };
                    let rv = &mut self.running_var.data_mut()[ch];
                    *rv = T::from_f64((1.0 - mo) * rv.as_f64() + mo * unbiased);
                    (T::from_f64(mean), T::from_f64(var))
                }
                Mode::Eval => (self.running_mean.data()[ch], self.running_var.data()[ch]),
            };
            let istd = T::one() / (var + eps).sqrt();
            inv_std[ch] = istd;
            let gamma = self.gamma.value.data()[ch];
            let beta = self.beta.value.data()[ch];
            for b in 0..n {
                let off = (b * c + ch) * hw;
                for i in off..off + hw {
                    let xh = (x[i] - mean) * istd;
                    x_hat[i] = xh;
                    out[i] = gamma * xh + beta;
                }
            }
        }
        self.cache = Some(Cache {
            shape: input.shape().to_vec(),
            mode,
            x_hat,
            inv_std,
        });
        Tensor::new(input.shape().to_vec(), out)
    }

    fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let cache = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::State("batchnorm2d backward called before forward".into()))?;
        grad_out.expect_shape("batchnorm2d_backward", &cache.shape)?;
        let (n, c, hw) = (cache.shape[0], cache.shape[1], cache.shape[2] * cache.shape[3]);
        let m = T::from_f64((n * hw) as f64);
        let g = grad_out.data();
        let mut dx = vec![T::zero(); g.len()];
        for ch in 0..c {
            let gamma = self.gamma.value.data()[ch];
            let mut sum_g = T::zero();
            let mut sum_gx = T::zero();
            for b in 0..n {
                let off = (b * c + ch) * hw;
                for i in off..off + hw {
                    sum_g += g[i];
                    sum_gx += g[i] * cache.x_hat[i];
                }
            }
            self.beta.grad.data_mut()[ch] += sum_g;
            self.gamma.grad.data_mut()[ch] += sum_gx;
            let istd = cache.inv_std[ch];
            for b in 0..n {
                let off = (b * c + ch) * hw;
                for i in off..off + hw {
                    dx[i] = match cache.mode {
                        Mode::Train => {
                            gamma * istd / m * (m * g[i] - sum_g - cache.x_hat[i] * sum_gx)
                        }
                        Mode::Eval => gamma * istd * g[i],
                    };
                }
            }
        }
        Tensor::new(cache.shape.clone(), dx)
    }

    fn params(&self) -> Vec<&Parameter<T>> {
        vec![&self.gamma, &self.beta]
    }

    fn params_mut(&mut self) -> Vec<&mut Parameter<T>> {
        vec![&mut self.gamma, &mut self.beta]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_channels_normalise_to_zero() {
        let mut bn = BatchNorm2d::<f32>::new("bn", 2);
        let mut x = Tensor::<f32>::zeros(&[3, 2, 2, 2]);
        for (i, v) in x.data_mut().iter_mut().enumerate() {
            *v = if (i / 4) % 2 == 0 { 5.0 } else { -1.0 };
        }
        let y = bn.forward(&x, Mode::Train).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn train_output_is_standardised_then_affine() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = Tensor::<f64>::randn(&[4, 3, 2, 2], 3.0, &mut rng);
        let mut bn = BatchNorm2d::<f64>::new("bn", 3);
        let plain = bn.forward(&x, Mode::Train).unwrap();
        for ch in 0..3 {
            let vals: Vec<f64> = (0..4)
                .flat_map(|b| plain.data()[(b * 3 + ch) * 4..][..4].to_vec())
                .collect();
            let mean = vals.iter().sum::<f64>() / 16.0;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 16.0;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-3);
        }
        let mut bn2 = BatchNorm2d::<f64>::new("bn", 3);
        bn2.gamma.value.fill(2.0);
        bn2.beta.value.fill(3.0);
        let affine = bn2.forward(&x, Mode::Train).unwrap();
        for (a, p) in affine.data().iter().zip(plain.data()) {
            assert!((a - (2.0 * p + 3.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn running_stats_update_and_eval_uses_them() {
        let x = Tensor::<f64>::new(vec![2, 1, 1, 2], vec![1.0, 3.0, 5.0, 7.0]).unwrap();
        let mut bn = BatchNorm2d::<f64>::new("bn", 1);
        bn.forward(&x, Mode::Train).unwrap();
        // batch mean 4, unbiased variance 20/3
        assert!((bn.running_mean.data()[0] - 0.4).abs() < 1e-12);
        assert!((bn.running_var.data()[0] - (0.9 + 0.1 * 20.0 / 3.0)).abs() < 1e-12);
        let y = bn.forward(&x, Mode::Eval).unwrap();
        let expected = (1.0 - 0.4) / (bn.running_var.data()[0] + 1e-5).sqrt();
        assert!((y.data()[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn single_sample_train_batch_is_rejected() {
        let mut bn = BatchNorm2d::<f32>::new("bn", 1);
        let err = bn
            .forward(&Tensor::zeros(&[1, 1, 2, 2]), Mode::Train)
            .unwrap_err();
        assert!(matches!(err, Error::Param(_)));
        assert!(bn.forward(&Tensor::zeros(&[1, 1, 2, 2]), Mode::Eval).is_ok());
    }
}
