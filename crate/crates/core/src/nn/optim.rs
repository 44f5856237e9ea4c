use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// A learnable tensor with its gradient and Adam moment buffers.
#[derive(Debug, Clone)]
pub struct Parameter<T: Scalar = f32> {
    pub name: String,
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
    first_moment: Tensor<T>,
    second_moment: Tensor<T>,
}

impl<T: Scalar> Parameter<T> {
    pub fn new(name: impl Into<String>, value: Tensor<T>) -> Self {
        let zeros = Tensor::zeros(value.shape());
        Self {
            name: name.into(),
            grad: zeros.clone(),
            first_moment: zeros.clone(),
            second_moment: zeros,
            value,
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(T::zero());
    }

    /// Same parameter values in another precision, with fresh optimizer state.
    pub fn cast<U: Scalar>(&self) -> Parameter<U> {
        Parameter::new(self.name.clone(), self.value.cast())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias-corrected moments.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self { config, step: 0 }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one update to every parameter. Nothing is modified if any
    /// gradient is non-finite.
    pub fn step<T: Scalar>(&mut self, params: &mut [&mut Parameter<T>]) -> Result<()> {
        for p in params.iter() {
            if let Some(pos) = p.grad.data().iter().position(|g| !g.is_finite()) {
                return Err(Error::NonFinite(format!(
                    "gradient of parameter '{}' at flat index {pos} is {:?}; step aborted",
                    p.name,
                    p.grad.data()[pos]
                )));
            }
        }
        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        let b1 = T::from_f64(c.beta1);
        let b2 = T::from_f64(c.beta2);
        let one = T::one();
        let step_size = T::from_f64(c.lr / bc1);
        let inv_sqrt_bc2 = T::from_f64(1.0 / bc2.sqrt());
        let eps = T::from_f64(c.eps);
        for p in params.iter_mut() {
            let Parameter {
                value,
                grad,
                first_moment,
                second_moment,
                ..
            } = &mut **p;
            let iter = value
                .data_mut()
                .iter_mut()
                .zip(grad.data())
                .zip(first_moment.data_mut().iter_mut())
                .zip(second_moment.data_mut().iter_mut());
            for (((w, &g), m), v) in iter {
                *m = b1 * *m + (one - b1) * g;
                *v = b2 * *v + (one - b2) * g * g;
                let denom = v.sqrt() * inv_sqrt_bc2 + eps;
                *w -= step_size * *m / denom;
            }
        }
        Ok(())
    }
}
