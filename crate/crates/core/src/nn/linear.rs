use rand::Rng;

use super::init::kaiming_uniform;
use super::{Layer, Mode, Parameter};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

fn dims(input: &[usize], weight: &[usize]) -> Result<(usize, usize, usize)> {
    let [n, f] = *input else {
        return Err(Error::shape(
            "linear",
            format!("input must be [N,F], got {input:?}"),
        ));
    };
    let [g, wf] = *weight else {
        return Err(Error::shape(
            "linear",
            format!("weight must be [G,F], got {weight:?}"),
        ));
    };
    if wf != f {
        return Err(Error::shape(
            "linear",
            format!("feature axis: input has F={f}, weight expects F={wf}"),
        ));
    }
    Ok((n, f, g))
}

/// `input [N,F] * weight^T [F,G] + bias [G]`.
pub fn linear_forward<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<Tensor<T>> {
    let (n, f, g) = dims(input.shape(), weight.shape())?;
    bias.expect_shape("linear", &[g])?;
    let mut out = Vec::with_capacity(n * g);
    for _ in 0..n {
        out.extend_from_slice(bias.data());
    }
    T::gemm(
        n,
        f,
        g,
        T::one(),
        input.data(),
        (f as isize, 1),
        weight.data(),
        (1, f as isize),
        T::one(),
        &mut out,
        (g as isize, 1),
    );
    Tensor::new(vec![n, g], out)
}

#[derive(Debug, Clone)]
pub struct LinearGrads<T: Scalar> {
    pub grad_input: Tensor<T>,
    pub grad_weight: Tensor<T>,
    pub grad_bias: Tensor<T>,
}

pub fn linear_backward<T: Scalar>(
    grad_out: &Tensor<T>,
    input: &Tensor<T>,
    weight: &Tensor<T>,
) -> Result<LinearGrads<T>> {
    let (n, f, g) = dims(input.shape(), weight.shape())?;
    grad_out.expect_shape("linear_backward", &[n, g])?;
    let go = grad_out.data();
    let mut grad_weight = vec![T::zero(); g * f];
    T::gemm(
        g,
        n,
        f,
        T::one(),
        go,
        (1, g as isize),
        input.data(),
        (f as isize, 1),
        T::zero(),
        &mut grad_weight,
        (f as isize, 1),
    );
    let mut grad_bias = vec![T::zero(); g];
    for row in go.chunks_exact(g) {
        for (b, &v) in grad_bias.iter_mut().zip(row) {
            *b += v;
        }
    }
    let mut grad_input = vec![T::zero(); n * f];
    T::gemm(
        n,
        g,
        f,
        T::one(),
        go,
        (g as isize, 1),
        weight.data(),
        (f as isize, 1),
        T::zero(),
        &mut grad_input,
        (f as isize, 1),
    );
    Ok(LinearGrads {
        grad_input: Tensor::new(vec![n, f], grad_input)?,
        grad_weight: Tensor::new(vec![g, f], grad_weight)?,
        grad_bias: Tensor::new(vec![g], grad_bias)?,
    })
}

/// Fully connected layer. Inputs with more than two axes are flattened to `[N, rest]`.
#[derive(Debug, Clone)]
pub struct Linear<T: Scalar = f32> {
    pub weight: Parameter<T>,
    pub bias: Parameter<T>,
    cache: Option<(Vec<usize>, Tensor<T>)>,
}

impl<T: Scalar> Linear<T> {
    pub fn new<R: Rng + ?Sized>(
        name: &str,
        in_features: usize,
        out_features: usize,
        rng: &mut R,
    ) -> Self {
        let weight = kaiming_uniform(&[out_features, in_features], in_features, rng);
        Self::from_parts(
            Parameter::new(format!("{name}.weight"), weight),
            Parameter::new(format!("{name}.bias"), Tensor::zeros(&[out_features])),
        )
    }

    pub fn from_parts(weight: Parameter<T>, bias: Parameter<T>) -> Self {
        Self {
            weight,
            bias,
            cache: None,
        }
    }

    pub fn in_features(&self) -> usize {
        self.weight.value.shape()[1]
    }

    pub fn out_features(&self) -> usize {
        self.weight.value.shape()[0]
    }

    pub fn cast<U: Scalar>(&self) -> Linear<U> {
        Linear::from_parts(self.weight.cast(), self.bias.cast())
    }
}

impl<T: Scalar> Layer<T> for Linear<T> {
    fn forward(&mut self, input: &Tensor<T>, _mode: Mode) -> Result<Tensor<T>> {
        let orig = input.shape().to_vec();
        let flat = if orig.len() == 2 {
            input.clone()
        } else if orig.is_empty() {
            return Err(Error::shape("linear", "scalar input"));
        } else {
            input.clone().reshape(&[orig[0], input.row_len()])?
        };
        let out = linear_forward(&flat, &self.weight.value, &self.bias.value)?;
        self.cache = Some((orig, flat));
        Ok(out)
    }

    fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let (orig, flat) = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::State("linear backward called before forward".into()))?;
        let grads = linear_backward(grad_out, flat, &self.weight.value)?;
        self.weight.grad.add_assign(&grads.grad_weight)?;
        self.bias.grad.add_assign(&grads.grad_bias)?;
        grads.grad_input.reshape(orig)
    }

    fn params(&self) -> Vec<&Parameter<T>> {
        vec![&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Parameter<T>> {
        vec![&mut self.weight, &mut self.bias]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_weight_passes_through() {
        let x = Tensor::<f32>::new(vec![2, 3], vec![1.0, -2.0, 3.0, 0.5, 0.0, 4.0]).unwrap();
        let mut eye = Tensor::<f32>::zeros(&[3, 3]);
        for i in 0..3 {
            eye.data_mut()[i * 3 + i] = 1.0;
        }
        let y = linear_forward(&x, &eye, &Tensor::zeros(&[3])).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn hand_computed_row() {
        let x = Tensor::<f32>::new(vec![1, 2], vec![1.0, 2.0]).unwrap();
        let w = Tensor::<f32>::new(vec![1, 2], vec![3.0, 4.0]).unwrap();
        let b = Tensor::<f32>::new(vec![1], vec![5.0]).unwrap();
        assert_eq!(linear_forward(&x, &w, &b).unwrap().data(), &[16.0]);
    }

    #[test]
    fn matches_triple_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for (n, f, g) in [(1, 1, 1), (3, 5, 2), (7, 4, 6)] {
            let x = Tensor::<f64>::randn(&[n, f], 1.0, &mut rng);
            let w = Tensor::<f64>::randn(&[g, f], 1.0, &mut rng);
            let b = Tensor::<f64>::randn(&[g], 1.0, &mut rng);
            let y = linear_forward(&x, &w, &b).unwrap();
            for i in 0..n {
                for j in 0..g {
                    let mut acc = b.data()[j];
                    for k in 0..f {
                        acc += x.data()[i * f + k] * w.data()[j * f + k];
                    }
                    assert!((y.data()[i * g + j] - acc).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn feature_mismatch_is_shape_error() {
        let x = Tensor::<f32>::zeros(&[2, 3]);
        let w = Tensor::<f32>::zeros(&[4, 2]);
        let err = linear_forward(&x, &w, &Tensor::zeros(&[4])).unwrap_err();
        assert!(err.to_string().contains("feature axis"));
    }
}
