use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{Layer, Mode, Parameter};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

const LEAKY_SLOPE: f64 = 0.01;
const ELU_ALPHA: f64 = 1.0;
pub(crate) const PRELU_INIT: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Sigmoid,
    Tanh,
    Softplus,
    LeakyRelu,
    Elu,
    Prelu,
    None,
}

impl Activation {
    pub const ALL: [Activation; 8] = [
        Activation::Relu,
        Activation::Sigmoid,
        Activation::Tanh,
        Activation::Softplus,
        Activation::LeakyRelu,
        Activation::Elu,
        Activation::Prelu,
        Activation::None,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Sigmoid => "sigmoid",
            Activation::Tanh => "tanh",
            Activation::Softplus => "softplus",
            Activation::LeakyRelu => "leaky_relu",
            Activation::Elu => "elu",
            Activation::Prelu => "prelu",
            Activation::None => "none",
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Activation::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown activation '{s}' (expected one of relu, sigmoid, tanh, softplus, leaky_relu, elu, prelu, none)"
                ))
            })
    }
}

#[inline]
fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

#[inline]
fn softplus<T: Scalar>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

/// Elementwise forward. `slope` is the PReLU parameter and ignored otherwise.
pub fn activation_forward<T: Scalar>(act: Activation, input: &Tensor<T>, slope: T) -> Tensor<T> {
    let leaky = T::from_f64(LEAKY_SLOPE);
    let alpha = T::from_f64(ELU_ALPHA);
    let zero = T::zero();
    match act {
        Activation::Relu => input.map(|x| if x > zero { x } else { zero }),
        Activation::Sigmoid => input.map(sigmoid),
        Activation::Tanh => input.map(|x| x.tanh()),
        Activation::Softplus => input.map(softplus),
        Activation::LeakyRelu => input.map(|x| if x > zero { x } else { leaky * x }),
        Activation::Elu => input.map(|x| if x > zero { x } else { alpha * x.exp_m1() }),
        Activation::Prelu => input.map(|x| if x > zero { x } else { slope * x }),
        Activation::None => input.clone(),
    }
}

/// Returns `(grad_input, grad_slope)`; `grad_slope` is zero unless `act` is PReLU.
pub fn activation_backward<T: Scalar>(
    act: Activation,
    input: &Tensor<T>,
    output: &Tensor<T>,
    grad_out: &Tensor<T>,
    slope: T,
) -> Result<(Tensor<T>, T)> {
    grad_out.expect_shape("activation_backward", input.shape())?;
    let zero = T::zero();
    let one = T::one();
    let x = input.data();
    let y = output.data();
    let g = grad_out.data();
    let mut grad_slope = zero;
    let dx: Vec<T> = match act {
        Activation::Relu => x
            .iter()
            .zip(g)
            .map(|(&x, &g)| if x > zero { g } else { zero })
            .collect(),
        Activation::Sigmoid => y.iter().zip(g).map(|(&y, &g)| g * y * (one - y)).collect(),
        Activation::Tanh => y.iter().zip(g).map(|(&y, &g)| g * (one - y * y)).collect(),
        Activation::Softplus => x.iter().zip(g).map(|(&x, &g)| g * sigmoid(x)).collect(),
        Activation::LeakyRelu => {
            let s = T::from_f64(LEAKY_SLOPE);
            x.iter()
                .zip(g)
                .map(|(&x, &g)| if x > zero { g } else { s * g })
                .collect()
        }
        Activation::Elu => {
            let alpha = T::from_f64(ELU_ALPHA);
            x.iter()
                .zip(y)
                .zip(g)
                .map(|((&x, &y), &g)| if x > zero { g } else { g * (y + alpha) })
                .collect()
        }
        Activation::Prelu => x
            .iter()
            .zip(g)
            .map(|(&x, &g)| {
                if x > zero {
                    g
                } else {
                    grad_slope += g * x;
                    slope * g
                }
            })
            .collect(),
        Activation::None => g.to_vec(),
    };
    Ok((Tensor::new(input.shape().to_vec(), dx)?, grad_slope))
}

/// Activation as a layer; PReLU owns a single learnable slope.
#[derive(Debug, Clone)]
pub struct ActivationLayer<T: Scalar = f32> {
    pub kind: Activation,
    pub slope: Option<Parameter<T>>,
    cache: Option<(Tensor<T>, Tensor<T>)>,
}

impl<T: Scalar> ActivationLayer<T> {
    pub fn new(name: &str, kind: Activation) -> Self {
        let slope = (kind == Activation::Prelu).then(|| {
            Parameter::new(
                format!("{name}.slope"),
                Tensor::full(&[1], T::from_f64(PRELU_INIT)),
            )
        });
        Self {
            kind,
            slope,
            cache: None,
        }
    }

    pub fn cast<U: Scalar>(&self) -> ActivationLayer<U> {
        ActivationLayer {
            kind: self.kind,
            slope: self.slope.as_ref().map(Parameter::cast),
            cache: None,
        }
    }

    fn slope_value(&self) -> T {
        self.slope
            .as_ref()
            .map(|p| p.value.data()[0])
            .unwrap_or_else(T::zero)
    }
}

impl<T: Scalar> Layer<T> for ActivationLayer<T> {
    fn forward(&mut self, input: &Tensor<T>, _mode: Mode) -> Result<Tensor<T>> {
        let out = activation_forward(self.kind, input, self.slope_value());
        self.cache = Some((input.clone(), out.clone()));
        Ok(out)
    }

    fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let (input, output) = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::State("activation backward called before forward".into()))?;
        let (dx, ds) =
            activation_backward(self.kind, input, output, grad_out, self.slope_value())?;
        if let Some(p) = self.slope.as_mut() {
            p.grad.data_mut()[0] += ds;
        }
        Ok(dx)
    }

    fn params(&self) -> Vec<&Parameter<T>> {
        self.slope.iter().collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Parameter<T>> {
        self.slope.iter_mut().collect()
    }
}
