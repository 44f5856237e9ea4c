use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{ExtractorConfig, HeadConfig, NetConfig};
use crate::error::{Error, Result};
use crate::nn::{Activation, ActivationLayer, BatchNorm2d, Conv2d, Layer, Linear, Mode, Parameter};
use crate::tensor::{Scalar, Tensor};

/// Conv, batch norm and ReLU.
#[derive(Debug, Clone)]
pub struct ConvBlock<T: Scalar = f32> {
    pub conv: Conv2d<T>,
    pub bn: BatchNorm2d<T>,
    pub relu: ActivationLayer<T>,
}

/// Conv stack followed by two fully connected layers.
///
/// The first FC layer is followed by a Sigmoid; the second by the configured
/// final activation (none by default).
#[derive(Debug, Clone)]
pub struct Extractor<T: Scalar = f32> {
    pub config: ExtractorConfig,
    pub blocks: Vec<ConvBlock<T>>,
    pub fc1: Linear<T>,
    pub act1: ActivationLayer<T>,
    pub fc2: Linear<T>,
    pub act2: ActivationLayer<T>,
}

impl<T: Scalar> Extractor<T> {
    pub fn new(config: &ExtractorConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        config.validate()?;
        let mut blocks = Vec::with_capacity(config.conv_channels.len());
        let mut in_c = config.input_shape[0];
        for (i, &out_c) in config.conv_channels.iter().enumerate() {
            blocks.push(ConvBlock {
                conv: Conv2d::new(
                    &format!("conv{}", i + 1),
                    in_c,
                    out_c,
                    config.kernel,
                    config.stride,
                    config.padding,
                    rng,
                ),
                bn: BatchNorm2d::new(&format!("bn{}", i + 1), out_c),
                relu: ActivationLayer::new(&format!("relu{}", i + 1), Activation::Relu),
            });
            in_c = out_c;
        }
        let flat = config.flat_width()?;
        Ok(Self {
            config: config.clone(),
            blocks,
            fc1: Linear::new("fc1", flat, config.fc1_width, rng),
            act1: ActivationLayer::new("fc1_act", Activation::Sigmoid),
            fc2: Linear::new("fc2", config.fc1_width, config.feature_size, rng),
            act2: ActivationLayer::new("fc2_act", config.final_activation),
        })
    }

    pub fn feature_size(&self) -> usize {
        self.config.feature_size
    }

    pub fn cast<U: Scalar>(&self) -> Extractor<U> {
        Extractor {
            config: self.config.clone(),
            blocks: self
                .blocks
                .iter()
                .map(|b| ConvBlock {
                    conv: b.conv.cast(),
                    bn: b.bn.cast(),
                    relu: b.relu.cast(),
                })
                .collect(),
            fc1: self.fc1.cast(),
            act1: self.act1.cast(),
            fc2: self.fc2.cast(),
            act2: self.act2.cast(),
        }
    }

    /// Named tensors that make up the model state: parameters plus batch-norm
    /// running statistics, in a fixed order.
    pub fn state(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = Vec::new();
        for b in &self.blocks {
            push_params(&mut out, b.conv.params());
            push_params(&mut out, b.bn.params());
            let base = bn_base(&b.bn);
            out.push((format!("{base}.running_mean"), &b.bn.running_mean));
            out.push((format!("{base}.running_var"), &b.bn.running_var));
        }
        push_params(&mut out, self.fc1.params());
        push_params(&mut out, self.fc2.params());
        push_params(&mut out, self.act2.params());
        out
    }

    pub fn state_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out = Vec::new();
        for b in &mut self.blocks {
            out.extend(b.conv.params_mut().into_iter().map(|p| &mut p.value));
            out.push(&mut b.bn.gamma.value);
            out.push(&mut b.bn.beta.value);
            out.push(&mut b.bn.running_mean);
            out.push(&mut b.bn.running_var);
        }
        out.extend(self.fc1.params_mut().into_iter().map(|p| &mut p.value));
        out.extend(self.fc2.params_mut().into_iter().map(|p| &mut p.value));
        out.extend(self.act2.params_mut().into_iter().map(|p| &mut p.value));
        out
    }
}

fn push_params<'a, T: Scalar>(out: &mut Vec<(String, &'a Tensor<T>)>, params: Vec<&'a Parameter<T>>) {
    out.extend(params.into_iter().map(|p| (p.name.clone(), &p.value)));
}

fn bn_base<T: Scalar>(bn: &BatchNorm2d<T>) -> String {
    bn.gamma
        .name
        .strip_suffix(".gamma")
        .unwrap_or(&bn.gamma.name)
        .to_string()
}

impl<T: Scalar> Layer<T> for Extractor<T> {
    fn forward(&mut self, input: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let expected = &self.config.input_shape;
        if input.ndim() != 4 || input.shape()[1..] != expected[..] {
            return Err(Error::shape(
                "extractor",
                format!(
                    "expected input [N, {}, {}, {}], got {:?}",
                    expected[0],
                    expected[1],
                    expected[2],
                    input.shape()
                ),
            ));
        }
        let mut h = input.clone();
        for b in &mut self.blocks {
            h = b.conv.forward(&h, mode)?;
            h = b.bn.forward(&h, mode)?;
            h = b.relu.forward(&h, mode)?;
        }
        let h = self.fc1.forward(&h, mode)?;
        let h = self.act1.forward(&h, mode)?;
        let h = self.fc2.forward(&h, mode)?;
        self.act2.forward(&h, mode)
    }

    fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let g = self.act2.backward(grad_out)?;
        let g = self.fc2.backward(&g)?;
        let g = self.act1.backward(&g)?;
        let mut g = self.fc1.backward(&g)?;
        for b in self.blocks.iter_mut().rev() {
            g = b.relu.backward(&g)?;
            g = b.bn.backward(&g)?;
            g = b.conv.backward(&g)?;
        }
        Ok(g)
    }

    fn params(&self) -> Vec<&Parameter<T>> {
        let mut out = Vec::new();
        for b in &self.blocks {
            out.extend(b.conv.params());
            out.extend(b.bn.params());
        }
        out.extend(self.fc1.params());
        out.extend(self.fc2.params());
        out.extend(self.act2.params());
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Parameter<T>> {
        let mut out = Vec::new();
        for b in &mut self.blocks {
            out.extend(b.conv.params_mut());
            out.extend(b.bn.params_mut());
        }
        out.extend(self.fc1.params_mut());
        out.extend(self.fc2.params_mut());
        out.extend(self.act2.params_mut());
        out
    }
}

/// Two FC layers with a Sigmoid after each (the last one optional).
#[derive(Debug, Clone)]
pub struct IdentityHead<T: Scalar = f32> {
    pub fc1: Linear<T>,
    pub act1: ActivationLayer<T>,
    pub fc2: Linear<T>,
    pub act2: ActivationLayer<T>,
}

impl<T: Scalar> IdentityHead<T> {
    pub fn new(feature_size: usize, cfg: &HeadConfig, classes: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            fc1: Linear::new("head1", feature_size, cfg.width, rng),
            act1: ActivationLayer::new("head1_act", Activation::Sigmoid),
            fc2: Linear::new("head2", cfg.width, classes, rng),
            act2: ActivationLayer::new(
                "head2_act",
                if cfg.final_sigmoid {
                    Activation::Sigmoid
                } else {
                    Activation::None
                },
            ),
        }
    }

    pub fn cast<U: Scalar>(&self) -> IdentityHead<U> {
        IdentityHead {
            fc1: self.fc1.cast(),
            act1: self.act1.cast(),
            fc2: self.fc2.cast(),
            act2: self.act2.cast(),
        }
    }
}

impl<T: Scalar> Layer<T> for IdentityHead<T> {
    fn forward(&mut self, input: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let h = self.fc1.forward(input, mode)?;
        let h = self.act1.forward(&h, mode)?;
        let h = self.fc2.forward(&h, mode)?;
        self.act2.forward(&h, mode)
    }

    fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let g = self.act2.backward(grad_out)?;
        let g = self.fc2.backward(&g)?;
        let g = self.act1.backward(&g)?;
        self.fc1.backward(&g)
    }

    fn params(&self) -> Vec<&Parameter<T>> {
        let mut out = self.fc1.params();
        out.extend(self.fc2.params());
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Parameter<T>> {
        let mut out = self.fc1.params_mut();
        out.extend(self.fc2.params_mut());
        out
    }
}

/// Siamese feature network. There is one extractor; both branches of a pair
/// run through it, so weight sharing holds by construction.
#[derive(Debug, Clone)]
pub struct RfbpNet<T: Scalar = f32> {
    pub config: NetConfig,
    pub extractor: Extractor<T>,
    pub head: IdentityHead<T>,
}

impl<T: Scalar> RfbpNet<T> {
    pub fn new(config: NetConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let extractor = Extractor::new(&config.extractor, &mut rng)?;
        let head = IdentityHead::new(
            config.extractor.feature_size,
            &config.head,
            config.num_identities,
            &mut rng,
        );
        Ok(Self {
            config,
            extractor,
            head,
        })
    }

    pub fn feature_size(&self) -> usize {
        self.extractor.feature_size()
    }

    pub fn cast<U: Scalar>(&self) -> RfbpNet<U> {
        RfbpNet {
            config: self.config.clone(),
            extractor: self.extractor.cast(),
            head: self.head.cast(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter<T>> {
        let mut out = self.extractor.params_mut();
        out.extend(self.head.params_mut());
        out
    }

    pub fn params(&self) -> Vec<&Parameter<T>> {
        let mut out = self.extractor.params();
        out.extend(self.head.params());
        out
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    /// Full model state (extractor, then head) in checkpoint order.
    pub fn state(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = self.extractor.state();
        for p in self.head.params() {
            out.push((p.name.clone(), &p.value));
        }
        out
    }

    pub fn state_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out = self.extractor.state_mut();
        out.extend(self.head.params_mut().into_iter().map(|p| &mut p.value));
        out
    }

    /// Features of a `[N, C, H, W]` batch with batch norm in eval mode.
    pub fn extract(&mut self, batch: &Tensor<T>) -> Result<Tensor<T>> {
        self.extractor.forward(batch, Mode::Eval)
    }

    /// Feature vector of a single `[C, H, W]` sample.
    pub fn forward_extract(&mut self, sample: &Tensor<T>) -> Result<Tensor<T>> {
        let mut shape = vec![1];
        shape.extend_from_slice(sample.shape());
        let batch = sample.clone().reshape(&shape)?;
        let f = self.extract(&batch)?;
        f.reshape(&[self.feature_size()])
    }
}
