use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{conv_out_dim, Activation, AdamConfig};

/// Feature sizes used by the size sweep.
pub const FEATURE_SIZES: [usize; 5] = [32, 64, 128, 256, 512];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtractorConfig {
    /// `[C, H, W]`.
    pub input_shape: Vec<usize>,
    pub conv_channels: Vec<usize>,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub fc1_width: usize,
    pub feature_size: usize,
    /// Applied after the last fully connected layer.
    pub final_activation: Activation,
}

impl Default for ExtractorConfig {
    fn default() -> Self {
        Self {
            input_shape: vec![2, 30, 49],
            conv_channels: vec![16, 32, 64],
            kernel: 3,
            stride: 2,
            padding: 1,
            fc1_width: 256,
            feature_size: 64,
            final_activation: Activation::None,
        }
    }
}

impl ExtractorConfig {
    pub fn for_input(input_shape: &[usize]) -> Self {
        Self {
            input_shape: input_shape.to_vec(),
            ..Self::default()
        }
    }

    /// Spatial size after each conv, starting with the input.
    pub fn spatial_plan(&self) -> Result<Vec<(usize, usize)>> {
        let [_, h, w] = self.input_dims()?;
        let mut plan = vec![(h, w)];
        for (i, _) in self.conv_channels.iter().enumerate() {
            let (ph, pw) = plan[i];
            let next = conv_out_dim(ph, self.kernel, self.stride, self.padding)
                .zip(conv_out_dim(pw, self.kernel, self.stride, self.padding));
            match next {
                Some(d) => plan.push(d),
                None => {
                    return Err(Error::Config(format!(
                        "conv {} collapses a {ph}x{pw} map (kernel {}, stride {}, padding {})",
                        i + 1,
                        self.kernel,
                        self.stride,
                        self.padding
                    )))
                }
            }
        }
        Ok(plan)
    }

    fn input_dims(&self) -> Result<[usize; 3]> {
        match self.input_shape[..] {
            [c, h, w] if c > 0 && h > 0 && w > 0 => Ok([c, h, w]),
            _ => Err(Error::Config(format!(
                "input shape must be [C,H,W] with positive dims, got {:?}",
                self.input_shape
            ))),
        }
    }

    /// Width of the flattened conv output.
    pub fn flat_width(&self) -> Result<usize> {
        let plan = self.spatial_plan()?;
        let (h, w) = *plan.last().expect("plan holds the input at least");
        let c = self.conv_channels.last().copied().unwrap_or(self.input_shape[0]);
        Ok(c * h * w)
    }

    pub fn validate(&self) -> Result<()> {
        self.input_dims()?;
        if self.kernel == 0 || self.stride == 0 {
            return Err(Error::Config("kernel and stride must be positive".into()));
        }
        if self.conv_channels.contains(&0) || self.fc1_width == 0 {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        if self.feature_size < 2 {
            return Err(Error::Config(format!(
                "feature_size must be >= 2, got {}",
                self.feature_size
            )));
        }
        self.spatial_plan().map(|_| ())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HeadConfig {
    pub width: usize,
    /// Keep the Sigmoid after the second head layer (softmax-CE then runs over
    /// sigmoid outputs). Turning it off feeds raw logits to the cross-entropy.
    pub final_sigmoid: bool,
}

impl Default for HeadConfig {
    fn default() -> Self {
        Self {
            width: 64,
            final_sigmoid: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetConfig {
    pub extractor: ExtractorConfig,
    pub head: HeadConfig,
    pub num_identities: usize,
    /// Seed for weight initialization.
    pub seed: u64,
}

impl NetConfig {
    pub fn validate(&self) -> Result<()> {
        self.extractor.validate()?;
        if self.head.width == 0 {
            return Err(Error::Config("identity head width must be positive".into()));
        }
        if self.num_identities < 2 {
            return Err(Error::Config(format!(
                "identity head needs >= 2 classes, got {}",
                self.num_identities
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Number of training pairs `n`.
    pub pairs: usize,
    /// Number of batches `k` per epoch; batch size is `n / k`.
    pub batches: usize,
    /// Number of epochs `p`.
    pub epochs: usize,
    pub alpha: f64,
    pub margin: f64,
    pub lr: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            pairs: 1000,
            batches: 10,
            epochs: 200,
            alpha: 0.5,
            margin: 3.0,
            lr: AdamConfig::default().lr,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn batch_size(&self) -> usize {
        self.pairs / self.batches.max(1)
    }

    pub fn total_steps(&self) -> usize {
        self.batches * self.epochs
    }

    pub fn validate(&self) -> Result<()> {
        if self.batches == 0 || self.pairs == 0 {
            return Err(Error::Config("pairs and batches must be positive".into()));
        }
        if self.pairs % self.batches != 0 {
            return Err(Error::Config(format!(
                "{} pairs cannot be split into {} equal batches",
                self.pairs, self.batches
            )));
        }
        check_alpha(self.alpha)?;
        if !(self.margin > 0.0 && self.margin.is_finite()) {
            return Err(Error::Param(format!("margin must be positive, got {}", self.margin)));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Param(format!("learning rate must be positive, got {}", self.lr)));
        }
        Ok(())
    }
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if (0.0..=1.0).contains(&alpha) {
        Ok(())
    } else {
        Err(Error::Param(format!("alpha must lie in [0, 1], got {alpha}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_plan_downsamples_both_input_shapes() {
        let rfid = ExtractorConfig::default();
        assert_eq!(rfid.spatial_plan().unwrap(), vec![(30, 49), (15, 25), (8, 13), (4, 7)]);
        assert_eq!(rfid.flat_width().unwrap(), 64 * 28);
        let wifi = ExtractorConfig::for_input(&[9, 56, 10]);
        assert_eq!(wifi.spatial_plan().unwrap().last(), Some(&(7, 2)));
    }

    #[test]
    fn defaults_give_two_thousand_steps() {
        let t = TrainConfig::default();
        assert_eq!(t.batch_size(), 100);
        assert_eq!(t.total_steps(), 2000);
        t.validate().unwrap();
    }

    #[test]
    fn rejects_bad_configs() {
        let t = TrainConfig {
            pairs: 1000,
            batches: 7,
            ..Default::default()
        };
        assert!(matches!(t.validate(), Err(Error::Config(_))));
        let t = TrainConfig {
            alpha: 1.5,
            ..Default::default()
        };
        assert!(matches!(t.validate(), Err(Error::Param(_))));
        let e = ExtractorConfig {
            feature_size: 1,
            ..Default::default()
        };
        assert!(e.validate().is_err());
    }
}
