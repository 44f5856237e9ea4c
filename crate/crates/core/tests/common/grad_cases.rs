//! Finite-difference gradient suites shared by the gradient tests and the
//! acceptance runner. Each suite checks at least `CASES` random instances and
//! returns the worst relative error seen, or a description of the first failure.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rfbp_core::model::{
    contrastive_loss, euclidean_distance, forward_backward, pair_batch_loss, ExtractorConfig,
    HeadConfig, NetConfig, RfbpNet,
};
use rfbp_core::nn::gradcheck::{check_gradient, check_layer, GradCheckReport};
use rfbp_core::nn::{
    softmax_cross_entropy, Activation, ActivationLayer, BatchNorm2d, Conv2d, Layer, Linear, Mode,
    Parameter,
};
use rfbp_core::pairing::{PairRecord, NO_IDENTITY};
use rfbp_core::Tensor;

pub const TOL: f64 = 1e-4;
pub const CASES: usize = 20;

pub type Outcome = std::result::Result<f64, String>;

fn judge(label: &str, r: GradCheckReport, worst: &mut f64) -> std::result::Result<(), String> {
    *worst = worst.max(r.max_rel_error);
    if r.max_rel_error <= TOL {
        Ok(())
    } else {
        Err(format!("{label}: relative error {:.3e} at {}", r.max_rel_error, r.worst))
    }
}

/// Moves values away from the kink at zero so central differences stay on one side.
fn nudge_off_zero(t: &mut Tensor<f64>) {
    for v in t.data_mut() {
        if v.abs() < 0.05 {
            *v = if *v < 0.0 { -0.05 - v.abs() } else { 0.05 + *v };
        }
    }
}

pub fn conv2d() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let mut worst = 0.0;
    for case in 0..CASES {
        let c = rng.random_range(1..=3);
        let o = rng.random_range(1..=3);
        let k = rng.random_range(1..=3);
        let stride = rng.random_range(1..=2);
        let pad = rng.random_range(0..=1);
        let h = rng.random_range(k..=6);
        let w = rng.random_range(k..=6);
        let n = rng.random_range(1..=2);
        let mut conv = Conv2d::<f64>::new("conv", c, o, k, stride, pad, &mut rng);
        conv.bias.value = Tensor::randn(&[o], 0.5, &mut rng);
        let x = Tensor::randn(&[n, c, h, w], 1.0, &mut rng);
        let r = check_layer(&mut conv, &x, Mode::Train, &mut rng).map_err(|e| e.to_string())?;
        judge(&format!("conv2d case {case}"), r, &mut worst)?;
    }
    Ok(worst)
}

pub fn linear() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0;
    for case in 0..CASES {
        let n = rng.random_range(1..=4);
        let f = rng.random_range(1..=8);
        let g = rng.random_range(1..=6);
        let mut lin = Linear::<f64>::new("fc", f, g, &mut rng);
        let x = Tensor::randn(&[n, f], 1.0, &mut rng);
        let r = check_layer(&mut lin, &x, Mode::Train, &mut rng).map_err(|e| e.to_string())?;
        judge(&format!("linear case {case}"), r, &mut worst)?;
    }
    Ok(worst)
}

pub fn batchnorm() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let mut worst = 0.0;
    for case in 0..CASES {
        let (n, c, h, w) = if case == 0 {
            (4, 3, 2, 2)
        } else {
            (
                rng.random_range(2..=4),
                rng.random_range(1..=3),
                rng.random_range(1..=3),
                rng.random_range(1..=3),
            )
        };
        let mut bn = BatchNorm2d::<f64>::new("bn", c);
        bn.gamma.value = Tensor::randn(&[c], 1.0, &mut rng);
        bn.beta.value = Tensor::randn(&[c], 1.0, &mut rng);
        let x = Tensor::randn(&[n, c, h, w], 2.0, &mut rng);
        for mode in [Mode::Train, Mode::Eval] {
            let r = check_layer(&mut bn, &x, mode, &mut rng).map_err(|e| e.to_string())?;
            judge(&format!("batchnorm case {case} {mode:?}"), r, &mut worst)?;
        }
    }
    Ok(worst)
}

pub fn activations() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let mut worst = 0.0;
    for act in Activation::ALL {
        for case in 0..CASES {
            let mut layer = ActivationLayer::<f64>::new("act", act);
            let len = rng.random_range(1..=12);
            let mut x = Tensor::randn(&[2, len], 2.0, &mut rng);
            nudge_off_zero(&mut x);
            let r = check_layer(&mut layer, &x, Mode::Train, &mut rng).map_err(|e| e.to_string())?;
            judge(&format!("{act} case {case}"), r, &mut worst)?;
        }
    }
    Ok(worst)
}

struct ConvBnRelu {
    conv: Conv2d<f64>,
    bn: BatchNorm2d<f64>,
    act: ActivationLayer<f64>,
}

impl Layer<f64> for ConvBnRelu {
    fn forward(&mut self, x: &Tensor<f64>, mode: Mode) -> rfbp_core::Result<Tensor<f64>> {
        let y = self.conv.forward(x, mode)?;
        let y = self.bn.forward(&y, mode)?;
        self.act.forward(&y, mode)
    }
    fn backward(&mut self, g: &Tensor<f64>) -> rfbp_core::Result<Tensor<f64>> {
        let g = self.act.backward(g)?;
        let g = self.bn.backward(&g)?;
        self.conv.backward(&g)
    }
    fn params(&self) -> Vec<&Parameter<f64>> {
        let mut p = self.conv.params();
        p.extend(self.bn.params());
        p
    }
    fn params_mut(&mut self) -> Vec<&mut Parameter<f64>> {
        let mut p = self.conv.params_mut();
        p.extend(self.bn.params_mut());
        p
    }
}

/// The extractor's building block as a whole. Draws whose pre-activations sit
/// within reach of the relu kink are redrawn.
pub fn conv_bn_relu() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    let mut worst = 0.0;
    let mut checked = 0;
    while checked < CASES {
        let mut stack = ConvBnRelu {
            conv: Conv2d::new("conv", 2, 3, 3, 2, 1, &mut rng),
            bn: BatchNorm2d::new("bn", 3),
            act: ActivationLayer::new("relu", Activation::Relu),
        };
        let x = Tensor::randn(&[3, 2, 5, 4], 1.0, &mut rng);
        let pre = {
            let y = stack.conv.forward(&x, Mode::Train).map_err(|e| e.to_string())?;
            stack.bn.forward(&y, Mode::Train).map_err(|e| e.to_string())?
        };
        if pre.data().iter().any(|v| v.abs() < 1e-3) {
            continue;
        }
        let r = check_layer(&mut stack, &x, Mode::Train, &mut rng).map_err(|e| e.to_string())?;
        judge(&format!("conv+bn+relu case {checked}"), r, &mut worst)?;
        checked += 1;
    }
    Ok(worst)
}

pub fn softmax_ce() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    let mut worst = 0.0;
    for case in 0..CASES {
        let n = rng.random_range(1..=4);
        let m = rng.random_range(2..=6);
        let logits = Tensor::<f64>::randn(&[n, m], 2.0, &mut rng);
        let targets: Vec<usize> = (0..n).map(|_| rng.random_range(0..m)).collect();
        let (_, g) = softmax_cross_entropy(&logits, &targets).map_err(|e| e.to_string())?;
        let r = check_gradient("logits", logits.data(), g.data(), |v| {
            let t = Tensor::new(vec![n, m], v.to_vec())?;
            Ok(softmax_cross_entropy(&t, &targets)?.0)
        })
        .map_err(|e| e.to_string())?;
        judge(&format!("softmax cross-entropy case {case}"), r, &mut worst)?;
    }
    Ok(worst)
}

pub fn contrastive() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(106);
    let mut worst = 0.0;
    for case in 0..CASES {
        let n = rng.random_range(1..=6);
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y_s = (case % 2) as u8;
        let margin = 4.0;
        let (_, g) = contrastive_loss(&a, &b, y_s, margin);
        let r = check_gradient("a", &a, &g, |v| Ok(contrastive_loss(v, &b, y_s, margin).0))
            .map_err(|e| e.to_string())?;
        judge(&format!("contrastive case {case}"), r, &mut worst)?;
    }
    Ok(worst)
}

pub fn random_records(rng: &mut ChaCha8Rng, b: usize, identities: usize) -> Vec<PairRecord> {
    (0..b)
        .map(|i| {
            let y_s = if i % 2 == 0 { 0 } else { 1 };
            PairRecord {
                idx_a: i,
                idx_b: b + i,
                y_s,
                id_label: if y_s == 0 {
                    rng.random_range(0..identities) as i64
                } else {
                    NO_IDENTITY
                },
            }
        })
        .collect()
}

/// Batch objective with respect to features and head outputs.
pub fn pair_batch() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(107);
    let mut worst = 0.0;
    for case in 0..CASES {
        let b = rng.random_range(1..=4);
        let f = rng.random_range(1..=5);
        let m = rng.random_range(2..=4);
        let alpha = rng.random_range(0.0..=1.0);
        let rec = random_records(&mut rng, b, m);
        let feats = Tensor::<f64>::randn(&[2 * b, f], 1.0, &mut rng);
        let head = Tensor::<f64>::randn(&[2 * b, m], 1.0, &mut rng);
        let loss = pair_batch_loss(&feats, &head, &rec, alpha, 10.0).map_err(|e| e.to_string())?;
        let r1 = check_gradient("features", feats.data(), loss.grad_features.data(), |v| {
            let t = Tensor::new(vec![2 * b, f], v.to_vec())?;
            Ok(pair_batch_loss(&t, &head, &rec, alpha, 10.0)?.parts.loss_f)
        })
        .map_err(|e| e.to_string())?;
        let r2 = check_gradient("head", head.data(), loss.grad_head.data(), |v| {
            let t = Tensor::new(vec![2 * b, m], v.to_vec())?;
            Ok(pair_batch_loss(&feats, &t, &rec, alpha, 10.0)?.parts.loss_f)
        })
        .map_err(|e| e.to_string())?;
        judge(&format!("pair batch case {case}"), r1.merge(r2), &mut worst)?;
    }
    Ok(worst)
}

pub fn small_net_config(seed: u64, feature_size: usize, identities: usize) -> NetConfig {
    NetConfig {
        extractor: ExtractorConfig {
            input_shape: vec![1, 6, 7],
            conv_channels: vec![2, 3],
            fc1_width: 6,
            feature_size,
            ..ExtractorConfig::default()
        },
        head: HeadConfig {
            width: 5,
            final_sigmoid: true,
        },
        num_identities: identities,
        seed,
    }
}

fn joint_value(net: &mut RfbpNet<f64>, x: &Tensor<f64>, rec: &[PairRecord], alpha: f64, margin: f64) -> rfbp_core::Result<f64> {
    let f = net.extractor.forward(x, Mode::Train)?;
    let h = net.head.forward(&f, Mode::Train)?;
    Ok(pair_batch_loss(&f, &h, rec, alpha, margin)?.parts.loss_f)
}

/// A margin of order one (keeping the loss small enough for clean central
/// differences) that sits at least 0.05 away from every dissimilar pair's distance.
fn hinge_safe_margin(net: &mut RfbpNet<f64>, x: &Tensor<f64>, rec: &[PairRecord]) -> rfbp_core::Result<f64> {
    let f = net.extractor.forward(x, Mode::Train)?;
    let b = rec.len();
    let dists: Vec<f64> = rec
        .iter()
        .enumerate()
        .filter(|(_, r)| r.y_s == 1)
        .map(|(i, _)| euclidean_distance(f.row(i), f.row(b + i)))
        .collect();
    let mut margin = 3.0;
    while dists.iter().any(|d| (d - margin).abs() < 0.05) {
        margin += 0.1;
    }
    Ok(margin)
}

/// The full Siamese network under the joint loss, every parameter checked.
pub fn joint_network() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(300);
    let mut worst = 0.0;
    for case in 0..CASES {
        let alpha = [0.0, 0.3, 0.5, 0.8, 1.0][case % 5];
        let b = rng.random_range(2..=4);
        let identities = rng.random_range(2..=4);
        let mut net = RfbpNet::<f32>::new(small_net_config(case as u64, 3, identities))
            .map_err(|e| e.to_string())?
            .cast::<f64>();
        let rec = random_records(&mut rng, b, identities);
        let x = Tensor::<f64>::randn(&[2 * b, 1, 6, 7], 1.0, &mut rng);
        let margin = hinge_safe_margin(&mut net, &x, &rec).map_err(|e| e.to_string())?;

        net.zero_grad();
        forward_backward(&mut net, &x, &rec, alpha, margin).map_err(|e| e.to_string())?;
        let analytic: Vec<(String, Vec<f64>, Vec<f64>)> = net
            .params()
            .iter()
            .map(|p| (p.name.clone(), p.value.data().to_vec(), p.grad.data().to_vec()))
            .collect();
        let mut report: Option<GradCheckReport> = None;
        for (idx, (name, values, grads)) in analytic.iter().enumerate() {
            let r = check_gradient(name, values, grads, |v| {
                net.params_mut()[idx].value.data_mut().copy_from_slice(v);
                joint_value(&mut net, &x, &rec, alpha, margin)
            })
            .map_err(|e| e.to_string())?;
            net.params_mut()[idx].value.data_mut().copy_from_slice(values);
            report = Some(match report {
                None => r,
                Some(acc) => acc.merge(r),
            });
        }
        judge(
            &format!("joint loss case {case} (alpha {alpha})"),
            report.expect("network has parameters"),
            &mut worst,
        )?;
    }
    Ok(worst)
}

/// Every suite, by name.
pub fn all() -> Vec<(&'static str, fn() -> Outcome)> {
    vec![
        ("conv2d", conv2d as fn() -> Outcome),
        ("linear", linear),
        ("batchnorm", batchnorm),
        ("activations", activations),
        ("conv+bn+relu", conv_bn_relu),
        ("softmax cross-entropy", softmax_ce),
        ("contrastive", contrastive),
        ("pair batch loss", pair_batch),
        ("joint network", joint_network),
    ]
}
