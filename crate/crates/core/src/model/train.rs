use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::config::TrainConfig;
use super::loss::{pair_batch_loss, LossParts};
use super::net::RfbpNet;
use crate::dataset::SignalDataset;
use crate::error::{Error, Result};
use crate::nn::{Adam, AdamConfig, Layer, Mode};
use crate::pairing::{PairRecord, PairSet};
use crate::tensor::{Scalar, Tensor};

/// Samples per forward pass during feature extraction.
const EXTRACT_CHUNK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub loss_c: f64,
    pub loss_p: f64,
    pub loss_f: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochLoss>,
    pub steps: usize,
}

impl History {
    pub fn first(&self) -> Option<&EpochLoss> {
        self.epochs.first()
    }

    pub fn last(&self) -> Option<&EpochLoss> {
        self.epochs.last()
    }
}

/// One forward/backward pass of the joint objective over a pair batch.
///
/// Both branches are stacked into a single `[2B, ...]` batch through the one
/// extractor, so their gradients accumulate into the same parameters. Batch
/// norm statistics are therefore taken over all `2B` samples. Gradients are
/// accumulated, not reset.
pub fn forward_backward<T: Scalar>(
    net: &mut RfbpNet<T>,
    inputs: &Tensor<T>,
    records: &[PairRecord],
    alpha: f64,
    margin: f64,
) -> Result<LossParts> {
    let features = net.extractor.forward(inputs, Mode::Train)?;
    let head_out = net.head.forward(&features, Mode::Train)?;
    let loss = pair_batch_loss(&features, &head_out, records, alpha, margin)?;
    let mut grad = loss.grad_features;
    let from_head = net.head.backward(&loss.grad_head)?;
    grad.add_assign(&from_head)?;
    net.extractor.backward(&grad)?;
    Ok(loss.parts)
}

/// Stacks branch-a samples followed by branch-b samples.
pub fn pair_inputs(ds: &SignalDataset, records: &[PairRecord]) -> Tensor<f32> {
    let mut idx: Vec<usize> = records.iter().map(|r| r.idx_a).collect();
    idx.extend(records.iter().map(|r| r.idx_b));
    ds.batch(&idx)
}

pub fn train(
    net: &mut RfbpNet<f32>,
    pairs: &PairSet,
    ds: &SignalDataset,
    cfg: &TrainConfig,
) -> Result<History> {
    train_with(net, pairs, ds, cfg, |_| {})
}

/// Trains for `cfg.epochs` epochs of `cfg.batches` batches each. The pair order
/// is reshuffled every epoch from `cfg.seed`.
pub fn train_with(
    net: &mut RfbpNet<f32>,
    pairs: &PairSet,
    ds: &SignalDataset,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLoss),
) -> Result<History> {
    cfg.validate()?;
    if pairs.len() != cfg.pairs {
        return Err(Error::Config(format!(
            "training expects {} pairs, pair set has {}",
            cfg.pairs,
            pairs.len()
        )));
    }
    if ds.sample_shape() != net.config.extractor.input_shape.as_slice() {
        return Err(Error::shape(
            "train",
            format!(
                "dataset samples are {:?}, network expects {:?}",
                ds.sample_shape(),
                net.config.extractor.input_shape
            ),
        ));
    }
    for r in &pairs.records {
        r.validate(ds)?;
        if let Some(c) = r.identity() {
            if c >= net.config.num_identities {
                return Err(Error::Label(format!(
                    "identity label {c} exceeds the head's {} classes",
                    net.config.num_identities
                )));
            }
        }
    }
    let mut opt = Adam::new(AdamConfig {
        lr: cfg.lr,
        ..AdamConfig::default()
    });
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let bs = cfg.batch_size();
    let mut history = History::default();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut sum = [0.0f64; 3];
        for (batch, chunk) in order.chunks(bs).enumerate() {
            let records: Vec<PairRecord> = chunk.iter().map(|&i| pairs.records[i]).collect();
            let inputs = pair_inputs(ds, &records);
            net.zero_grad();
            let parts = forward_backward(net, &inputs, &records, cfg.alpha, cfg.margin)?;
            if !parts.loss_f.is_finite() {
                return Err(Error::NonFinite(format!(
                    "loss is {} at epoch {epoch}, batch {batch} (contrastive {}, identity {})",
                    parts.loss_f, parts.loss_c, parts.loss_p
                )));
            }
            opt.step(&mut net.params_mut()).map_err(|e| match e {
                Error::NonFinite(msg) => {
                    Error::NonFinite(format!("epoch {epoch}, batch {batch}: {msg}"))
                }
                other => other,
            })?;
            history.steps += 1;
            sum[0] += parts.loss_c;
            sum[1] += parts.loss_p;
            sum[2] += parts.loss_f;
        }
        let k = cfg.batches as f64;
        let rec = EpochLoss {
            epoch,
            loss_c: sum[0] / k,
            loss_p: sum[1] / k,
            loss_f: sum[2] / k,
        };
        on_epoch(&rec);
        history.epochs.push(rec);
    }
    Ok(history)
}

/// Runs every sample through the extractor (eval mode) and keeps both label columns.
pub fn extract_all(net: &mut RfbpNet<f32>, ds: &SignalDataset) -> Result<SignalDataset> {
    let f = net.feature_size();
    let mut data = Vec::with_capacity(ds.len() * f);
    let idx: Vec<usize> = (0..ds.len()).collect();
    for chunk in idx.chunks(EXTRACT_CHUNK) {
        let feats = net.extract(&ds.batch(chunk))?;
        if !feats.all_finite() {
            return Err(Error::NonFinite(format!(
                "extracted features for samples {}..{} contain NaN/Inf",
                chunk[0],
                chunk[chunk.len() - 1] + 1
            )));
        }
        data.extend_from_slice(feats.data());
    }
    let out = SignalDataset::new(
        vec![f],
        data,
        ds.identity_labels().to_vec(),
        ds.behavior_labels().to_vec(),
    )?;
    Ok(out.with_provenance(
        json!({ "generator": "features", "feature_size": f, "source": ds.provenance }),
        ds.seed,
    ))
}

/// Mean feature distance of similar and of dissimilar pairs.
pub fn mean_pair_distances(features: &SignalDataset, pairs: &[PairRecord]) -> (f64, f64) {
    let mut acc = [(0.0f64, 0usize); 2];
    for r in pairs {
        let d: f64 = features
            .sample(r.idx_a)
            .iter()
            .zip(features.sample(r.idx_b))
            .map(|(&a, &b)| {
                let v = a as f64 - b as f64;
                v * v
            })
            .sum::<f64>()
            .sqrt();
        let slot = &mut acc[r.y_s as usize];
        slot.0 += d;
        slot.1 += 1;
    }
    let mean = |(s, n): (f64, usize)| if n == 0 { f64::NAN } else { s / n as f64 };
    (mean(acc[0]), mean(acc[1]))
}
