use serde::{Deserialize, Serialize};

use super::config::check_alpha;
use crate::error::{Error, Result};
use crate::nn::softmax_cross_entropy;
use crate::pairing::PairRecord;
use crate::tensor::{Scalar, Tensor};

/// Default contrastive margin.
pub const DEFAULT_MARGIN: f64 = 3.0;

pub fn euclidean_distance<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum::<T>()
        .sqrt()
}

/// Contrastive loss from a precomputed distance.
pub fn contrastive_from_distance(d: f64, y_s: u8, margin: f64) -> f64 {
    if y_s == 0 {
        d * d
    } else {
        let h = (margin - d).max(0.0);
        h * h
    }
}

/// `(1 - y) D^2 + y max(0, margin - D)^2` and its gradient with respect to `a`
/// (the gradient with respect to `b` is the negation).
pub fn contrastive_loss<T: Scalar>(a: &[T], b: &[T], y_s: u8, margin: T) -> (T, Vec<T>) {
    let two = T::from_f64(2.0);
    let diff: Vec<T> = a.iter().zip(b).map(|(&x, &y)| x - y).collect();
    let d2: T = diff.iter().map(|&v| v * v).sum();
    if y_s == 0 {
        return (d2, diff.iter().map(|&v| two * v).collect());
    }
    let d = d2.sqrt();
    if d >= margin {
        return (T::zero(), vec![T::zero(); a.len()]);
    }
    let h = margin - d;
    // At D = 0 the direction is undefined; the zero subgradient is used.
    let scale = if d > T::zero() { -two * h / d } else { T::zero() };
    (h * h, diff.iter().map(|&v| scale * v).collect())
}

/// Mean cross-entropy of both branches' head outputs, or 0 for a masked pair.
pub fn identity_loss<T: Scalar>(out_a: &[T], out_b: &[T], id_label: i64) -> Result<T> {
    if id_label < 0 {
        return Ok(T::zero());
    }
    let m = out_a.len();
    if out_b.len() != m {
        return Err(Error::shape(
            "identity_loss",
            format!("branch outputs differ in width: {m} vs {}", out_b.len()),
        ));
    }
    let mut data = out_a.to_vec();
    data.extend_from_slice(out_b);
    let logits = Tensor::new(vec![2, m], data)?;
    let label = id_label as usize;
    Ok(softmax_cross_entropy(&logits, &[label, label])?.0)
}

/// `alpha * loss_c + (1 - alpha) * loss_p`; exact at both endpoints.
pub fn joint_loss(alpha: f64, loss_c: f64, loss_p: f64) -> Result<f64> {
    check_alpha(alpha)?;
    Ok(if alpha == 1.0 {
        loss_c
    } else if alpha == 0.0 {
        loss_p
    } else {
        alpha * loss_c + (1.0 - alpha) * loss_p
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub loss_c: f64,
    pub loss_p: f64,
    pub loss_f: f64,
}

/// Batch objective and its gradients.
pub struct BatchLoss<T: Scalar> {
    pub parts: LossParts,
    /// `d loss_f / d features`, `[2B, F]` (branch a rows first).
    pub grad_features: Tensor<T>,
    /// `d loss_f / d head outputs`, `[2B, M]`; zero rows for masked pairs.
    pub grad_head: Tensor<T>,
}

/// Joint objective over a batch of `B` pairs.
///
/// `features` and `head_out` hold branch-a rows `0..B` followed by branch-b
/// rows `B..2B`. Both loss terms are means over the `B` pairs; masked pairs
/// contribute zero to the identity term.
pub fn pair_batch_loss<T: Scalar>(
    features: &Tensor<T>,
    head_out: &Tensor<T>,
    records: &[PairRecord],
    alpha: f64,
    margin: f64,
) -> Result<BatchLoss<T>> {
    check_alpha(alpha)?;
    let b = records.len();
    let [rows, f] = *features.shape() else {
        return Err(Error::shape("pair_batch_loss", "features must be [2B, F]"));
    };
    let [hrows, m] = *head_out.shape() else {
        return Err(Error::shape("pair_batch_loss", "head output must be [2B, M]"));
    };
    if b == 0 || rows != 2 * b || hrows != 2 * b {
        return Err(Error::shape(
            "pair_batch_loss",
            format!("{b} pairs need {} rows, got {rows} features / {hrows} head rows", 2 * b),
        ));
    }
    let a_w = T::from_f64(alpha);
    let p_w = T::from_f64(1.0 - alpha);
    let inv_b = T::from_f64(1.0 / b as f64);
    let margin_t = T::from_f64(margin);

    let mut grad_features = Tensor::<T>::zeros(&[2 * b, f]);
    let mut loss_c = 0.0;
    for (i, r) in records.iter().enumerate() {
        let (l, g) = contrastive_loss(features.row(i), features.row(b + i), r.y_s, margin_t);
        loss_c += l.as_f64();
        let gd = grad_features.data_mut();
        for j in 0..f {
            let v = a_w * inv_b * g[j];
            gd[i * f + j] += v;
            gd[(b + i) * f + j] -= v;
        }
    }
    loss_c /= b as f64;

    let mut grad_head = Tensor::<T>::zeros(&[2 * b, m]);
    let kept: Vec<(usize, usize)> = records
        .iter()
        .enumerate()
        .filter_map(|(i, r)| r.identity().map(|c| (i, c)))
        .collect();
    let mut loss_p = 0.0;
    if !kept.is_empty() {
        let mut rows_idx = Vec::with_capacity(2 * kept.len());
        let mut targets = Vec::with_capacity(2 * kept.len());
        for &(i, c) in &kept {
            rows_idx.push(i);
            targets.push(c);
        }
        for &(i, c) in &kept {
            rows_idx.push(b + i);
            targets.push(c);
        }
        let mut sel = Vec::with_capacity(rows_idx.len() * m);
        for &r in &rows_idx {
            sel.extend_from_slice(head_out.row(r));
        }
        let logits = Tensor::new(vec![rows_idx.len(), m], sel)?;
        let (mean_ce, g) = softmax_cross_entropy(&logits, &targets)?;
        // Mean over kept rows, rescaled to a mean over all B pairs.
        let share = kept.len() as f64 / b as f64;
        loss_p = mean_ce.as_f64() * share;
        let scale = p_w * T::from_f64(share);
        let gh = grad_head.data_mut();
        for (k, &r) in rows_idx.iter().enumerate() {
            for j in 0..m {
                gh[r * m + j] = scale * g.data()[k * m + j];
            }
        }
    }
    let loss_f = joint_loss(alpha, loss_c, loss_p)?;
    Ok(BatchLoss {
        parts: LossParts {
            loss_c,
            loss_p,
            loss_f,
        },
        grad_features,
        grad_head,
    })
}
