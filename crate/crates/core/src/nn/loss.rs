use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Row-wise softmax of `[N, M]` logits with max subtraction.
pub fn softmax<T: Scalar>(logits: &Tensor<T>) -> Result<Tensor<T>> {
    let [_, m] = *logits.shape() else {
        return Err(Error::shape(
            "softmax",
            format!("logits must be [N,M], got {:?}", logits.shape()),
        ));
    };
    let mut out = logits.data().to_vec();
    for row in out.chunks_exact_mut(m) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut sum = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    Tensor::new(logits.shape().to_vec(), out)
}

/// Mean cross-entropy of softmax(logits) against integer targets.
///
/// Returns the loss and `d loss / d logits = (P - onehot) / N`.
pub fn softmax_cross_entropy<T: Scalar>(
    logits: &Tensor<T>,
    targets: &[usize],
) -> Result<(T, Tensor<T>)> {
    let [n, m] = *logits.shape() else {
        return Err(Error::shape(
            "softmax_cross_entropy",
            format!("logits must be [N,M], got {:?}", logits.shape()),
        ));
    };
    if targets.len() != n {
        return Err(Error::shape(
            "softmax_cross_entropy",
            format!("{n} rows but {} targets", targets.len()),
        ));
    }
    if let Some(&bad) = targets.iter().find(|&&t| t >= m) {
        return Err(Error::Label(format!(
            "target class {bad} out of range for {m} classes"
        )));
    }
    let x = logits.data();
    let mut grad = vec![T::zero(); n * m];
    let mut total = T::zero();
    let inv_n = T::one() / T::from_f64(n as f64);
    for (i, &target) in targets.iter().enumerate() {
        let row = &x[i * m..(i + 1) * m];
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let sum: T = row.iter().map(|&v| (v - max).exp()).sum();
        let log_z = max + sum.ln();
        total += log_z - row[target];
        let g = &mut grad[i * m..(i + 1) * m];
        for (gj, &v) in g.iter_mut().zip(row) {
            *gj = (v - log_z).exp() * inv_n;
        }
        g[target] -= inv_n;
    }
    Ok((total * inv_n, Tensor::new(vec![n, m], grad)?))
}
