use alloc::vec::Vec;

use super::tensor::Tensor;
use crate::error::{check_dim, Error, Result};

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(logits: &Tensor) -> Result<Tensor> {
    if !logits.is_finite() {
        return Err(Error::NonFinite("logits"));
    }
    let c = logits.cols();
    let mut out = Vec::with_capacity(logits.data().len());
    for i in 0..logits.rows() {
        let row = logits.row(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let start = out.len();
        out.extend(row.iter().map(|&z| libm::exp(z - max)));
        let sum: f64 = out[start..].iter().sum();
        out[start..].iter_mut().for_each(|p| *p /= sum);
    }
    Tensor::matrix(logits.rows(), c, out)
}

/// Mean negative log-likelihood `-Σ_c t_c·log softmax(z)_c` over the batch
/// and its gradient `(softmax - t)/B` with respect to the logits.
pub fn softmax_cross_entropy(logits: &Tensor, targets: &Tensor) -> Result<(f64, Tensor)> {
    check_dim("targets rows", logits.rows(), targets.rows())?;
    check_dim("targets width", logits.cols(), targets.cols())?;
    if !logits.is_finite() {
        return Err(Error::NonFinite("logits"));
    }
    let b = logits.rows() as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(logits.data().len());
    for i in 0..logits.rows() {
        let row = logits.row(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let log_sum = libm::log(row.iter().map(|&z| libm::exp(z - max)).sum::<f64>());
        for (&z, &t) in row.iter().zip(targets.row(i)) {
            let log_p = z - max - log_sum;
            if t != 0.0 {
                loss -= t * log_p;
            }
            grad.push((libm::exp(log_p) - t) / b);
        }
    }
    Ok((loss / b, Tensor::matrix(logits.rows(), logits.cols(), grad)?))
}
