//! Tape-free evaluations of the attention primitives.

use super::pattern::Pattern;
use super::tape::row_softmax_values;
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::graph::BoolMatrix;
use crate::scalar::Scalar;

/// Row-wise softmax of `logits + bias` restricted to `mask`. Masked entries are
/// exactly zero; rows with no allowed entry are all zero.
pub fn softmax_bias_mask<T: Scalar>(logits: &Tensor<T>, bias: &Tensor<T>, mask: &BoolMatrix) -> Result<Tensor<T>> {
    if logits.shape() != bias.shape() {
        return Err(Error::Shape { op: "softmax_bias_mask", lhs: logits.shape(), rhs: bias.shape() });
    }
    if logits.shape() != [mask.rows(), mask.cols()] {
        return Err(Error::Shape { op: "softmax_bias_mask", lhs: logits.shape(), rhs: [mask.rows(), mask.cols()] });
    }
    let pattern = Pattern::from_mask(mask);
    let scores: Vec<T> = pattern.entries().map(|(r, c)| logits.get(r, c) + bias.get(r, c)).collect();
    let weights = row_softmax_values(&scores, &pattern);
    let mut out = Tensor::zeros(logits.rows(), logits.cols());
    for (e, (r, c)) in pattern.entries().enumerate() {
        out.set(r, c, weights[e]);
    }
    if !out.is_finite() {
        return Err(Error::NonFinite("softmax_bias_mask"));
    }
    Ok(out)
}

pub fn gelu<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| v * v.normal_cdf())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_rows_are_zero() {
        let logits = Tensor::from_fn(2, 3, |r, c| (r + c) as f64);
        let bias = Tensor::zeros(2, 3);
        let mask = BoolMatrix::from_fn(2, 3, |r, _| r == 1);
        let w = softmax_bias_mask(&logits, &bias, &mask).unwrap();
        assert_eq!(w.row(0), &[0.0, 0.0, 0.0]);
        assert!((w.row(1).iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn shape_mismatch() {
        let a = Tensor::<f64>::zeros(2, 2);
        let b = Tensor::<f64>::zeros(2, 3);
        assert!(softmax_bias_mask(&a, &b, &BoolMatrix::new(2, 2)).is_err());
    }
}
