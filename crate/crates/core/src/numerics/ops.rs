use crate::error::{Error, Result};
use crate::numerics::Tensor2D;
use crate::scalar::Scalar;

/// `log(sum(exp(v)))` with max-shifting. Returns `-inf` iff every entry is `-inf`.
pub fn log_sum_exp<S: Scalar>(values: &[S]) -> Result<S> {
    if values.is_empty() {
        return Err(Error::contract("log_sum_exp of an empty vector"));
    }
    Ok(log_sum_exp_unchecked(values))
}

#[inline]
pub(crate) fn log_sum_exp_unchecked<S: Scalar>(values: &[S]) -> S {
    let max = values
        .iter()
        .copied()
        .fold(S::neg_infinity(), |m, v| if v > m { v } else { m });
    if max == S::neg_infinity() {
        return max;
    }
    let mut acc = S::zero();
    for &v in values {
        acc += (v - max).exp();
    }
    max + acc.ln()
}

/// Two-term log-domain addition.
#[inline]
pub(crate) fn log_add<S: Scalar>(a: S, b: S) -> S {
    if a == S::neg_infinity() {
        return b;
    }
    if b == S::neg_infinity() {
        return a;
    }
    if a > b {
        a + (b - a).exp().ln_1p()
    } else {
        b + (a - b).exp().ln_1p()
    }
}

pub fn log_softmax<S: Scalar>(row: &[S]) -> Vec<S> {
    if row.is_empty() {
        return Vec::new();
    }
    let norm = log_sum_exp_unchecked(row);
    row.iter().map(|&v| v - norm).collect()
}

/// Column-wise log-softmax of a `classes x frames` matrix.
pub fn log_softmax_cols<S: Scalar>(logits: &Tensor2D<S>) -> Tensor2D<S> {
    let mut out = Tensor2D::zeros(logits.rows(), logits.cols());
    for t in 0..logits.cols() {
        let col = log_softmax(&logits.col(t));
        out.set_col(t, &col);
    }
    out
}

#[inline]
pub fn sigmoid<S: Scalar>(x: S) -> S {
    if x >= S::zero() {
        S::one() / (S::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (S::one() + e)
    }
}
