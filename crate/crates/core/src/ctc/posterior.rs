use crate::error::{Error, Result};
use crate::numerics::{log_softmax_cols, Tensor2D};
use crate::scalar::Scalar;

/// Per-frame log-probabilities over an extended inventory, `|L'| x T`.
/// Every column exponentiates to a distribution.
#[derive(Clone, Debug, PartialEq)]
pub struct PosteriorMatrix<S> {
    log_probs: Tensor2D<S>,
}

impl<S: Scalar> PosteriorMatrix<S> {
    fn tolerance() -> f64 {
        1e-10f64.max(S::epsilon().to_f64_lossy() * 64.0)
    }

    /// Validates that every column sums to one within `1e-10` (looser for
    /// single precision).
    pub fn from_log_probs(log_probs: Tensor2D<S>) -> Result<Self> {
        if log_probs.rows() < 1 {
            return Err(Error::contract("posterior needs at least the blank row"));
        }
        let tol = Self::tolerance();
        for t in 0..log_probs.cols() {
            let mut sum = 0.0f64;
            for k in 0..log_probs.rows() {
                let v = log_probs.get(k, t);
                if v.is_nan() || v > S::zero() + S::of(tol) {
                    return Err(Error::InvalidPosterior {
                        column: t,
                        sum: f64::NAN,
                    });
                }
                sum += v.to_f64_lossy().exp();
            }
            if (sum - 1.0).abs() > tol {
                return Err(Error::InvalidPosterior { column: t, sum });
            }
        }
        Ok(Self { log_probs })
    }

    pub fn from_probs(probs: &Tensor2D<S>) -> Result<Self> {
        Self::from_log_probs(probs.map(|p| p.ln()))
    }

    /// Column-wise log-softmax of unnormalised scores.
    pub fn from_logits(logits: &Tensor2D<S>) -> Self {
        Self {
            log_probs: log_softmax_cols(logits),
        }
    }

    #[inline]
    pub fn log_prob(&self, unit: usize, frame: usize) -> S {
        self.log_probs.get(unit, frame)
    }

    pub fn frames(&self) -> usize {
        self.log_probs.cols()
    }

    /// `|L'|`.
    pub fn classes(&self) -> usize {
        self.log_probs.rows()
    }

    pub fn log_probs(&self) -> &Tensor2D<S> {
        &self.log_probs
    }

    /// Per-frame argmax, ties resolved to the lowest index.
    pub fn argmax_path(&self) -> Vec<usize> {
        (0..self.frames())
            .map(|t| {
                let mut best = 0;
                for k in 1..self.classes() {
                    if self.log_prob(k, t) > self.log_prob(best, t) {
                        best = k;
                    }
                }
                best
            })
            .collect()
    }

    /// Reorders rows: row `k` of the result is row `perm[k]` of `self`.
    pub fn permute_rows(&self, perm: &[usize]) -> Self {
        Self {
            log_probs: Tensor2D::from_fn(self.classes(), self.frames(), |k, t| {
                self.log_prob(perm[k], t)
            }),
        }
    }
}
