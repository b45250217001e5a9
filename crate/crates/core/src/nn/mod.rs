//! LSTM and affine building blocks.

mod linear;
mod lstm;
mod optim;

pub use linear::{linear_forward, projection_param_count, ProjectionParams};
pub use lstm::{
    bilstm_forward, bilstm_param_count, lstm_param_count, lstm_step, lstm_step_on_tape,
    BiLstmParams, LstmParams,
};
pub use optim::{global_norm, Sgd};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::numerics::Tensor2D;
use crate::scalar::Scalar;

/// Parameter initialisation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitConfig {
    /// Weights are drawn from `U[-range, range]`.
    pub range: f64,
    /// Initial forget-gate bias.
    pub forget_bias: f64,
}

impl Default for InitConfig {
    fn default() -> Self {
        Self {
            range: 0.05,
            forget_bias: 1.0,
        }
    }
}

pub(crate) fn uniform_tensor<S: Scalar, R: Rng>(
    rows: usize,
    cols: usize,
    range: f64,
    rng: &mut R,
) -> Tensor2D<S> {
    Tensor2D::from_fn(rows, cols, |_, _| {
        if range == 0.0 {
            S::zero()
        } else {
            S::of(rng.random_range(-range..=range))
        }
    })
}

/// A group of parameter tensors visited in a fixed order.
pub trait ParamGroup<S: Scalar> {
    fn tensors(&self) -> Vec<&Tensor2D<S>>;
    fn tensors_mut(&mut self) -> Vec<&mut Tensor2D<S>>;

    /// Exact scalar parameter count.
    fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }
}
