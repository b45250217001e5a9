use serde::{Deserialize, Serialize};

use crate::numerics::Tensor2D;
use crate::scalar::Scalar;

/// Plain stochastic gradient descent with global-norm clipping.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Sgd {
    pub learning_rate: f64,
    /// Gradients whose global L2 norm exceeds this are rescaled to it;
    /// zero disables clipping.
    pub clip_norm: f64,
}

impl Default for Sgd {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            clip_norm: 5.0,
        }
    }
}

pub fn global_norm<S: Scalar>(grads: &[Tensor2D<S>]) -> f64 {
    grads
        .iter()
        .map(|g| g.sum_squares().to_f64_lossy())
        .sum::<f64>()
        .sqrt()
}

impl Sgd {
    /// Applies one update and returns the gradient norm before clipping.
    pub fn step<S: Scalar>(&self, params: Vec<&mut Tensor2D<S>>, grads: &[Tensor2D<S>]) -> f64 {
        assert_eq!(params.len(), grads.len(), "one gradient per parameter");
        let norm = global_norm(grads);
        if self.learning_rate == 0.0 {
            return norm;
        }
        let mut scale = self.learning_rate;
        if self.clip_norm > 0.0 && norm > self.clip_norm {
            scale *= self.clip_norm / norm;
        }
        let step = S::of(-scale);
        for (p, g) in params.into_iter().zip(grads) {
            p.axpy(step, g);
        }
        norm
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clipping_rescales_long_gradients() {
        let mut p = Tensor2D::<f64>::zeros(1, 2);
        let g = Tensor2D::from_vec(1, 2, vec![30.0, 40.0]).unwrap();
        let sgd = Sgd {
            learning_rate: 1.0,
            clip_norm: 5.0,
        };
        let norm = sgd.step(vec![&mut p], &[g]);
        assert_eq!(norm, 50.0);
        assert!((p.get(0, 0) + 3.0).abs() < 1e-12 && (p.get(0, 1) + 4.0).abs() < 1e-12);
    }

    #[test]
    fn zero_learning_rate_is_identity() {
        let mut p = Tensor2D::<f64>::filled(2, 2, 0.3);
        let before = p.clone();
        Sgd {
            learning_rate: 0.0,
            clip_norm: 0.0,
        }
        .step(vec![&mut p], &[Tensor2D::filled(2, 2, 1.0)]);
        assert_eq!(p, before);
    }
}
