use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::{uniform_tensor, InitConfig, ParamGroup};
use crate::numerics::{Tape, Tensor2D, Var};
use crate::scalar::Scalar;

/// Affine map applied independently to every frame.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionParams<S> {
    /// `out x in`.
    pub weight: Tensor2D<S>,
    /// `out x 1`.
    pub bias: Tensor2D<S>,
}

pub fn projection_param_count(input_dim: usize, output_dim: usize) -> usize {
    output_dim * (input_dim + 1)
}

impl<S: Scalar> ProjectionParams<S> {
    pub fn zeros(input_dim: usize, output_dim: usize) -> Self {
        Self {
            weight: Tensor2D::zeros(output_dim, input_dim),
            bias: Tensor2D::zeros(output_dim, 1),
        }
    }

    pub fn random<R: Rng>(
        input_dim: usize,
        output_dim: usize,
        init: &InitConfig,
        rng: &mut R,
    ) -> Self {
        Self {
            weight: uniform_tensor(output_dim, input_dim, init.range, rng),
            bias: uniform_tensor(output_dim, 1, init.range, rng),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn apply(&self, tape: &mut Tape<S>, vars: &[Var], x: Var) -> Result<Var> {
        let y = tape.matmul(vars[0], x)?;
        tape.add_bias(y, vars[1])
    }
}

impl<S: Scalar> ParamGroup<S> for ProjectionParams<S> {
    fn tensors(&self) -> Vec<&Tensor2D<S>> {
        vec![&self.weight, &self.bias]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor2D<S>> {
        vec![&mut self.weight, &mut self.bias]
    }
}

pub fn linear_forward<S: Scalar>(
    proj: &ProjectionParams<S>,
    h: &Tensor2D<S>,
) -> Result<Tensor2D<S>> {
    if h.rows() != proj.input_dim() {
        return Err(Error::contract(format!(
            "projection expects {} input rows, got {}",
            proj.input_dim(),
            h.rows()
        )));
    }
    let mut y = proj.weight.matmul(h)?;
    for r in 0..y.rows() {
        let b = proj.bias.get(r, 0);
        for v in y.row_mut(r) {
            *v += b;
        }
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_weights_broadcast_bias() {
        let mut p = ProjectionParams::<f64>::zeros(4, 3);
        p.bias = Tensor2D::column(&[1.0, -2.0, 0.5]);
        let y = linear_forward(&p, &Tensor2D::from_fn(4, 5, |r, c| (r + c) as f64)).unwrap();
        for t in 0..5 {
            assert_eq!(y.col(t), vec![1.0, -2.0, 0.5]);
        }
    }

    #[test]
    fn identity_reproduces_input() {
        let mut p = ProjectionParams::<f64>::zeros(3, 3);
        for k in 0..3 {
            p.weight.set(k, k, 1.0);
        }
        let x = Tensor2D::from_fn(3, 4, |r, c| r as f64 * 1.5 - c as f64);
        assert_eq!(linear_forward(&p, &x).unwrap(), x);
    }

    #[test]
    fn matches_triple_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let init = InitConfig {
            range: 1.0,
            forget_bias: 0.0,
        };
        let p = ProjectionParams::<f64>::random(5, 4, &init, &mut rng);
        let x = Tensor2D::from_fn(5, 6, |r, c| ((r * 6 + c) as f64).sin());
        let y = linear_forward(&p, &x).unwrap();
        for i in 0..4 {
            for t in 0..6 {
                let mut s = p.bias.get(i, 0);
                for k in 0..5 {
                    s += p.weight.get(i, k) * x.get(k, t);
                }
                assert!((s - y.get(i, t)).abs() < 1e-12);
            }
        }
        assert!(linear_forward(&p, &Tensor2D::zeros(4, 2)).is_err());
    }

    #[test]
    fn param_count() {
        assert_eq!(projection_param_count(8, 10), 90);
        assert_eq!(ProjectionParams::<f64>::zeros(2 * 4, 10).param_count(), 90);
    }
}
