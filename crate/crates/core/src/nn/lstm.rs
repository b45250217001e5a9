use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::{uniform_tensor, InitConfig, ParamGroup};
use crate::numerics::{sigmoid, Tape, Tensor2D, Var};
use crate::scalar::Scalar;

/// Parameters of one LSTM direction. Gate rows are ordered input, forget,
/// candidate, output; no peepholes.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmParams<S> {
    pub w_in: Tensor2D<S>,
    pub w_rec: Tensor2D<S>,
    pub bias: Tensor2D<S>,
}

/// `4 * (H * (I + H) + H)`.
pub fn lstm_param_count(input_dim: usize, hidden: usize) -> usize {
    4 * (hidden * (input_dim + hidden) + hidden)
}

pub fn bilstm_param_count(input_dim: usize, hidden: usize) -> usize {
    2 * lstm_param_count(input_dim, hidden)
}

impl<S: Scalar> LstmParams<S> {
    pub fn zeros(input_dim: usize, hidden: usize) -> Self {
        Self {
            w_in: Tensor2D::zeros(4 * hidden, input_dim),
            w_rec: Tensor2D::zeros(4 * hidden, hidden),
            bias: Tensor2D::zeros(4 * hidden, 1),
        }
    }

    pub fn random<R: Rng>(input_dim: usize, hidden: usize, init: &InitConfig, rng: &mut R) -> Self {
        let w_in = uniform_tensor(4 * hidden, input_dim, init.range, rng);
        let w_rec = uniform_tensor(4 * hidden, hidden, init.range, rng);
        let mut bias = uniform_tensor(4 * hidden, 1, init.range, rng);
        for k in hidden..2 * hidden {
            bias.set(k, 0, S::of(init.forget_bias));
        }
        Self { w_in, w_rec, bias }
    }

    pub fn input_dim(&self) -> usize {
        self.w_in.cols()
    }

    pub fn hidden(&self) -> usize {
        self.w_rec.cols()
    }

    /// Runs the whole sequence on `tape` with the fused LSTM operation.
    pub fn apply(&self, tape: &mut Tape<S>, vars: &[Var], x: Var, reverse: bool) -> Result<Var> {
        tape.lstm(x, vars[0], vars[1], vars[2], reverse)
    }
}

impl<S: Scalar> ParamGroup<S> for LstmParams<S> {
    fn tensors(&self) -> Vec<&Tensor2D<S>> {
        vec![&self.w_in, &self.w_rec, &self.bias]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor2D<S>> {
        vec![&mut self.w_in, &mut self.w_rec, &mut self.bias]
    }
}

/// One LSTM recurrence step without a tape.
pub fn lstm_step<S: Scalar>(
    params: &LstmParams<S>,
    x: &[S],
    h_prev: &[S],
    c_prev: &[S],
) -> Result<(Vec<S>, Vec<S>)> {
    let hidden = params.hidden();
    if x.len() != params.input_dim() || h_prev.len() != hidden || c_prev.len() != hidden {
        return Err(Error::contract(format!(
            "lstm_step dims: x {}, h {}, c {} for input {} hidden {hidden}",
            x.len(),
            h_prev.len(),
            c_prev.len(),
            params.input_dim()
        )));
    }
    let z: Vec<S> = (0..4 * hidden)
        .map(|r| {
            let mut acc = params.bias.get(r, 0);
            for (&w, &v) in params.w_in.row(r).iter().zip(x) {
                acc += w * v;
            }
            for (&w, &v) in params.w_rec.row(r).iter().zip(h_prev) {
                acc += w * v;
            }
            acc
        })
        .collect();
    let mut h = vec![S::zero(); hidden];
    let mut c = vec![S::zero(); hidden];
    for k in 0..hidden {
        let i = sigmoid(z[k]);
        let f = sigmoid(z[hidden + k]);
        let g = z[2 * hidden + k].tanh();
        let o = sigmoid(z[3 * hidden + k]);
        c[k] = f * c_prev[k] + i * g;
        h[k] = o * c[k].tanh();
    }
    Ok((h, c))
}

/// One LSTM step composed from primitive tape operations. `x`, `h_prev` and
/// `c_prev` are column vectors; returns `(h, c)`.
pub fn lstm_step_on_tape<S: Scalar>(
    tape: &mut Tape<S>,
    vars: &[Var],
    x: Var,
    h_prev: Var,
    c_prev: Var,
) -> Result<(Var, Var)> {
    let hidden = tape.value(vars[1]).cols();
    let zx = tape.matmul(vars[0], x)?;
    let zh = tape.matmul(vars[1], h_prev)?;
    let z = tape.add(zx, zh)?;
    let z = tape.add_bias(z, vars[2])?;
    let zi = tape.slice_rows(z, 0, hidden)?;
    let zf = tape.slice_rows(z, hidden, hidden)?;
    let zg = tape.slice_rows(z, 2 * hidden, hidden)?;
    let zo = tape.slice_rows(z, 3 * hidden, hidden)?;
    let i = tape.sigmoid(zi);
    let f = tape.sigmoid(zf);
    let g = tape.tanh(zg);
    let o = tape.sigmoid(zo);
    let keep = tape.mul(f, c_prev)?;
    let write = tape.mul(i, g)?;
    let c = tape.add(keep, write)?;
    let tc = tape.tanh(c);
    let h = tape.mul(o, tc)?;
    Ok((h, c))
}

/// Forward and backward LSTM over the same input; output rows `0..H` are
/// the forward direction, rows `H..2H` the backward direction.
#[derive(Clone, Debug, PartialEq)]
pub struct BiLstmParams<S> {
    pub fwd: LstmParams<S>,
    pub bwd: LstmParams<S>,
}

impl<S: Scalar> BiLstmParams<S> {
    pub fn random<R: Rng>(input_dim: usize, hidden: usize, init: &InitConfig, rng: &mut R) -> Self {
        let fwd = LstmParams::random(input_dim, hidden, init, rng);
        let bwd = LstmParams::random(input_dim, hidden, init, rng);
        Self { fwd, bwd }
    }

    pub fn zeros(input_dim: usize, hidden: usize) -> Self {
        Self {
            fwd: LstmParams::zeros(input_dim, hidden),
            bwd: LstmParams::zeros(input_dim, hidden),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.fwd.input_dim()
    }

    pub fn hidden(&self) -> usize {
        self.fwd.hidden()
    }

    pub fn output_dim(&self) -> usize {
        2 * self.hidden()
    }

    /// `vars` holds the six tensors in [`ParamGroup::tensors`] order.
    pub fn apply(&self, tape: &mut Tape<S>, vars: &[Var], x: Var) -> Result<Var> {
        let f = self.fwd.apply(tape, &vars[0..3], x, false)?;
        let b = self.bwd.apply(tape, &vars[3..6], x, true)?;
        tape.concat_rows(f, b)
    }
}

impl<S: Scalar> ParamGroup<S> for BiLstmParams<S> {
    fn tensors(&self) -> Vec<&Tensor2D<S>> {
        let mut v = self.fwd.tensors();
        v.extend(self.bwd.tensors());
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor2D<S>> {
        let mut v = self.fwd.tensors_mut();
        v.extend(self.bwd.tensors_mut());
        v
    }
}

/// `(2H) x T` bidirectional encoding of an `F x T` sequence.
pub fn bilstm_forward<S: Scalar>(params: &BiLstmParams<S>, x: &Tensor2D<S>) -> Result<Tensor2D<S>> {
    if x.cols() == 0 {
        return Err(Error::contract("bilstm_forward over an empty sequence"));
    }
    let mut tape = Tape::new();
    let vars: Vec<Var> = params
        .tensors()
        .into_iter()
        .map(|t| tape.leaf(t.clone()))
        .collect();
    let xv = tape.leaf(x.clone());
    let out = params.apply(&mut tape, &vars, xv)?;
    Ok(tape.value(out).clone())
}
