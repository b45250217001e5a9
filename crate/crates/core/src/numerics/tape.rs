use crate::error::{Error, Result};
use crate::numerics::ops::sigmoid;
use crate::numerics::Tensor2D;
use crate::scalar::Scalar;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Forward activations of a fused LSTM sequence, kept for the backward pass.
///
/// Everything is stored time-major in processing order.
#[derive(Clone, Debug)]
pub struct LstmCache<S> {
    hidden: usize,
    /// Time index visited at each step.
    order: Vec<usize>,
    /// `[i, f, g, o]` activations per step, `4H` each.
    gates: Vec<S>,
    h_prev: Vec<S>,
    c_prev: Vec<S>,
    tanh_c: Vec<S>,
}

enum Op<S> {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    /// `x + b` with `b` a column broadcast over every column of `x`.
    AddBias(Var, Var),
    Mul(Var, Var),
    Sigmoid(Var),
    Tanh(Var),
    ConcatRows(Var, Var),
    SliceRows(Var, usize),
    ReverseCols(Var),
    Lstm {
        input: Var,
        w_in: Var,
        w_rec: Var,
        bias: Var,
        cache: Box<LstmCache<S>>,
    },
    LogSoftmaxCols(Var),
    /// Scalar loss whose gradient with respect to `input` was computed
    /// together with its value.
    FusedLoss {
        input: Var,
        grad: Tensor2D<S>,
    },
    WeightedSum(Vec<(Var, S)>),
    SumSquares(Var),
}

struct Node<S> {
    value: Tensor2D<S>,
    op: Op<S>,
}

/// Records primitive operations in order; [`Tape::backward`] replays them in reverse.
pub struct Tape<S> {
    nodes: Vec<Node<S>>,
}

impl<S: Scalar> Default for Tape<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> Tape<S> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor2D<S> {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor2D<S>, op: Op<S>) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor2D<S>) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        Ok(self.push(value, Op::MatMul(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).add(self.value(b))?;
        Ok(self.push(value, Op::Add(a, b)))
    }

    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (xv, bv) = (self.value(x), self.value(bias));
        if bv.cols() != 1 || bv.rows() != xv.rows() {
            return Err(Error::contract(format!(
                "bias shape {:?} does not broadcast over {:?}",
                bv.shape(),
                xv.shape()
            )));
        }
        let value = Tensor2D::from_fn(xv.rows(), xv.cols(), |r, c| xv.get(r, c) + bv.get(r, 0));
        Ok(self.push(value, Op::AddBias(x, bias)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).hadamard(self.value(b))?;
        Ok(self.push(value, Op::Mul(a, b)))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let value = self.value(x).map(sigmoid);
        self.push(value, Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| v.tanh());
        self.push(value, Op::Tanh(x))
    }

    pub fn concat_rows(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).concat_rows(self.value(b))?;
        Ok(self.push(value, Op::ConcatRows(a, b)))
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let value = self.value(x).slice_rows(start, len)?;
        Ok(self.push(value, Op::SliceRows(x, start)))
    }

    pub fn reverse_cols(&mut self, x: Var) -> Var {
        let value = self.value(x).reverse_cols();
        self.push(value, Op::ReverseCols(x))
    }

    pub fn log_softmax_cols(&mut self, x: Var) -> Var {
        let value = super::log_softmax_cols(self.value(x));
        self.push(value, Op::LogSoftmaxCols(x))
    }

    pub fn weighted_sum(&mut self, terms: &[(Var, S)]) -> Result<Var> {
        let mut acc = S::zero();
        for &(v, w) in terms {
            let t = self.value(v);
            if t.shape() != (1, 1) {
                return Err(Error::contract("weighted_sum expects scalar terms"));
            }
            acc += w * t.scalar();
        }
        Ok(self.push(Tensor2D::column(&[acc]), Op::WeightedSum(terms.to_vec())))
    }

    pub fn sum_squares(&mut self, x: Var) -> Var {
        let s = self.value(x).sum_squares();
        self.push(Tensor2D::column(&[s]), Op::SumSquares(x))
    }

    /// Records a scalar loss computed outside the tape together with its
    /// gradient with respect to `input`.
    pub fn fused_loss(&mut self, input: Var, loss: S, grad: Tensor2D<S>) -> Result<Var> {
        if grad.shape() != self.value(input).shape() {
            return Err(Error::contract("fused loss gradient shape mismatch"));
        }
        Ok(self.push(Tensor2D::column(&[loss]), Op::FusedLoss { input, grad }))
    }

    /// Unidirectional LSTM over every column of `input` (`I x T`).
    ///
    /// Gate rows are ordered input, forget, candidate, output: `w_in` is
    /// `4H x I`, `w_rec` is `4H x H`, `bias` is `4H x 1`. With `reverse` the
    /// sequence is consumed from the last frame, and the output for frame `t`
    /// stays in column `t`.
    pub fn lstm(
        &mut self,
        input: Var,
        w_in: Var,
        w_rec: Var,
        bias: Var,
        reverse: bool,
    ) -> Result<Var> {
        let x = self.value(input);
        let wi = self.value(w_in);
        let wr = self.value(w_rec);
        let b = self.value(bias);
        let hidden = wr.cols();
        let (feat, frames) = x.shape();
        if frames == 0 {
            return Err(Error::contract("lstm over an empty sequence"));
        }
        if wi.shape() != (4 * hidden, feat)
            || wr.rows() != 4 * hidden
            || b.shape() != (4 * hidden, 1)
        {
            return Err(Error::contract(format!(
                "lstm shapes: input {:?}, w_in {:?}, w_rec {:?}, bias {:?}",
                x.shape(),
                wi.shape(),
                wr.shape(),
                b.shape()
            )));
        }
        let gx = wi.matmul(x)?;
        let g4 = 4 * hidden;
        let order: Vec<usize> = if reverse {
            (0..frames).rev().collect()
        } else {
            (0..frames).collect()
        };
        let mut cache = LstmCache {
            hidden,
            order: order.clone(),
            gates: vec![S::zero(); frames * g4],
            h_prev: vec![S::zero(); frames * hidden],
            c_prev: vec![S::zero(); frames * hidden],
            tanh_c: vec![S::zero(); frames * hidden],
        };
        let mut out = Tensor2D::zeros(hidden, frames);
        let mut h = vec![S::zero(); hidden];
        let mut c = vec![S::zero(); hidden];
        let mut z = vec![S::zero(); g4];
        for (step, &t) in order.iter().enumerate() {
            for (r, zr) in z.iter_mut().enumerate() {
                let mut acc = gx.get(r, t) + b.get(r, 0);
                for (&w, &hv) in wr.row(r).iter().zip(&h) {
                    acc += w * hv;
                }
                *zr = acc;
            }
            let gates = &mut cache.gates[step * g4..(step + 1) * g4];
            for k in 0..hidden {
                gates[k] = sigmoid(z[k]);
                gates[hidden + k] = sigmoid(z[hidden + k]);
                gates[2 * hidden + k] = z[2 * hidden + k].tanh();
                gates[3 * hidden + k] = sigmoid(z[3 * hidden + k]);
            }
            cache.h_prev[step * hidden..(step + 1) * hidden].copy_from_slice(&h);
            cache.c_prev[step * hidden..(step + 1) * hidden].copy_from_slice(&c);
            for k in 0..hidden {
                let (i, f, g, o) = (
                    gates[k],
                    gates[hidden + k],
                    gates[2 * hidden + k],
                    gates[3 * hidden + k],
                );
                c[k] = f * c[k] + i * g;
                let tc = c[k].tanh();
                cache.tanh_c[step * hidden + k] = tc;
                h[k] = o * tc;
                out.set(k, t, h[k]);
            }
        }
        Ok(self.push(
            out,
            Op::Lstm {
                input,
                w_in,
                w_rec,
                bias,
                cache: Box::new(cache),
            },
        ))
    }

    /// Reverse-mode sweep from the scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients<S>> {
        if self.value(loss).shape() != (1, 1) {
            return Err(Error::contract("backward requires a scalar loss"));
        }
        let mut grads: Vec<Option<Tensor2D<S>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor2D::filled(1, 1, S::one()));
        for idx in (0..=loss.0).rev() {
            let Some(upstream) = grads[idx].take() else {
                continue;
            };
            self.propagate(idx, &upstream, &mut grads)?;
            grads[idx] = Some(upstream);
        }
        Ok(Gradients { grads })
    }

    fn propagate(
        &self,
        idx: usize,
        up: &Tensor2D<S>,
        grads: &mut [Option<Tensor2D<S>>],
    ) -> Result<()> {
        let node = &self.nodes[idx];
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let da = up.matmul_t(self.value(*b))?;
                let db = self.value(*a).t_matmul(up)?;
                accumulate(grads, *a, da);
                accumulate(grads, *b, db);
            }
            Op::Add(a, b) => {
                accumulate(grads, *a, up.clone());
                accumulate(grads, *b, up.clone());
            }
            Op::AddBias(x, b) => {
                let db = Tensor2D::from_fn(up.rows(), 1, |r, _| {
                    up.row(r).iter().fold(S::zero(), |acc, &v| acc + v)
                });
                accumulate(grads, *x, up.clone());
                accumulate(grads, *b, db);
            }
            Op::Mul(a, b) => {
                let da = up.hadamard(self.value(*b))?;
                let db = up.hadamard(self.value(*a))?;
                accumulate(grads, *a, da);
                accumulate(grads, *b, db);
            }
            Op::Sigmoid(x) => {
                let y = &node.value;
                let dx = Tensor2D::from_fn(y.rows(), y.cols(), |r, c| {
                    let s = y.get(r, c);
                    up.get(r, c) * s * (S::one() - s)
                });
                accumulate(grads, *x, dx);
            }
            Op::Tanh(x) => {
                let y = &node.value;
                let dx = Tensor2D::from_fn(y.rows(), y.cols(), |r, c| {
                    let t = y.get(r, c);
                    up.get(r, c) * (S::one() - t * t)
                });
                accumulate(grads, *x, dx);
            }
            Op::ConcatRows(a, b) => {
                let ra = self.value(*a).rows();
                let rb = self.value(*b).rows();
                accumulate(grads, *a, up.slice_rows(0, ra)?);
                accumulate(grads, *b, up.slice_rows(ra, rb)?);
            }
            Op::SliceRows(x, start) => {
                let src = self.value(*x);
                let mut dx = Tensor2D::zeros(src.rows(), src.cols());
                for r in 0..up.rows() {
                    dx.row_mut(start + r).copy_from_slice(up.row(r));
                }
                accumulate(grads, *x, dx);
            }
            Op::ReverseCols(x) => accumulate(grads, *x, up.reverse_cols()),
            Op::LogSoftmaxCols(x) => {
                let y = &node.value;
                let mut dx = Tensor2D::zeros(y.rows(), y.cols());
                for c in 0..y.cols() {
                    let total = (0..y.rows()).fold(S::zero(), |acc, r| acc + up.get(r, c));
                    for r in 0..y.rows() {
                        dx.set(r, c, up.get(r, c) - y.get(r, c).exp() * total);
                    }
                }
                accumulate(grads, *x, dx);
            }
            Op::FusedLoss { input, grad } => {
                let mut dx = grad.clone();
                dx.scale(up.scalar());
                accumulate(grads, *input, dx);
            }
            Op::WeightedSum(terms) => {
                for &(v, w) in terms {
                    accumulate(grads, v, Tensor2D::filled(1, 1, w * up.scalar()));
                }
            }
            Op::SumSquares(x) => {
                let mut dx = self.value(*x).clone();
                dx.scale(S::of(2.0) * up.scalar());
                accumulate(grads, *x, dx);
            }
            Op::Lstm {
                input,
                w_in,
                w_rec,
                bias,
                cache,
            } => {
                let (d_in, d_wi, d_wr, d_b) =
                    self.lstm_backward(*input, *w_in, *w_rec, cache, up)?;
                accumulate(grads, *input, d_in);
                accumulate(grads, *w_in, d_wi);
                accumulate(grads, *w_rec, d_wr);
                accumulate(grads, *bias, d_b);
            }
        }
        Ok(())
    }

    #[allow(clippy::type_complexity)]
    fn lstm_backward(
        &self,
        input: Var,
        w_in: Var,
        w_rec: Var,
        cache: &LstmCache<S>,
        up: &Tensor2D<S>,
    ) -> Result<(Tensor2D<S>, Tensor2D<S>, Tensor2D<S>, Tensor2D<S>)> {
        let hidden = cache.hidden;
        let g4 = 4 * hidden;
        let frames = cache.order.len();
        let wr = self.value(w_rec);
        let mut d_gates = Tensor2D::zeros(g4, frames);
        let mut d_wr = Tensor2D::zeros(g4, hidden);
        let mut dh_next = vec![S::zero(); hidden];
        let mut dc_next = vec![S::zero(); hidden];
        let mut dz = vec![S::zero(); g4];
        for step in (0..frames).rev() {
            let t = cache.order[step];
            let gates = &cache.gates[step * g4..(step + 1) * g4];
            let c_prev = &cache.c_prev[step * hidden..(step + 1) * hidden];
            let h_prev = &cache.h_prev[step * hidden..(step + 1) * hidden];
            let tanh_c = &cache.tanh_c[step * hidden..(step + 1) * hidden];
            for k in 0..hidden {
                let (i, f, g, o) = (
                    gates[k],
                    gates[hidden + k],
                    gates[2 * hidden + k],
                    gates[3 * hidden + k],
                );
                let dh = up.get(k, t) + dh_next[k];
                let tc = tanh_c[k];
                let d_o = dh * tc;
                let dc = dc_next[k] + dh * o * (S::one() - tc * tc);
                let d_i = dc * g;
                let d_g = dc * i;
                let d_f = dc * c_prev[k];
                dc_next[k] = dc * f;
                dz[k] = d_i * i * (S::one() - i);
                dz[hidden + k] = d_f * f * (S::one() - f);
                dz[2 * hidden + k] = d_g * (S::one() - g * g);
                dz[3 * hidden + k] = d_o * o * (S::one() - o);
            }
            for (r, &d) in dz.iter().enumerate() {
                d_gates.set(r, t, d);
                if d != S::zero() {
                    for (acc, &hp) in d_wr.row_mut(r).iter_mut().zip(h_prev) {
                        *acc += d * hp;
                    }
                }
            }
            dh_next.iter_mut().for_each(|v| *v = S::zero());
            for (r, &d) in dz.iter().enumerate() {
                if d == S::zero() {
                    continue;
                }
                for (acc, &w) in dh_next.iter_mut().zip(wr.row(r)) {
                    *acc += d * w;
                }
            }
        }
        let d_b = Tensor2D::from_fn(g4, 1, |r, _| {
            d_gates.row(r).iter().fold(S::zero(), |acc, &v| acc + v)
        });
        let d_wi = d_gates.matmul_t(self.value(input))?;
        let d_in = self.value(w_in).t_matmul(&d_gates)?;
        Ok((d_in, d_wi, d_wr, d_b))
    }
}

fn accumulate<S: Scalar>(grads: &mut [Option<Tensor2D<S>>], v: Var, g: Tensor2D<S>) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

/// Result of [`Tape::backward`]: one optional gradient per recorded value.
pub struct Gradients<S> {
    grads: Vec<Option<Tensor2D<S>>>,
}

impl<S: Scalar> Gradients<S> {
    pub fn get(&self, v: Var) -> Option<&Tensor2D<S>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient of `v`, or zeros shaped like `like` when no path reaches it.
    pub fn get_or_zeros(&self, v: Var, like: &Tensor2D<S>) -> Tensor2D<S> {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| Tensor2D::zeros(like.rows(), like.cols()))
    }
}
