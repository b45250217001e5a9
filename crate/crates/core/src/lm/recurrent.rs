use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lm::{fresh_tag, LmState, StateKind};
use crate::nn::{lstm_step, InitConfig, LstmParams, ParamGroup, ProjectionParams, Sgd};
use crate::numerics::{log_softmax, Tape, Tensor2D, Var};
use crate::units::BLANK;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecurrentLmConfig {
    pub hidden: usize,
    pub layers: usize,
    pub optimizer: Sgd,
    /// Sentence-level updates, cycling through the corpus in order.
    pub steps: usize,
    pub seed: u64,
    pub init: InitConfig,
}

impl Default for RecurrentLmConfig {
    fn default() -> Self {
        Self {
            hidden: 256,
            layers: 2,
            optimizer: Sgd {
                learning_rate: 0.1,
                clip_norm: 5.0,
            },
            steps: 1000,
            seed: 0,
            init: InitConfig::default(),
        }
    }
}

/// Stacked unidirectional LSTM over one-hot units. The previous unit is the
/// input (the blank index doubles as the start symbol); the softmax runs
/// over the labels only.
#[derive(Clone, Debug)]
pub struct RecurrentLm {
    pub(crate) tag: u64,
    pub(crate) inventory_hash: String,
    pub(crate) layers: Vec<LstmParams<f64>>,
    pub(crate) output: ProjectionParams<f64>,
}

impl PartialEq for RecurrentLm {
    fn eq(&self, other: &Self) -> bool {
        self.inventory_hash == other.inventory_hash
            && self.layers == other.layers
            && self.output == other.output
    }
}

impl ParamGroup<f64> for RecurrentLm {
    fn tensors(&self) -> Vec<&Tensor2D<f64>> {
        let mut v: Vec<&Tensor2D<f64>> = self.layers.iter().flat_map(|l| l.tensors()).collect();
        v.extend(self.output.tensors());
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor2D<f64>> {
        let mut v: Vec<&mut Tensor2D<f64>> = self
            .layers
            .iter_mut()
            .flat_map(|l| l.tensors_mut())
            .collect();
        v.extend(self.output.tensors_mut());
        v
    }
}

/// Masked softmax cross-entropy, averaged over frames; the blank row gets
/// neither probability mass nor gradient.
pub(crate) fn label_xent(logits: &Tensor2D<f64>, targets: &[usize]) -> (f64, Tensor2D<f64>) {
    let frames = targets.len();
    let mut grad = Tensor2D::zeros(logits.rows(), frames);
    let mut loss = 0.0;
    let scale = 1.0 / frames as f64;
    for (t, &target) in targets.iter().enumerate() {
        let col = logits.col(t);
        let lp = log_softmax(&col[1..]);
        loss -= lp[target - 1];
        for (k, &l) in lp.iter().enumerate() {
            let indicator = if k + 1 == target { 1.0 } else { 0.0 };
            grad.set(k + 1, t, (l.exp() - indicator) * scale);
        }
    }
    (loss * scale, grad)
}

fn masked_distribution(logits: &[f64]) -> Vec<f64> {
    let lp = log_softmax(&logits[1..]);
    let mut out = Vec::with_capacity(logits.len());
    out.push(0.0);
    out.extend(lp.iter().map(|v| v.exp()));
    out
}

impl RecurrentLm {
    pub fn new(classes: usize, inventory_hash: &str, cfg: &RecurrentLmConfig) -> Result<Self> {
        if cfg.layers == 0 || cfg.hidden == 0 {
            return Err(Error::Config(
                "recurrent LM needs at least one layer and hidden unit".into(),
            ));
        }
        if classes < 2 {
            return Err(Error::Config("LM inventory has no labels".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut layers = Vec::with_capacity(cfg.layers);
        for l in 0..cfg.layers {
            let input = if l == 0 { classes } else { cfg.hidden };
            layers.push(LstmParams::random(input, cfg.hidden, &cfg.init, &mut rng));
        }
        let output = ProjectionParams::random(cfg.hidden, classes, &cfg.init, &mut rng);
        Ok(Self {
            tag: fresh_tag(),
            inventory_hash: inventory_hash.to_string(),
            layers,
            output,
        })
    }

    /// Trains and returns the per-step training losses alongside the model.
    pub fn train(
        corpus: &[Vec<usize>],
        classes: usize,
        inventory_hash: &str,
        cfg: &RecurrentLmConfig,
    ) -> Result<(Self, Vec<f64>)> {
        let mut model = Self::new(classes, inventory_hash, cfg)?;
        let sentences: Vec<&Vec<usize>> = corpus.iter().filter(|s| !s.is_empty()).collect();
        if sentences.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let mut history = Vec::with_capacity(cfg.steps);
        for step in 0..cfg.steps {
            let seq = sentences[step % sentences.len()];
            let (loss, grads) = model.loss_and_gradients(seq)?;
            cfg.optimizer.step(model.tensors_mut(), &grads);
            history.push(loss);
        }
        model.tag = fresh_tag();
        Ok((model, history))
    }

    pub fn classes(&self) -> usize {
        self.output.output_dim()
    }

    pub fn hidden(&self) -> usize {
        self.output.input_dim()
    }

    /// Mean next-unit cross-entropy of `seq` and its parameter gradients.
    pub fn loss_and_gradients(&self, seq: &[usize]) -> Result<(f64, Vec<Tensor2D<f64>>)> {
        if seq.is_empty() {
            return Err(Error::contract("empty LM training sequence"));
        }
        let classes = self.classes();
        if let Some(&bad) = seq.iter().find(|&&u| u == BLANK || u >= classes) {
            return Err(Error::contract(format!("LM unit {bad} out of range")));
        }
        let mut tape = Tape::new();
        let params: Vec<Var> = self
            .tensors()
            .into_iter()
            .map(|t| tape.leaf(t.clone()))
            .collect();
        let mut input = Tensor2D::zeros(classes, seq.len());
        input.set(BLANK, 0, 1.0);
        for (t, &u) in seq[..seq.len() - 1].iter().enumerate() {
            input.set(u, t + 1, 1.0);
        }
        let mut h = tape.leaf(input);
        for (l, layer) in self.layers.iter().enumerate() {
            h = layer.apply(&mut tape, &params[3 * l..3 * l + 3], h, false)?;
        }
        let off = 3 * self.layers.len();
        let logits = self.output.apply(&mut tape, &params[off..off + 2], h)?;
        let (loss, grad) = label_xent(tape.value(logits), seq);
        let loss_var = tape.fused_loss(logits, loss, grad)?;
        let grads = tape.backward(loss_var)?;
        let out = params
            .iter()
            .zip(self.tensors())
            .map(|(&v, t)| grads.get_or_zeros(v, t))
            .collect();
        Ok((loss, out))
    }

    /// Replaces every parameter tensor, in [`ParamGroup::tensors`] order.
    pub fn set_params(&mut self, values: &[Tensor2D<f64>]) -> Result<()> {
        let slots = self.tensors_mut();
        if slots.len() != values.len() {
            return Err(Error::contract("parameter count mismatch"));
        }
        for (slot, v) in slots.into_iter().zip(values) {
            if slot.shape() != v.shape() {
                return Err(Error::contract("parameter shape mismatch"));
            }
            *slot = v.clone();
        }
        Ok(())
    }

    fn step(&self, hidden: &[Vec<f64>], cell: &[Vec<f64>], unit: usize) -> Result<LmState> {
        let mut x = vec![0.0; self.classes()];
        x[unit] = 1.0;
        let mut new_h = Vec::with_capacity(self.layers.len());
        let mut new_c = Vec::with_capacity(self.layers.len());
        for (l, layer) in self.layers.iter().enumerate() {
            let (h, c) = lstm_step(layer, &x, &hidden[l], &cell[l])?;
            x = h.clone();
            new_h.push(h);
            new_c.push(c);
        }
        let logits: Vec<f64> = (0..self.classes())
            .map(|k| {
                let mut acc = self.output.bias.get(k, 0);
                for (&w, &v) in self.output.weight.row(k).iter().zip(&x) {
                    acc += w * v;
                }
                acc
            })
            .collect();
        Ok(LmState {
            tag: self.tag,
            kind: StateKind::Recurrent {
                hidden: Arc::new(new_h),
                cell: Arc::new(new_c),
                dist: Arc::new(masked_distribution(&logits)),
            },
        })
    }

    pub(crate) fn initial_state(&self) -> LmState {
        let zeros = vec![vec![0.0; self.hidden()]; self.layers.len()];
        self.step(&zeros, &zeros, BLANK)
            .expect("shapes fixed at construction")
    }

    pub(crate) fn advance(
        &self,
        hidden: &[Vec<f64>],
        cell: &[Vec<f64>],
        unit: usize,
    ) -> Result<LmState> {
        self.step(hidden, cell, unit)
    }
}
