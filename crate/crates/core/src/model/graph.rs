use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::ctc::{ctc_loss_on_tape, min_frames, PosteriorMatrix};
use crate::error::{Error, Result};
use crate::model::{TopologyConfig, TopologyKind};
use crate::nn::{
    bilstm_param_count, projection_param_count, BiLstmParams, InitConfig, ParamGroup,
    ProjectionParams,
};
use crate::numerics::{Tape, Tensor2D, Var};
use crate::scalar::Scalar;
use crate::units::{UnitCodec, UnitSpec};

/// One unit-specific module: a BiLSTM over its tap, then the output
/// projection (optionally through a bottleneck).
#[derive(Clone, Debug, PartialEq)]
pub struct Head<S> {
    pub name: String,
    pub tap: usize,
    pub bilstm: BiLstmParams<S>,
    pub bottleneck: Option<ProjectionParams<S>>,
    pub output: ProjectionParams<S>,
}

impl<S: Scalar> ParamGroup<S> for Head<S> {
    fn tensors(&self) -> Vec<&Tensor2D<S>> {
        let mut v = self.bilstm.tensors();
        if let Some(b) = &self.bottleneck {
            v.extend(b.tensors());
        }
        v.extend(self.output.tensors());
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor2D<S>> {
        let mut v = self.bilstm.tensors_mut();
        if let Some(b) = &mut self.bottleneck {
            v.extend(b.tensors_mut());
        }
        v.extend(self.output.tensors_mut());
        v
    }
}

impl<S: Scalar> Head<S> {
    pub fn classes(&self) -> usize {
        self.output.output_dim()
    }

    fn cast<T: Scalar>(&self) -> Head<T> {
        Head {
            name: self.name.clone(),
            tap: self.tap,
            bilstm: cast_bilstm(&self.bilstm),
            bottleneck: self.bottleneck.as_ref().map(cast_projection),
            output: cast_projection(&self.output),
        }
    }
}

fn cast_bilstm<S: Scalar, T: Scalar>(p: &BiLstmParams<S>) -> BiLstmParams<T> {
    let one = |l: &crate::nn::LstmParams<S>| crate::nn::LstmParams {
        w_in: l.w_in.cast(),
        w_rec: l.w_rec.cast(),
        bias: l.bias.cast(),
    };
    BiLstmParams {
        fwd: one(&p.fwd),
        bwd: one(&p.bwd),
    }
}

fn cast_projection<S: Scalar, T: Scalar>(p: &ProjectionParams<S>) -> ProjectionParams<T> {
    ProjectionParams {
        weight: p.weight.cast(),
        bias: p.bias.cast(),
    }
}

/// Layer dimensions implied by a config and the heads' `|L'|`.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Dims {
    /// (input, hidden) per shared BiLSTM.
    pub shared: Vec<(usize, usize)>,
    /// (input, output) per inter-layer projection.
    pub projections: Vec<(usize, usize)>,
    pub cascade: Vec<(usize, usize)>,
    pub heads: Vec<HeadDims>,
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct HeadDims {
    pub tap: usize,
    pub input: usize,
    pub hidden: usize,
    pub bottleneck: usize,
    pub classes: usize,
}

impl Dims {
    pub fn new(cfg: &TopologyConfig, classes: &[usize]) -> Result<Self> {
        cfg.validate()?;
        if classes.len() != cfg.heads.len() {
            return Err(Error::Config(format!(
                "{} inventories for {} heads",
                classes.len(),
                cfg.heads.len()
            )));
        }
        if let Some(c) = classes.iter().find(|&&c| c < 2) {
            return Err(Error::Config(format!(
                "head inventory of size {c} has no labels"
            )));
        }
        let mut shared = Vec::new();
        let mut projections = Vec::new();
        let mut input = cfg.input_dim;
        for i in 0..cfg.shared_layers {
            shared.push((input, cfg.hidden));
            input = 2 * cfg.hidden;
            if cfg.projection > 0 && i + 1 < cfg.shared_layers {
                projections.push((input, cfg.projection));
                input = cfg.projection;
            }
        }
        // tap widths: e0 then one per cascade layer
        let mut taps = vec![input];
        let mut cascade = Vec::new();
        for &h in &cfg.resolved_cascade() {
            cascade.push((input, h));
            input = 2 * h;
            taps.push(input);
        }
        let heads = cfg
            .taps()
            .iter()
            .zip(classes)
            .map(|(&tap, &c)| HeadDims {
                tap,
                input: taps[tap],
                hidden: cfg.head_hidden,
                bottleneck: cfg.bottleneck,
                classes: c,
            })
            .collect();
        Ok(Self {
            shared,
            projections,
            cascade,
            heads,
        })
    }

    pub fn param_count(&self) -> usize {
        let bi: usize = self
            .shared
            .iter()
            .chain(&self.cascade)
            .map(|&(i, h)| bilstm_param_count(i, h))
            .sum();
        let proj: usize = self
            .projections
            .iter()
            .map(|&(i, o)| projection_param_count(i, o))
            .sum();
        bi + proj + self.heads.iter().map(HeadDims::param_count).sum::<usize>()
    }
}

impl HeadDims {
    pub fn param_count(&self) -> usize {
        let out = if self.bottleneck > 0 {
            projection_param_count(2 * self.hidden, self.bottleneck)
                + projection_param_count(self.bottleneck, self.classes)
        } else {
            projection_param_count(2 * self.hidden, self.classes)
        };
        bilstm_param_count(self.input, self.hidden) + out
    }
}

/// Exact parameter count of the model `cfg` would build for heads with the
/// given `|L'|`.
pub fn count_params(cfg: &TopologyConfig, classes: &[usize]) -> Result<usize> {
    Ok(Dims::new(cfg, classes)?.param_count())
}

/// Shared encoder, optional cascade, and heads, with their unit codecs.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelGraph<S> {
    config: TopologyConfig,
    codecs: Vec<UnitCodec>,
    pub(crate) shared: Vec<BiLstmParams<S>>,
    pub(crate) projections: Vec<ProjectionParams<S>>,
    pub(crate) cascade: Vec<BiLstmParams<S>>,
    pub(crate) heads: Vec<Head<S>>,
}

/// Per-utterance loss; heads with zero weight are not evaluated.
#[derive(Clone, Debug, PartialEq)]
pub struct UtteranceLoss {
    pub per_head: Vec<Option<f64>>,
    pub combined: f64,
}

fn unit_order(codec: &UnitCodec) -> isize {
    codec.merges().map_or(-1, |m| m.len() as isize)
}

/// Builds a model with weights drawn from the config seed.
pub fn build_model<S: Scalar>(
    cfg: &TopologyConfig,
    codecs: Vec<UnitCodec>,
) -> Result<ModelGraph<S>> {
    ModelGraph::new(cfg, codecs, Some(&cfg.init))
}

impl<S: Scalar> ModelGraph<S> {
    /// `init = None` gives all-zero parameters (used when loading).
    pub(crate) fn new(
        cfg: &TopologyConfig,
        codecs: Vec<UnitCodec>,
        init: Option<&InitConfig>,
    ) -> Result<Self> {
        let classes: Vec<usize> = codecs.iter().map(|c| c.inventory().len()).collect();
        let dims = Dims::new(cfg, &classes)?;
        if cfg.kind == TopologyKind::Hmtl
            && codecs
                .windows(2)
                .any(|w| unit_order(&w[0]) > unit_order(&w[1]))
        {
            return Err(Error::Config(
                "HMTL heads must be ordered fine to coarse".into(),
            ));
        }
        for (name, codec) in cfg.heads.iter().zip(&codecs) {
            if let Ok(spec) = UnitSpec::parse(name) {
                if (spec == UnitSpec::Char) != codec.inventory().is_character_level() {
                    return Err(Error::Config(format!(
                        "head {name} does not match its inventory type"
                    )));
                }
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let make_bi = |i: usize, h: usize, rng: &mut ChaCha8Rng| match init {
            Some(init) => BiLstmParams::random(i, h, init, rng),
            None => BiLstmParams::zeros(i, h),
        };
        let make_proj = |i: usize, o: usize, rng: &mut ChaCha8Rng| match init {
            Some(init) => ProjectionParams::random(i, o, init, rng),
            None => ProjectionParams::zeros(i, o),
        };
        let mut shared = Vec::new();
        let mut proj_params = Vec::new();
        let mut cascade = Vec::new();
        let mut heads = Vec::new();
        // draw order: each shared layer then its projection, cascade, heads
        for (k, &(i, h)) in dims.shared.iter().enumerate() {
            shared.push(make_bi(i, h, &mut rng));
            if let Some(&(pi, po)) = dims.projections.get(k) {
                proj_params.push(make_proj(pi, po, &mut rng));
            }
        }
        for &(i, h) in &dims.cascade {
            cascade.push(make_bi(i, h, &mut rng));
        }
        for (hd, name) in dims.heads.iter().zip(&cfg.heads) {
            let bilstm = make_bi(hd.input, hd.hidden, &mut rng);
            let (bottleneck, output) = if hd.bottleneck > 0 {
                let b = make_proj(2 * hd.hidden, hd.bottleneck, &mut rng);
                (Some(b), make_proj(hd.bottleneck, hd.classes, &mut rng))
            } else {
                (None, make_proj(2 * hd.hidden, hd.classes, &mut rng))
            };
            heads.push(Head {
                name: name.clone(),
                tap: hd.tap,
                bilstm,
                bottleneck,
                output,
            });
        }
        Ok(Self {
            config: cfg.clone(),
            codecs,
            shared,
            projections: proj_params,
            cascade,
            heads,
        })
    }

    pub fn config(&self) -> &TopologyConfig {
        &self.config
    }

    pub fn codecs(&self) -> &[UnitCodec] {
        &self.codecs
    }

    pub fn heads(&self) -> &[Head<S>] {
        &self.heads
    }

    pub fn head_names(&self) -> Vec<&str> {
        self.heads.iter().map(|h| h.name.as_str()).collect()
    }

    pub fn head_index(&self, name: &str) -> Result<usize> {
        self.heads
            .iter()
            .position(|h| h.name == name)
            .ok_or_else(|| Error::Config(format!("model has no head {name:?}")))
    }

    pub fn input_dim(&self) -> usize {
        self.config.input_dim
    }

    /// Number of trunk taps (`e0` plus one per cascade layer).
    pub fn taps(&self) -> usize {
        self.cascade.len() + 1
    }

    /// Parameter names in [`ParamGroup::tensors`] order.
    pub fn param_names(&self) -> Vec<String> {
        fn bi(prefix: &str, out: &mut Vec<String>) {
            for dir in ["fwd", "bwd"] {
                for t in ["w_in", "w_rec", "bias"] {
                    out.push(format!("{prefix}.{dir}.{t}"));
                }
            }
        }
        fn proj(prefix: &str, out: &mut Vec<String>) {
            out.push(format!("{prefix}.weight"));
            out.push(format!("{prefix}.bias"));
        }
        let mut out = Vec::new();
        for k in 0..self.shared.len() {
            bi(&format!("shared.{k}"), &mut out);
            if k < self.projections.len() {
                proj(&format!("projection.{k}"), &mut out);
            }
        }
        for k in 0..self.cascade.len() {
            bi(&format!("cascade.{k}"), &mut out);
        }
        for h in &self.heads {
            bi(&format!("head.{}.bilstm", h.name), &mut out);
            if h.bottleneck.is_some() {
                proj(&format!("head.{}.bottleneck", h.name), &mut out);
            }
            proj(&format!("head.{}.output", h.name), &mut out);
        }
        out
    }

    /// Replaces every parameter, in [`ParamGroup::tensors`] order.
    pub fn set_params(&mut self, values: &[Tensor2D<S>]) -> Result<()> {
        let slots = self.tensors_mut();
        if slots.len() != values.len() {
            return Err(Error::contract(format!(
                "{} tensors for {} parameters",
                values.len(),
                slots.len()
            )));
        }
        for (slot, v) in slots.into_iter().zip(values) {
            if slot.shape() != v.shape() {
                return Err(Error::contract(format!(
                    "parameter shape {:?} given {:?}",
                    slot.shape(),
                    v.shape()
                )));
            }
            *slot = v.clone();
        }
        Ok(())
    }

    pub fn cast<T: Scalar>(&self) -> ModelGraph<T> {
        ModelGraph {
            config: self.config.clone(),
            codecs: self.codecs.clone(),
            shared: self.shared.iter().map(cast_bilstm).collect(),
            projections: self.projections.iter().map(cast_projection).collect(),
            cascade: self.cascade.iter().map(cast_bilstm).collect(),
            heads: self.heads.iter().map(Head::cast).collect(),
        }
    }

    /// Head logits on `tape`. `vars` are leaves for every parameter in
    /// [`ParamGroup::tensors`] order; only heads with `wanted[h]` are built,
    /// and the trunk stops at the highest tap they need.
    pub(crate) fn logits_on_tape(
        &self,
        tape: &mut Tape<S>,
        vars: &[Var],
        x: Var,
        wanted: &[bool],
    ) -> Result<Vec<Option<Var>>> {
        let rows = tape.value(x).rows();
        if rows != self.config.input_dim {
            return Err(Error::contract(format!(
                "features have {rows} dims, model expects {}",
                self.config.input_dim
            )));
        }
        if tape.value(x).cols() == 0 {
            return Err(Error::contract("empty feature sequence"));
        }
        let top = self
            .heads
            .iter()
            .zip(wanted)
            .filter(|(_, &w)| w)
            .map(|(h, _)| h.tap)
            .max();
        let Some(top) = top else {
            return Ok(vec![None; self.heads.len()]);
        };
        let mut at = 0;
        let mut take = |n: usize| {
            let s = &vars[at..at + n];
            at += n;
            s
        };
        let mut h = x;
        for (k, layer) in self.shared.iter().enumerate() {
            h = layer.apply(tape, take(6), h)?;
            if let Some(p) = self.projections.get(k) {
                h = p.apply(tape, take(2), h)?;
            }
        }
        let mut taps = vec![h];
        for layer in &self.cascade {
            let v = take(6);
            if taps.len() <= top {
                h = layer.apply(tape, v, h)?;
                taps.push(h);
            }
        }
        let mut out = Vec::with_capacity(self.heads.len());
        for (head, &w) in self.heads.iter().zip(wanted) {
            let bv = take(6);
            let nv = if head.bottleneck.is_some() {
                take(2)
            } else {
                &[]
            };
            let ov = take(2);
            if !w {
                out.push(None);
                continue;
            }
            let mut y = head.bilstm.apply(tape, bv, taps[head.tap])?;
            if let Some(b) = &head.bottleneck {
                y = b.apply(tape, nv, y)?;
            }
            out.push(Some(head.output.apply(tape, ov, y)?));
        }
        Ok(out)
    }

    fn leaves(&self, tape: &mut Tape<S>) -> Vec<Var> {
        self.tensors()
            .into_iter()
            .map(|t| tape.leaf(t.clone()))
            .collect()
    }

    /// Raw (pre-softmax) scores of the selected heads.
    pub fn head_logits(
        &self,
        x: &Tensor2D<S>,
        wanted: &[bool],
    ) -> Result<Vec<Option<Tensor2D<S>>>> {
        if wanted.len() != self.heads.len() {
            return Err(Error::contract("one selection flag per head"));
        }
        let mut tape = Tape::new();
        let vars = self.leaves(&mut tape);
        let xv = tape.leaf(x.clone());
        let logits = self.logits_on_tape(&mut tape, &vars, xv, wanted)?;
        Ok(logits
            .into_iter()
            .map(|v| v.map(|v| tape.value(v).clone()))
            .collect())
    }

    /// Posterior of every head for an `F x T` input.
    pub fn forward_all_heads(&self, x: &Tensor2D<S>) -> Result<Vec<PosteriorMatrix<S>>> {
        let logits = self.head_logits(x, &vec![true; self.heads.len()])?;
        Ok(logits
            .into_iter()
            .map(|l| PosteriorMatrix::from_logits(&l.expect("all heads requested")))
            .collect())
    }

    pub fn forward_head(&self, x: &Tensor2D<S>, head: usize) -> Result<PosteriorMatrix<S>> {
        let mut wanted = vec![false; self.heads.len()];
        *wanted
            .get_mut(head)
            .ok_or_else(|| Error::contract(format!("head index {head} out of range")))? = true;
        let logits = self.head_logits(x, &wanted)?;
        Ok(PosteriorMatrix::from_logits(
            logits[head].as_ref().expect("head requested"),
        ))
    }

    /// Whether every head with nonzero weight can align its target in `frames`.
    pub fn feasible(&self, frames: usize, targets: &[Vec<usize>], weights: &[f64]) -> bool {
        targets
            .iter()
            .zip(weights)
            .all(|(t, &w)| w == 0.0 || min_frames(t) <= frames)
    }

    /// Weighted CTC loss of one utterance and its gradient for every
    /// parameter. Heads with zero weight are detached. Returns `None` when a
    /// weighted head's target does not fit in the available frames.
    pub fn loss_and_gradients(
        &self,
        x: &Tensor2D<S>,
        targets: &[Vec<usize>],
        weights: &[f64],
    ) -> Result<Option<(UtteranceLoss, Vec<Tensor2D<S>>)>> {
        if targets.len() != self.heads.len() || weights.len() != self.heads.len() {
            return Err(Error::contract("one target and one weight per head"));
        }
        if !self.feasible(x.cols(), targets, weights) {
            return Ok(None);
        }
        let wanted: Vec<bool> = weights.iter().map(|&w| w != 0.0).collect();
        if !wanted.iter().any(|&w| w) {
            return Err(Error::Config("all loss weights are zero".into()));
        }
        let mut tape = Tape::new();
        let vars = self.leaves(&mut tape);
        let xv = tape.leaf(x.clone());
        let logits = self.logits_on_tape(&mut tape, &vars, xv, &wanted)?;
        let mut terms = Vec::new();
        let mut per_head = vec![None; self.heads.len()];
        for (h, l) in logits.iter().enumerate() {
            if let Some(l) = *l {
                let loss = ctc_loss_on_tape(&mut tape, l, &targets[h])?;
                per_head[h] = Some(tape.value(loss).scalar().to_f64_lossy());
                terms.push((loss, S::of(weights[h])));
            }
        }
        let combined = tape.weighted_sum(&terms)?;
        let combined_value = tape.value(combined).scalar().to_f64_lossy();
        let grads = tape.backward(combined)?;
        let out = vars
            .iter()
            .zip(self.tensors())
            .map(|(&v, t)| grads.get_or_zeros(v, t))
            .collect();
        Ok(Some((
            UtteranceLoss {
                per_head,
                combined: combined_value,
            },
            out,
        )))
    }
}

impl<S: Scalar> ParamGroup<S> for ModelGraph<S> {
    fn tensors(&self) -> Vec<&Tensor2D<S>> {
        let mut v = Vec::new();
        for (k, layer) in self.shared.iter().enumerate() {
            v.extend(layer.tensors());
            if let Some(p) = self.projections.get(k) {
                v.extend(p.tensors());
            }
        }
        for layer in &self.cascade {
            v.extend(layer.tensors());
        }
        for h in &self.heads {
            v.extend(h.tensors());
        }
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor2D<S>> {
        let mut v = Vec::new();
        let mut projections = self.projections.iter_mut();
        for layer in self.shared.iter_mut() {
            v.extend(layer.tensors_mut());
            if let Some(p) = projections.next() {
                v.extend(p.tensors_mut());
            }
        }
        for layer in self.cascade.iter_mut() {
            v.extend(layer.tensors_mut());
        }
        for h in self.heads.iter_mut() {
            v.extend(h.tensors_mut());
        }
        v
    }
}
