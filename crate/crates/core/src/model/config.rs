use serde::{Deserialize, Serialize};

use crate::decode::FusionConfig;
use crate::error::{Error, Result};
use crate::nn::{InitConfig, Sgd};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TopologyKind {
    /// One head on top of the trunk.
    Stl,
    /// Every head reads the shared-encoder output `e0`.
    Bmtl,
    /// Head `k` reads trunk tap `e_k`; a cascade BiLSTM sits between taps.
    Hmtl,
}

/// Architecture of a model. Hidden sizes count cells per direction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopologyConfig {
    pub kind: TopologyKind,
    /// Feature dimension at the model input (after frame stacking).
    pub input_dim: usize,
    pub shared_layers: usize,
    pub hidden: usize,
    /// Affine projection between consecutive shared BiLSTMs; 0 disables it.
    pub projection: usize,
    /// Unit sets, fine to coarse: `char`, `s300`, `bpe-20`, ...
    pub heads: Vec<String>,
    pub head_hidden: usize,
    /// Widths of the trunk BiLSTMs stacked above `e0`. Empty means the
    /// default: `heads - 1` layers of `hidden` for HMTL, none otherwise.
    pub cascade: Vec<usize>,
    /// Width of a two-stage affine output projection; 0 means a single
    /// projection straight to the unit scores.
    pub bottleneck: usize,
    pub seed: u64,
    pub init: InitConfig,
}

impl Default for TopologyConfig {
    fn default() -> Self {
        Self {
            kind: TopologyKind::Hmtl,
            input_dim: 129,
            shared_layers: 2,
            hidden: 320,
            projection: 340,
            heads: ["char", "s300", "s1k", "s10k"].map(String::from).to_vec(),
            head_hidden: 320,
            cascade: Vec::new(),
            bottleneck: 0,
            seed: 0,
            init: InitConfig::default(),
        }
    }
}

impl TopologyConfig {
    /// Cascade widths after applying the per-topology default.
    pub fn resolved_cascade(&self) -> Vec<usize> {
        if self.cascade.is_empty() && self.kind == TopologyKind::Hmtl {
            vec![self.hidden; self.heads.len().saturating_sub(1)]
        } else {
            self.cascade.clone()
        }
    }

    /// Trunk tap read by each head (`0` is the shared-encoder output).
    pub fn taps(&self) -> Vec<usize> {
        let depth = self.resolved_cascade().len();
        match self.kind {
            TopologyKind::Stl => vec![depth],
            TopologyKind::Bmtl => vec![0; self.heads.len()],
            TopologyKind::Hmtl => (0..self.heads.len()).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("input_dim", self.input_dim),
            ("shared_layers", self.shared_layers),
            ("hidden", self.hidden),
            ("head_hidden", self.head_hidden),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if self.heads.is_empty() {
            return Err(Error::Config("at least one head is required".into()));
        }
        let mut names = self.heads.clone();
        names.sort();
        names.dedup();
        if names.len() != self.heads.len() {
            return Err(Error::Config("head names must be distinct".into()));
        }
        if self.cascade.contains(&0) {
            return Err(Error::Config("cascade widths must be positive".into()));
        }
        match self.kind {
            TopologyKind::Stl if self.heads.len() != 1 => Err(Error::Config(format!(
                "STL has exactly one head, got {}",
                self.heads.len()
            ))),
            TopologyKind::Bmtl if !self.cascade.is_empty() => Err(Error::Config(
                "BMTL heads all read e0; cascade must be empty".into(),
            )),
            TopologyKind::Hmtl if self.resolved_cascade().len() + 1 != self.heads.len() => {
                Err(Error::Config(format!(
                    "HMTL needs one trunk tap per head: {} heads but {} taps",
                    self.heads.len(),
                    self.resolved_cascade().len() + 1
                )))
            }
            _ => Ok(()),
        }
    }
}

/// Optimisation settings for acoustic-model training.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub optimizer: Sgd,
    pub batch_size: usize,
    pub epochs: usize,
    /// Per-head loss weights; empty means all 1.
    pub weights: Vec<f64>,
    /// Triple the training list with the three frame-stacking phases.
    pub augment: bool,
    pub subsample: usize,
    /// Seeds the batch order.
    pub seed: u64,
    /// Worker threads for per-utterance gradients; results are reduced in
    /// utterance order, so any value gives identical parameters.
    pub jobs: usize,
    /// Lowercase transcripts on ingestion.
    pub lowercase: bool,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            optimizer: Sgd::default(),
            batch_size: 8,
            epochs: 10,
            weights: Vec::new(),
            augment: true,
            subsample: 3,
            seed: 0,
            jobs: 1,
            lowercase: true,
        }
    }
}

impl TrainingConfig {
    pub fn head_weights(&self, heads: usize) -> Result<Vec<f64>> {
        if self.weights.is_empty() {
            return Ok(vec![1.0; heads]);
        }
        if self.weights.len() != heads {
            return Err(Error::Config(format!(
                "{} loss weights for {heads} heads",
                self.weights.len()
            )));
        }
        if self.weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Config(
                "loss weights must be finite and non-negative".into(),
            ));
        }
        Ok(self.weights.clone())
    }
}

/// Everything a training or decoding run is configured by; the TOML config
/// file mirrors this struct.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: TopologyConfig,
    pub training: TrainingConfig,
    pub decode: FusionConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }
}
