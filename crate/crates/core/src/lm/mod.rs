//! Unit-level language models for shallow fusion: an add-alpha n-gram model
//! with closed-form probabilities and a two-layer unidirectional LSTM.

mod io;
mod ngram;
mod recurrent;

pub use ngram::NGramLm;
pub use recurrent::{RecurrentLm, RecurrentLmConfig};

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::units::{Inventory, BLANK};

static NEXT_TAG: AtomicU64 = AtomicU64::new(1);

pub(crate) fn fresh_tag() -> u64 {
    NEXT_TAG.fetch_add(1, Ordering::Relaxed)
}

/// Training hyperparameters per backend.
#[derive(Clone, Debug)]
pub enum LmBackend {
    NGram { order: usize, alpha: f64 },
    Recurrent(RecurrentLmConfig),
}

impl Default for LmBackend {
    fn default() -> Self {
        LmBackend::NGram {
            order: 3,
            alpha: 0.1,
        }
    }
}

/// Prefix state; advancing by a unit is deterministic.
#[derive(Clone, Debug, PartialEq)]
pub struct LmState {
    tag: u64,
    kind: StateKind,
}

#[derive(Clone, Debug, PartialEq)]
enum StateKind {
    /// Last `order - 1` units, blank standing in for the sentence start.
    Context(Vec<usize>),
    Recurrent {
        hidden: Arc<Vec<Vec<f64>>>,
        cell: Arc<Vec<Vec<f64>>>,
        dist: Arc<Vec<f64>>,
    },
}

#[derive(Clone, Debug)]
pub enum LmModel {
    NGram(NGramLm),
    Recurrent(RecurrentLm),
}

impl LmModel {
    /// Trains on unit sequences drawn from `inventory`.
    pub fn train(
        corpus: &[Vec<usize>],
        inventory: &Inventory,
        backend: &LmBackend,
    ) -> Result<Self> {
        if corpus.iter().all(|s| s.is_empty()) {
            return Err(Error::EmptyCorpus);
        }
        for seq in corpus {
            if let Some(&bad) = seq.iter().find(|&&u| u == BLANK || u >= inventory.len()) {
                return Err(Error::contract(format!(
                    "LM corpus unit {bad} outside the inventory labels"
                )));
            }
        }
        Ok(match backend {
            LmBackend::NGram { order, alpha } => LmModel::NGram(NGramLm::train(
                corpus,
                inventory.len(),
                &inventory.hash(),
                *order,
                *alpha,
            )?),
            LmBackend::Recurrent(cfg) => LmModel::Recurrent(
                RecurrentLm::train(corpus, inventory.len(), &inventory.hash(), cfg)?.0,
            ),
        })
    }

    /// Order-1 model assigning `1 / |L|` to every label.
    pub fn uniform(inventory: &Inventory) -> Result<Self> {
        Ok(LmModel::NGram(NGramLm::train(
            &[],
            inventory.len(),
            &inventory.hash(),
            1,
            1.0,
        )?))
    }

    fn tag(&self) -> u64 {
        match self {
            LmModel::NGram(m) => m.tag,
            LmModel::Recurrent(m) => m.tag,
        }
    }

    /// `|L'|` of the inventory the model was trained on.
    pub fn classes(&self) -> usize {
        match self {
            LmModel::NGram(m) => m.classes,
            LmModel::Recurrent(m) => m.classes(),
        }
    }

    pub fn inventory_hash(&self) -> &str {
        match self {
            LmModel::NGram(m) => &m.inventory_hash,
            LmModel::Recurrent(m) => &m.inventory_hash,
        }
    }

    pub fn backend_name(&self) -> &'static str {
        match self {
            LmModel::NGram(_) => "ngram",
            LmModel::Recurrent(_) => "recurrent",
        }
    }

    pub fn check_inventory(&self, inventory: &Inventory) -> Result<()> {
        if self.inventory_hash() != inventory.hash() || self.classes() != inventory.len() {
            return Err(Error::InventoryMismatch(format!(
                "LM built for inventory {} ({} units), decoder uses {} ({} units)",
                self.inventory_hash(),
                self.classes(),
                inventory.hash(),
                inventory.len()
            )));
        }
        Ok(())
    }

    pub fn initial_state(&self) -> LmState {
        match self {
            LmModel::NGram(m) => m.initial_state(),
            LmModel::Recurrent(m) => m.initial_state(),
        }
    }

    fn check_state(&self, state: &LmState) -> Result<()> {
        if state.tag != self.tag() {
            return Err(Error::contract("LM state belongs to a different model"));
        }
        Ok(())
    }

    /// Next-unit distribution indexed like the inventory; the blank entry is
    /// zero and the label entries sum to one.
    pub fn next_distribution(&self, state: &LmState) -> Result<Arc<Vec<f64>>> {
        self.check_state(state)?;
        match (self, &state.kind) {
            (LmModel::NGram(m), StateKind::Context(ctx)) => Ok(Arc::new(m.distribution(ctx))),
            (LmModel::Recurrent(_), StateKind::Recurrent { dist, .. }) => Ok(dist.clone()),
            _ => Err(Error::contract("LM state kind does not match backend")),
        }
    }

    pub fn advance(&self, state: &LmState, unit: usize) -> Result<LmState> {
        self.check_state(state)?;
        if unit == BLANK || unit >= self.classes() {
            return Err(Error::contract(format!("cannot advance LM by unit {unit}")));
        }
        match (self, &state.kind) {
            (LmModel::NGram(m), StateKind::Context(ctx)) => Ok(m.advance(ctx, unit)),
            (LmModel::Recurrent(m), StateKind::Recurrent { hidden, cell, .. }) => {
                m.advance(hidden, cell, unit)
            }
            _ => Err(Error::contract("LM state kind does not match backend")),
        }
    }

    /// Distribution at `state` plus a function advancing it by a chosen unit.
    #[allow(clippy::type_complexity)]
    pub fn lm_next<'a>(
        &'a self,
        state: &'a LmState,
    ) -> Result<(Arc<Vec<f64>>, Box<dyn Fn(usize) -> Result<LmState> + 'a>)> {
        let dist = self.next_distribution(state)?;
        Ok((dist, Box::new(move |u| self.advance(state, u))))
    }

    /// Natural-log probability of a whole unit sequence from the start state.
    pub fn log_prob(&self, units: &[usize]) -> Result<f64> {
        let mut state = self.initial_state();
        let mut total = 0.0;
        for &u in units {
            let dist = self.next_distribution(&state)?;
            total += dist.get(u).copied().unwrap_or(0.0).ln();
            state = self.advance(&state, u)?;
        }
        Ok(total)
    }

    /// Per-unit perplexity over a corpus.
    pub fn perplexity(&self, corpus: &[Vec<usize>]) -> Result<f64> {
        let mut total = 0.0;
        let mut count = 0usize;
        for seq in corpus {
            total += self.log_prob(seq)?;
            count += seq.len();
        }
        if count == 0 {
            return Err(Error::EmptyCorpus);
        }
        Ok((-total / count as f64).exp())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        io::encode(self)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        io::decode(bytes)
    }

    pub fn write(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn read(path: &std::path::Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
