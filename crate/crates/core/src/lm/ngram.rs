use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::lm::{fresh_tag, LmState, StateKind};
use crate::units::BLANK;

#[derive(Clone, Debug, Default, PartialEq)]
pub(crate) struct ContextCounts {
    pub total: u64,
    pub next: BTreeMap<usize, u64>,
}

/// Fixed-order n-gram model with add-alpha smoothing:
/// `P(k | ctx) = (c(ctx, k) + alpha) / (c(ctx) + alpha * |L|)`.
///
/// Contexts are the previous `order - 1` units, padded at the sentence start
/// with a start symbol. There is no end-of-sentence unit.
#[derive(Clone, Debug)]
pub struct NGramLm {
    pub(crate) tag: u64,
    pub(crate) order: usize,
    pub(crate) alpha: f64,
    pub(crate) classes: usize,
    pub(crate) inventory_hash: String,
    pub(crate) counts: BTreeMap<Vec<usize>, ContextCounts>,
}

impl PartialEq for NGramLm {
    fn eq(&self, other: &Self) -> bool {
        self.order == other.order
            && self.alpha.to_bits() == other.alpha.to_bits()
            && self.classes == other.classes
            && self.inventory_hash == other.inventory_hash
            && self.counts == other.counts
    }
}

impl NGramLm {
    pub fn train(
        corpus: &[Vec<usize>],
        classes: usize,
        inventory_hash: &str,
        order: usize,
        alpha: f64,
    ) -> Result<Self> {
        if order == 0 {
            return Err(Error::Config("n-gram order must be at least 1".into()));
        }
        if !(alpha > 0.0) {
            return Err(Error::Config(format!(
                "add-alpha smoothing needs alpha > 0, got {alpha}"
            )));
        }
        if classes < 2 {
            return Err(Error::Config("LM inventory has no labels".into()));
        }
        let mut counts: BTreeMap<Vec<usize>, ContextCounts> = BTreeMap::new();
        for seq in corpus {
            let mut ctx = vec![BLANK; order - 1];
            for &u in seq {
                let entry = counts.entry(ctx.clone()).or_default();
                entry.total += 1;
                *entry.next.entry(u).or_default() += 1;
                if order > 1 {
                    ctx.remove(0);
                    ctx.push(u);
                }
            }
        }
        Ok(Self {
            tag: fresh_tag(),
            order,
            alpha,
            classes,
            inventory_hash: inventory_hash.to_string(),
            counts,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub(crate) fn initial_state(&self) -> LmState {
        LmState {
            tag: self.tag,
            kind: StateKind::Context(vec![BLANK; self.order - 1]),
        }
    }

    pub(crate) fn distribution(&self, ctx: &[usize]) -> Vec<f64> {
        let labels = (self.classes - 1) as f64;
        let empty = ContextCounts::default();
        let c = self.counts.get(ctx).unwrap_or(&empty);
        let denom = c.total as f64 + self.alpha * labels;
        let mut out = vec![0.0; self.classes];
        for (k, p) in out.iter_mut().enumerate().skip(1) {
            let n = c.next.get(&k).copied().unwrap_or(0) as f64;
            *p = (n + self.alpha) / denom;
        }
        out
    }

    pub(crate) fn advance(&self, ctx: &[usize], unit: usize) -> LmState {
        let mut next = ctx.to_vec();
        if !next.is_empty() {
            next.remove(0);
            next.push(unit);
        }
        LmState {
            tag: self.tag,
            kind: StateKind::Context(next),
        }
    }
}
