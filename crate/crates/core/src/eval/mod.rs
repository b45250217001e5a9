//! Edit-distance scoring: per-sequence breakdowns and pooled corpus error
//! rates at word or character granularity.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

use crate::data::Transcript;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBreakdown {
    pub substitutions: usize,
    pub insertions: usize,
    pub deletions: usize,
    pub reference_len: usize,
}

impl ErrorBreakdown {
    pub fn errors(&self) -> usize {
        self.substitutions + self.insertions + self.deletions
    }

    /// `(S + I + D) / N`. An empty reference gives 0 without errors and
    /// infinity with any.
    pub fn rate(&self) -> f64 {
        match (self.errors(), self.reference_len) {
            (0, _) => 0.0,
            (_, 0) => f64::INFINITY,
            (e, n) => e as f64 / n as f64,
        }
    }

    /// `key=value` lines; `rate_key` is `wer` or `cer`.
    pub fn report(&self, rate_key: &str) -> String {
        format!(
            "{rate_key}={:.4}\nsub={}\nins={}\ndel={}\nref={}\nerr={}\n",
            100.0 * self.rate(),
            self.substitutions,
            self.insertions,
            self.deletions,
            self.reference_len,
            self.errors()
        )
    }
}

impl Add for ErrorBreakdown {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self {
            substitutions: self.substitutions + o.substitutions,
            insertions: self.insertions + o.insertions,
            deletions: self.deletions + o.deletions,
            reference_len: self.reference_len + o.reference_len,
        }
    }
}

impl AddAssign for ErrorBreakdown {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl fmt::Display for ErrorBreakdown {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:.2}% ({} errors / {} ref: {} sub, {} ins, {} del)",
            100.0 * self.rate(),
            self.errors(),
            self.reference_len,
            self.substitutions,
            self.insertions,
            self.deletions
        )
    }
}

/// Minimal-cost alignment with unit costs. Among optimal alignments the
/// backtrace prefers substitution, then insertion, then deletion.
pub fn edit_distance<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> ErrorBreakdown {
    let (n, m) = (reference.len(), hypothesis.len());
    let width = m + 1;
    let mut d = vec![0usize; (n + 1) * width];
    for j in 0..=m {
        d[j] = j;
    }
    for i in 1..=n {
        d[i * width] = i;
        for j in 1..=m {
            let sub =
                d[(i - 1) * width + j - 1] + usize::from(reference[i - 1] != hypothesis[j - 1]);
            let ins = d[i * width + j - 1] + 1;
            let del = d[(i - 1) * width + j] + 1;
            d[i * width + j] = sub.min(ins).min(del);
        }
    }
    let mut out = ErrorBreakdown {
        reference_len: n,
        ..ErrorBreakdown::default()
    };
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = d[i * width + j];
        if i > 0 && j > 0 {
            let mismatch = reference[i - 1] != hypothesis[j - 1];
            if d[(i - 1) * width + j - 1] + usize::from(mismatch) == here {
                out.substitutions += usize::from(mismatch);
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if j > 0 && d[i * width + j - 1] + 1 == here {
            out.insertions += 1;
            j -= 1;
        } else {
            out.deletions += 1;
            i -= 1;
        }
    }
    out
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    #[default]
    Word,
    /// Characters with all whitespace removed.
    Char,
}

impl Granularity {
    pub fn rate_key(self) -> &'static str {
        match self {
            Granularity::Word => "wer",
            Granularity::Char => "cer",
        }
    }

    /// Lowercased tokens of `text`.
    pub fn tokens(self, text: &str) -> Vec<String> {
        let lower = text.to_lowercase();
        match self {
            Granularity::Word => lower.split_whitespace().map(str::to_string).collect(),
            Granularity::Char => lower
                .chars()
                .filter(|c| !c.is_whitespace())
                .map(String::from)
                .collect(),
        }
    }
}

/// Pooled counts over all utterances. Reference and hypothesis sets must
/// hold the same utterance ids.
pub fn score_corpus(
    references: &[Transcript],
    hypotheses: &[Transcript],
    granularity: Granularity,
) -> Result<ErrorBreakdown> {
    let hyp: BTreeMap<&str, &str> = hypotheses
        .iter()
        .map(|t| (t.utt_id.as_str(), t.text.as_str()))
        .collect();
    let refs: BTreeMap<&str, &str> = references
        .iter()
        .map(|t| (t.utt_id.as_str(), t.text.as_str()))
        .collect();
    let missing: Vec<String> = refs
        .keys()
        .filter(|k| !hyp.contains_key(*k))
        .map(|k| k.to_string())
        .collect();
    let extra: Vec<String> = hyp
        .keys()
        .filter(|k| !refs.contains_key(*k))
        .map(|k| k.to_string())
        .collect();
    if !missing.is_empty() || !extra.is_empty() {
        return Err(Error::Alignment { missing, extra });
    }
    let mut total = ErrorBreakdown::default();
    for (id, text) in &refs {
        total += edit_distance(&granularity.tokens(text), &granularity.tokens(hyp[id]));
    }
    Ok(total)
}
