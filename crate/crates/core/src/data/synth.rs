//! Seeded synthetic speech-like corpus. Every symbol owns a template vector;
//! an utterance is a word sequence where each symbol becomes a run of noisy
//! copies of its template and words are separated by silence frames.
//!
//! All randomness comes from one ChaCha8 stream seeded by
//! [`SyntheticSpec::seed`], so output is identical across platforms.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{FeatureMatrix, Transcript};
use crate::error::{Error, Result};
use crate::numerics::Tensor2D;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    /// Symbols are the first `alphabet` lowercase letters.
    pub alphabet: usize,
    pub feature_dim: usize,
    /// Inclusive range of frames per symbol.
    pub frames_per_symbol: [usize; 2],
    /// Silence frames between words and at both ends.
    pub gap_frames: [usize; 2],
    /// Standard deviation of the additive Gaussian noise.
    pub noise: f64,
    pub lexicon_size: usize,
    pub word_length: [usize; 2],
    pub words_per_utterance: [usize; 2],
    /// Probability that the next word is one of the current word's preferred
    /// successors rather than a uniform draw.
    pub successor_bias: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            alphabet: 8,
            feature_dim: 12,
            frames_per_symbol: [2, 3],
            gap_frames: [1, 2],
            noise: 0.1,
            lexicon_size: 40,
            word_length: [2, 5],
            words_per_utterance: [2, 4],
            successor_bias: 0.8,
            seed: 0,
        }
    }
}

const SUCCESSORS: usize = 3;

impl SyntheticSpec {
    fn validate(&self) -> Result<()> {
        let range_ok = |r: [usize; 2], min: usize| r[0] >= min && r[0] <= r[1];
        if !(1..=26).contains(&self.alphabet) {
            return Err(Error::Config(format!(
                "alphabet must be 1..=26, got {}",
                self.alphabet
            )));
        }
        if self.feature_dim == 0 || self.lexicon_size == 0 {
            return Err(Error::Config(
                "feature_dim and lexicon_size must be positive".into(),
            ));
        }
        if !range_ok(self.frames_per_symbol, 1)
            || !range_ok(self.gap_frames, 0)
            || !range_ok(self.word_length, 1)
            || !range_ok(self.words_per_utterance, 1)
        {
            return Err(Error::Config(
                "synthetic ranges must satisfy 1 <= min <= max (gaps may be 0)".into(),
            ));
        }
        if self.alphabet == 1 && self.word_length[1] > 1 {
            return Err(Error::Config(
                "a one-symbol alphabet only has one-letter words".into(),
            ));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite())
            || !(0.0..=1.0).contains(&self.successor_bias)
        {
            return Err(Error::Config(
                "noise must be >= 0 and successor_bias in [0, 1]".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticUtterance {
    pub features: FeatureMatrix,
    pub transcript: Transcript,
    /// Symbol index per frame; `None` marks silence.
    pub frame_labels: Vec<Option<usize>>,
}

/// Lexicon, templates and word-successor structure drawn from the seed.
#[derive(Clone, Debug)]
pub struct SyntheticSource {
    spec: SyntheticSpec,
    lexicon: Vec<String>,
    /// Row `s` is the template of symbol `s`; the last row is silence.
    templates: Tensor2D<f64>,
    successors: Vec<Vec<usize>>,
    rng: ChaCha8Rng,
}

impl SyntheticSource {
    pub fn new(spec: &SyntheticSpec) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let templates = Tensor2D::from_fn(spec.alphabet + 1, spec.feature_dim, |_, _| {
            StandardNormal.sample(&mut rng)
        });
        let mut seen = BTreeSet::new();
        let mut lexicon = Vec::with_capacity(spec.lexicon_size);
        let mut attempts = 0usize;
        while lexicon.len() < spec.lexicon_size {
            attempts += 1;
            if attempts > 1000 * spec.lexicon_size {
                return Err(Error::Config(
                    "cannot draw enough distinct words; enlarge alphabet or word_length".into(),
                ));
            }
            let len = rng.random_range(spec.word_length[0]..=spec.word_length[1]);
            let mut word = String::with_capacity(len);
            let mut prev = None;
            for _ in 0..len {
                // adjacent repeats would be acoustically one long run
                let mut s = rng.random_range(0..spec.alphabet);
                while Some(s) == prev {
                    s = rng.random_range(0..spec.alphabet);
                }
                word.push((b'a' + s as u8) as char);
                prev = Some(s);
            }
            if seen.insert(word.clone()) {
                lexicon.push(word);
            }
        }
        // row `lexicon_size` holds the successors of the utterance start
        let successors = (0..=spec.lexicon_size)
            .map(|_| {
                (0..SUCCESSORS.min(spec.lexicon_size))
                    .map(|_| rng.random_range(0..spec.lexicon_size))
                    .collect()
            })
            .collect();
        Ok(Self {
            spec: spec.clone(),
            lexicon,
            templates,
            successors,
            rng,
        })
    }

    pub fn lexicon(&self) -> &[String] {
        &self.lexicon
    }

    pub fn template(&self, symbol: usize) -> &[f64] {
        self.templates.row(symbol)
    }

    pub fn silence_template(&self) -> &[f64] {
        self.templates.row(self.spec.alphabet)
    }

    fn next_word(&mut self, prev: Option<usize>) -> usize {
        let row = prev.unwrap_or(self.spec.lexicon_size);
        if self.rng.random_bool(self.spec.successor_bias) {
            let pick = self.rng.random_range(0..self.successors[row].len());
            self.successors[row][pick]
        } else {
            self.rng.random_range(0..self.spec.lexicon_size)
        }
    }

    pub fn utterance(&mut self, utt_id: &str) -> Result<SyntheticUtterance> {
        let spec = self.spec.clone();
        let n_words = self
            .rng
            .random_range(spec.words_per_utterance[0]..=spec.words_per_utterance[1]);
        let mut words = Vec::with_capacity(n_words);
        let mut prev = None;
        for _ in 0..n_words {
            let w = self.next_word(prev);
            words.push(self.lexicon[w].clone());
            prev = Some(w);
        }
        let mut labels: Vec<Option<usize>> = Vec::new();
        let gap = |rng: &mut ChaCha8Rng| rng.random_range(spec.gap_frames[0]..=spec.gap_frames[1]);
        labels.extend(std::iter::repeat_n(None, gap(&mut self.rng)));
        for (i, word) in words.iter().enumerate() {
            if i > 0 {
                let g = gap(&mut self.rng).max(1);
                labels.extend(std::iter::repeat_n(None, g));
            }
            for b in word.bytes() {
                let run = self
                    .rng
                    .random_range(spec.frames_per_symbol[0]..=spec.frames_per_symbol[1]);
                labels.extend(std::iter::repeat_n(Some((b - b'a') as usize), run));
            }
        }
        labels.extend(std::iter::repeat_n(None, gap(&mut self.rng)));
        let noise = Normal::new(0.0, spec.noise).map_err(|e| Error::Config(e.to_string()))?;
        let dim = spec.feature_dim;
        let mut values = Tensor2D::zeros(dim, labels.len());
        for (t, label) in labels.iter().enumerate() {
            let row = label.unwrap_or(spec.alphabet);
            for f in 0..dim {
                let clean = self.templates.get(row, f);
                let v = if spec.noise == 0.0 {
                    clean
                } else {
                    clean + noise.sample(&mut self.rng)
                };
                // stored as f32 on disk; keep memory and disk identical
                values.set(f, t, v as f32 as f64);
            }
        }
        Ok(SyntheticUtterance {
            features: FeatureMatrix::new(utt_id, values)?,
            transcript: Transcript::new(utt_id, words.join(" ")),
            frame_labels: labels,
        })
    }
}

/// `n_utts` utterances with ids `syn00000`, `syn00001`, ...
pub fn generate_synthetic(spec: &SyntheticSpec, n_utts: usize) -> Result<Vec<SyntheticUtterance>> {
    let mut source = SyntheticSource::new(spec)?;
    (0..n_utts)
        .map(|i| source.utterance(&format!("syn{i:05}")))
        .collect()
}
