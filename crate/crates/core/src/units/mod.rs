//! Character inventories, BPE subword learning, and unit encoding with the
//! `@` continuation marker.

mod bpe;
mod codec;
mod inventory;

pub use bpe::{encode_word, learn_bpe, Merge, MergeTable};
pub use codec::{decode_units, encode_subwords, UnitCodec};
pub use inventory::{build_char_inventory, Inventory, BLANK, BLANK_TOKEN};

/// Marks a unit that does not end a word.
pub const MARKER: char = '@';

/// Unit indices of one utterance, never containing the blank.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UnitSequence {
    pub utt_id: String,
    pub units: Vec<usize>,
}

pub(crate) fn words(text: &str) -> impl Iterator<Item = &str> {
    text.split_whitespace()
}

/// Unit set named by a head: `char`, or BPE with a number of operations
/// written `s300`, `s1k`, `s10k`, `bpe-20` or `bpe20`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum UnitSpec {
    Char,
    Subword(usize),
}

impl UnitSpec {
    pub fn parse(name: &str) -> crate::Result<Self> {
        if name == "char" {
            return Ok(UnitSpec::Char);
        }
        let digits = name
            .strip_prefix("bpe-")
            .or_else(|| name.strip_prefix("bpe"))
            .or_else(|| name.strip_prefix('s'))
            .ok_or_else(|| crate::Error::Config(format!("unknown unit set {name:?}")))?;
        let (digits, scale) = match digits.strip_suffix('k') {
            Some(d) => (d, 1000),
            None => (digits, 1),
        };
        digits
            .parse::<usize>()
            .ok()
            .and_then(|n| n.checked_mul(scale))
            .map(UnitSpec::Subword)
            .ok_or_else(|| crate::Error::Config(format!("unknown unit set {name:?}")))
    }

    /// Codec learned from `corpus` (space-separated words).
    pub fn build_codec<S: AsRef<str>>(self, corpus: &[S]) -> crate::Result<UnitCodec> {
        match self {
            UnitSpec::Char => UnitCodec::characters(corpus),
            UnitSpec::Subword(n) => UnitCodec::subwords(corpus, n),
        }
    }
}
