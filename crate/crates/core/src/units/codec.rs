use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::units::bpe::{encode_word, learn_bpe, MergeTable};
use crate::units::inventory::{build_char_inventory, Inventory};
use crate::units::{words, MARKER};

/// Segments text into subword pieces with the continuation marker.
pub fn encode_subwords(text: &str, merges: &MergeTable) -> Vec<String> {
    words(text).flat_map(|w| encode_word(w, merges)).collect()
}

/// Joins pieces back into text.
///
/// Subword pieces lose their marker and a word ends at every piece without
/// one. Character-level pieces are concatenated without spaces.
pub fn decode_units<S: AsRef<str>>(pieces: &[S], character_level: bool) -> String {
    if character_level {
        return pieces.iter().map(|p| p.as_ref()).collect();
    }
    let mut out = String::new();
    let mut word_open = false;
    for p in pieces {
        let p = p.as_ref();
        if !word_open && !out.is_empty() {
            out.push(' ');
        }
        match p.strip_suffix(MARKER) {
            Some(stem) => {
                out.push_str(stem);
                word_open = true;
            }
            None => {
                out.push_str(p);
                word_open = false;
            }
        }
    }
    out
}

/// Inventory together with the segmentation that produces it.
#[derive(Clone, Debug, PartialEq)]
pub struct UnitCodec {
    inventory: Inventory,
    merges: Option<MergeTable>,
}

impl UnitCodec {
    pub fn characters<S: AsRef<str>>(corpus: &[S]) -> Result<Self> {
        Ok(Self {
            inventory: build_char_inventory(corpus)?,
            merges: None,
        })
    }

    /// Learns `n_ops` merges on `corpus` and builds the matching inventory.
    pub fn subwords<S: AsRef<str>>(corpus: &[S], n_ops: usize) -> Result<Self> {
        let table = learn_bpe(corpus, n_ops)?;
        Self::with_merges(corpus, table)
    }

    /// Inventory for an existing table: both marked and unmarked forms of
    /// every corpus character, then one unit per merge in table order.
    pub fn with_merges<S: AsRef<str>>(corpus: &[S], table: MergeTable) -> Result<Self> {
        let chars = build_char_inventory(corpus)?;
        let base: BTreeSet<String> = chars
            .labels()
            .iter()
            .flat_map(|c| [c.clone(), format!("{c}{MARKER}")])
            .collect();
        let mut labels: Vec<String> = base.into_iter().collect();
        labels.extend(table.merges().iter().map(|m| m.merged.clone()));
        Ok(Self {
            inventory: Inventory::new(labels, false)?,
            merges: Some(table),
        })
    }

    pub fn from_parts(inventory: Inventory, merges: Option<MergeTable>) -> Result<Self> {
        if inventory.is_character_level() != merges.is_none() {
            return Err(Error::contract(
                "character inventories take no merge table and subword inventories need one",
            ));
        }
        Ok(Self { inventory, merges })
    }

    pub fn inventory(&self) -> &Inventory {
        &self.inventory
    }

    pub fn merges(&self) -> Option<&MergeTable> {
        self.merges.as_ref()
    }

    pub fn into_parts(self) -> (Inventory, Option<MergeTable>) {
        (self.inventory, self.merges)
    }

    fn check_chars(&self, word: &str) -> Result<()> {
        for c in word.chars() {
            let known = match self.merges {
                None => self
                    .inventory
                    .index_of(c.encode_utf8(&mut [0; 4]))
                    .is_some(),
                Some(_) => {
                    self.inventory
                        .index_of(c.encode_utf8(&mut [0; 4]))
                        .is_some()
                        && self.inventory.index_of(&format!("{c}{MARKER}")).is_some()
                }
            };
            if !known {
                return Err(Error::UnknownSymbol {
                    symbol: c.to_string(),
                    context: word.to_string(),
                });
            }
        }
        Ok(())
    }

    /// Pieces of `text` as strings.
    pub fn pieces(&self, text: &str) -> Result<Vec<String>> {
        let mut out = Vec::new();
        for w in words(text) {
            self.check_chars(w)?;
            match &self.merges {
                None => out.extend(w.chars().map(String::from)),
                Some(table) => out.extend(encode_word(w, table)),
            }
        }
        Ok(out)
    }

    /// Unit indices of `text`; never contains the blank.
    pub fn encode(&self, text: &str) -> Result<Vec<usize>> {
        self.pieces(text)?
            .iter()
            .map(|p| {
                self.inventory
                    .index_of(p)
                    .ok_or_else(|| Error::UnknownSymbol {
                        symbol: p.clone(),
                        context: text.to_string(),
                    })
            })
            .collect()
    }

    /// Text of a unit sequence; blank and out-of-range indices are skipped.
    pub fn decode(&self, units: &[usize]) -> String {
        let pieces: Vec<&str> = units
            .iter()
            .filter(|&&u| u != crate::units::BLANK)
            .filter_map(|&u| self.inventory.unit(u))
            .collect();
        decode_units(&pieces, self.inventory.is_character_level())
    }
}
