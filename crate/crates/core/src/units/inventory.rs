use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::units::MARKER;

/// Index of the CTC blank in every inventory.
pub const BLANK: usize = 0;
/// Spelling of the blank in inventory files.
pub const BLANK_TOKEN: &str = "<blank>";

/// Ordered target set `L` plus the blank at index 0.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Inventory {
    units: Vec<String>,
    index: HashMap<String, usize>,
    character_level: bool,
}

impl Inventory {
    /// Builds an inventory from labels (blank excluded); order is kept.
    pub fn new(labels: Vec<String>, character_level: bool) -> Result<Self> {
        let mut units = Vec::with_capacity(labels.len() + 1);
        units.push(BLANK_TOKEN.to_string());
        let mut index = HashMap::with_capacity(labels.len());
        for label in labels {
            if label.is_empty() || label == BLANK_TOKEN || label.chars().any(char::is_whitespace) {
                return Err(Error::contract(format!("invalid unit {label:?}")));
            }
            if index.insert(label.clone(), units.len()).is_some() {
                return Err(Error::contract(format!("duplicate unit {label:?}")));
            }
            units.push(label);
        }
        Ok(Self {
            units,
            index,
            character_level,
        })
    }

    /// `|L'| = |L| + 1`.
    pub fn len(&self) -> usize {
        self.units.len()
    }

    /// Always false: the blank is always present.
    pub fn is_empty(&self) -> bool {
        false
    }

    /// `|L|`.
    pub fn num_labels(&self) -> usize {
        self.units.len() - 1
    }

    pub fn is_character_level(&self) -> bool {
        self.character_level
    }

    pub fn unit(&self, idx: usize) -> Option<&str> {
        self.units.get(idx).map(String::as_str)
    }

    pub fn index_of(&self, unit: &str) -> Option<usize> {
        self.index.get(unit).copied()
    }

    /// Units including the blank token at position 0.
    pub fn units(&self) -> &[String] {
        &self.units
    }

    /// Labels without the blank.
    pub fn labels(&self) -> &[String] {
        &self.units[1..]
    }

    /// Hex SHA-256 prefix over the unit list; identifies the inventory in
    /// checkpoints and LM files.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(if self.character_level { b"c" } else { b"s" });
        for u in &self.units {
            h.update(u.as_bytes());
            h.update(b"\n");
        }
        let digest = h.finalize();
        let mut out = String::with_capacity(16);
        for b in &digest[..8] {
            let _ = write!(out, "{b:02x}");
        }
        out
    }

    pub fn to_file_string(&self) -> String {
        let mut s = String::new();
        for u in &self.units {
            s.push_str(u);
            s.push('\n');
        }
        s
    }

    /// Parses an inventory file. An inventory is character level when no
    /// unit carries the continuation marker.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        match lines.next() {
            Some(first) if first.trim_end() == BLANK_TOKEN => {}
            _ => {
                return Err(Error::parse(
                    "inventory",
                    0,
                    format!("first line must be {BLANK_TOKEN}"),
                ))
            }
        }
        let labels: Vec<String> = lines
            .map(|l| l.trim_end_matches('\r').to_string())
            .filter(|l| !l.is_empty())
            .collect();
        let character_level = !labels.iter().any(|u| u.ends_with(MARKER));
        Self::new(labels, character_level)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_file_string())?;
        Ok(())
    }
}

/// Every non-space character in `corpus`, sorted, plus the blank.
pub fn build_char_inventory<S: AsRef<str>>(corpus: &[S]) -> Result<Inventory> {
    let chars: BTreeSet<char> = corpus
        .iter()
        .flat_map(|t| t.as_ref().chars())
        .filter(|c| !c.is_whitespace())
        .collect();
    if chars.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if chars.contains(&MARKER) {
        return Err(Error::UnknownSymbol {
            symbol: MARKER.to_string(),
            context: "the continuation marker is reserved".into(),
        });
    }
    Inventory::new(chars.into_iter().map(String::from).collect(), true)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_letter_corpus() {
        let inv = build_char_inventory(&["ab", "ba"]).unwrap();
        assert_eq!(inv.len(), 3);
        assert_eq!(inv.units(), ["<blank>", "a", "b"]);
        assert_eq!(inv.len(), inv.num_labels() + 1);
    }

    #[test]
    fn spaces_are_not_units() {
        let inv = build_char_inventory(&["you know"]).unwrap();
        assert_eq!(inv.labels(), ["k", "n", "o", "u", "w", "y"]);
        assert!(inv.index_of(" ").is_none());
    }

    #[test]
    fn size_is_distinct_chars_plus_one() {
        let corpus = ["you know it's no not even cold weather", "uh-huh 1 2"];
        let distinct: BTreeSet<char> = corpus
            .iter()
            .flat_map(|s| s.chars())
            .filter(|c| *c != ' ')
            .collect();
        let inv = build_char_inventory(&corpus).unwrap();
        assert_eq!(inv.len(), distinct.len() + 1);
    }

    #[test]
    fn empty_corpus_rejected() {
        assert!(matches!(
            build_char_inventory::<&str>(&[]),
            Err(Error::EmptyCorpus)
        ));
        assert!(matches!(
            build_char_inventory(&["  "]),
            Err(Error::EmptyCorpus)
        ));
    }

    #[test]
    fn file_round_trip() {
        let inv = Inventory::new(vec!["co@".into(), "ld".into()], false).unwrap();
        let back = Inventory::parse(&inv.to_file_string()).unwrap();
        assert_eq!(back, inv);
        assert_eq!(back.hash(), inv.hash());
        let chars = build_char_inventory(&["ab"]).unwrap();
        assert!(Inventory::parse(&chars.to_file_string())
            .unwrap()
            .is_character_level());
        assert!(Inventory::parse("a\nb\n").is_err());
    }

    #[test]
    fn duplicates_rejected() {
        assert!(Inventory::new(vec!["a".into(), "a".into()], true).is_err());
    }
}
