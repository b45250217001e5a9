use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use crate::error::{Error, Result};
use crate::units::{words, MARKER};

/// One merge: `left` (always marker-terminated) followed by `right`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Merge {
    pub left: String,
    pub right: String,
    pub merged: String,
}

impl Merge {
    pub fn new(left: &str, right: &str) -> Result<Self> {
        let Some(stem) = left.strip_suffix(MARKER) else {
            return Err(Error::contract(format!(
                "merge left side {left:?} must end with {MARKER}"
            )));
        };
        if stem.is_empty() || right.is_empty() || right == MARKER.to_string() {
            return Err(Error::contract(format!(
                "degenerate merge {left:?} {right:?}"
            )));
        }
        Ok(Self {
            left: left.to_string(),
            right: right.to_string(),
            merged: format!("{stem}{right}"),
        })
    }
}

/// Ordered BPE merges.
#[derive(Clone, Debug, Default)]
pub struct MergeTable {
    merges: Vec<Merge>,
    ranks: HashMap<(String, String), usize>,
}

impl PartialEq for MergeTable {
    fn eq(&self, other: &Self) -> bool {
        self.merges == other.merges
    }
}

impl Eq for MergeTable {}

impl MergeTable {
    pub fn from_merges(merges: Vec<Merge>) -> Result<Self> {
        let mut ranks = HashMap::with_capacity(merges.len());
        for (r, m) in merges.iter().enumerate() {
            if ranks.insert((m.left.clone(), m.right.clone()), r).is_some() {
                return Err(Error::contract(format!(
                    "duplicate merge {} {}",
                    m.left, m.right
                )));
            }
        }
        Ok(Self { merges, ranks })
    }

    pub fn len(&self) -> usize {
        self.merges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.merges.is_empty()
    }

    pub fn merges(&self) -> &[Merge] {
        &self.merges
    }

    /// The first `n` merges.
    pub fn truncated(&self, n: usize) -> Self {
        Self::from_merges(self.merges[..n.min(self.merges.len())].to_vec())
            .expect("prefix of a valid table")
    }

    pub(crate) fn rank(&self, left: &str, right: &str) -> Option<usize> {
        // avoids allocating a key per lookup in the common miss case
        if self.ranks.is_empty() {
            return None;
        }
        self.ranks
            .get(&(left.to_string(), right.to_string()))
            .copied()
    }

    pub fn to_file_string(&self) -> String {
        let mut s = String::from("# left right, in application order\n");
        for m in &self.merges {
            s.push_str(&m.left);
            s.push(' ');
            s.push_str(&m.right);
            s.push('\n');
        }
        s
    }

    /// Parses `left<SPACE>right` lines; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut merges = Vec::new();
        let mut offset = 0u64;
        for line in text.split_inclusive('\n') {
            let body = line.trim_end_matches(['\n', '\r']);
            let trimmed = body.trim();
            if !trimmed.is_empty() && !trimmed.starts_with('#') {
                let mut parts = trimmed.split(' ');
                match (parts.next(), parts.next(), parts.next()) {
                    (Some(l), Some(r), None) => merges.push(
                        Merge::new(l, r)
                            .map_err(|e| Error::parse("merge table", offset, e.to_string()))?,
                    ),
                    _ => {
                        return Err(Error::parse(
                            "merge table",
                            offset,
                            format!("expected `left right`, got {body:?}"),
                        ))
                    }
                }
            }
            offset += line.len() as u64;
        }
        Self::from_merges(merges)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_file_string())?;
        Ok(())
    }
}

/// Splits a word into marked characters: every character but the last
/// carries the continuation marker.
pub(crate) fn marked_chars(word: &str) -> Vec<String> {
    let n = word.chars().count();
    word.chars()
        .enumerate()
        .map(|(i, c)| {
            if i + 1 < n {
                format!("{c}{MARKER}")
            } else {
                c.to_string()
            }
        })
        .collect()
}

fn merged_of(left: &str, right: &str) -> String {
    format!("{}{right}", left.strip_suffix(MARKER).unwrap_or(left))
}

/// Segments one word by applying `table` in order.
///
/// Repeatedly merges every occurrence of the lowest-ranked adjacent pair;
/// a merge can only create pairs of higher rank, so this equals applying the
/// merges one after another.
pub fn encode_word(word: &str, table: &MergeTable) -> Vec<String> {
    let mut pieces = marked_chars(word);
    loop {
        let best = pieces
            .windows(2)
            .filter_map(|w| table.rank(&w[0], &w[1]))
            .min();
        let Some(rank) = best else { break };
        let m = &table.merges[rank];
        let mut out = Vec::with_capacity(pieces.len());
        let mut i = 0;
        while i < pieces.len() {
            if i + 1 < pieces.len() && pieces[i] == m.left && pieces[i + 1] == m.right {
                out.push(m.merged.clone());
                i += 2;
            } else {
                out.push(std::mem::take(&mut pieces[i]));
                i += 1;
            }
        }
        pieces = out;
    }
    pieces
}

/// Learns up to `n_ops` merges from whitespace-separated words.
///
/// Pairs are counted within words only, weighted by word frequency. The most
/// frequent pair wins, ties going to the lexicographically smallest
/// `(left, right)`. Pairs whose merged string is already a unit are passed
/// over, so every merge adds exactly one unit. Learning stops early once no
/// pair occurs at least twice.
pub fn learn_bpe<S: AsRef<str>>(corpus: &[S], n_ops: usize) -> Result<MergeTable> {
    let mut word_counts: BTreeMap<&str, usize> = BTreeMap::new();
    for text in corpus {
        for w in words(text.as_ref()) {
            if w.contains(MARKER) {
                return Err(Error::UnknownSymbol {
                    symbol: MARKER.to_string(),
                    context: w.to_string(),
                });
            }
            *word_counts.entry(w).or_default() += 1;
        }
    }

    let mut symbols: Vec<String> = Vec::new();
    let mut ids: HashMap<String, u32> = HashMap::new();
    let mut intern = |s: String, symbols: &mut Vec<String>| -> u32 {
        if let Some(&id) = ids.get(&s) {
            return id;
        }
        let id = symbols.len() as u32;
        ids.insert(s.clone(), id);
        symbols.push(s);
        id
    };

    let mut existing: HashSet<String> = HashSet::new();
    let mut seqs: Vec<(Vec<u32>, usize)> = Vec::with_capacity(word_counts.len());
    for (w, &count) in &word_counts {
        for c in w.chars() {
            existing.insert(c.to_string());
            existing.insert(format!("{c}{MARKER}"));
        }
        let seq = marked_chars(w)
            .into_iter()
            .map(|s| intern(s, &mut symbols))
            .collect();
        seqs.push((seq, count));
    }

    let mut merges = Vec::with_capacity(n_ops);
    while merges.len() < n_ops {
        let mut counts: HashMap<(u32, u32), usize> = HashMap::new();
        for (seq, count) in &seqs {
            for w in seq.windows(2) {
                *counts.entry((w[0], w[1])).or_default() += count;
            }
        }
        let mut best: Option<((u32, u32), usize)> = None;
        for (&pair, &count) in &counts {
            if count < 2
                || existing.contains(&merged_of(
                    &symbols[pair.0 as usize],
                    &symbols[pair.1 as usize],
                ))
            {
                continue;
            }
            let better = match best {
                None => true,
                Some((bp, bc)) => {
                    count > bc
                        || (count == bc
                            && (&symbols[pair.0 as usize], &symbols[pair.1 as usize])
                                < (&symbols[bp.0 as usize], &symbols[bp.1 as usize]))
                }
            };
            if better {
                best = Some((pair, count));
            }
        }
        let Some(((l, r), _)) = best else { break };
        let merge = Merge::new(&symbols[l as usize], &symbols[r as usize])?;
        existing.insert(merge.merged.clone());
        let new_id = intern(merge.merged.clone(), &mut symbols);
        for (seq, _) in &mut seqs {
            if seq.len() < 2 {
                continue;
            }
            let mut out = Vec::with_capacity(seq.len());
            let mut i = 0;
            while i < seq.len() {
                if i + 1 < seq.len() && seq[i] == l && seq[i + 1] == r {
                    out.push(new_id);
                    i += 2;
                } else {
                    out.push(seq[i]);
                    i += 1;
                }
            }
            *seq = out;
        }
        merges.push(merge);
    }
    MergeTable::from_merges(merges)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_ops_is_empty() {
        assert!(learn_bpe(&["some words here"], 0).unwrap().is_empty());
    }

    #[test]
    fn most_frequent_pair_first() {
        // (a@, a) twice within words, (a@, b) once
        let t = learn_bpe(&["aa aa ab"], 1).unwrap();
        assert_eq!(t.merges(), &[Merge::new("a@", "a").unwrap()]);
        assert_eq!(t.merges()[0].merged, "aa");
    }

    #[test]
    fn ties_break_lexicographically() {
        let t = learn_bpe(&["ba ba dc dc"], 1).unwrap();
        assert_eq!(t.merges()[0].left, "b@");
        assert_eq!(t.merges()[0].right, "a");
    }

    #[test]
    fn stops_when_nothing_repeats() {
        let t = learn_bpe(&["abc def"], 10).unwrap();
        assert!(t.is_empty());
        let t = learn_bpe(&["abc abc"], 10).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(encode_word("abc", &t), ["abc"]);
    }

    #[test]
    fn no_merge_across_words() {
        // "a b" repeated: pair (a, b) would only exist across a boundary
        let t = learn_bpe(&["a b a b a b"], 5).unwrap();
        assert!(t.is_empty());
    }

    #[test]
    fn table_one_style_segmentations() {
        let partial = MergeTable::from_merges(vec![
            Merge::new("w@", "e@").unwrap(),
            Merge::new("we@", "a@").unwrap(),
            Merge::new("t@", "h@").unwrap(),
            Merge::new("th@", "e@").unwrap(),
            Merge::new("the@", "r").unwrap(),
        ])
        .unwrap();
        assert_eq!(encode_word("weather", &partial), ["wea@", "ther"]);
        let mut full = partial.merges().to_vec();
        full.push(Merge::new("wea@", "ther").unwrap());
        let full = MergeTable::from_merges(full).unwrap();
        assert_eq!(encode_word("weather", &full), ["weather"]);
        assert_eq!(encode_word("a", &full), ["a"]);
    }

    #[test]
    fn file_format_round_trip() {
        let t = learn_bpe(&["cold cold weather weather co ld"], 6).unwrap();
        let text = t.to_file_string();
        assert_eq!(MergeTable::parse(&text).unwrap(), t);
        let with_noise = format!("# comment\n\n{text}\n");
        assert_eq!(MergeTable::parse(&with_noise).unwrap(), t);
    }

    #[test]
    fn malformed_lines_report_offset() {
        let err = MergeTable::parse("a@ b\nbad line here\n").unwrap_err();
        match err {
            Error::Parse { offset, .. } => assert_eq!(offset, 5),
            e => panic!("unexpected {e}"),
        }
        assert!(MergeTable::parse("a b\n").is_err());
    }

    #[test]
    fn marker_in_corpus_rejected() {
        assert!(learn_bpe(&["e@mail"], 1).is_err());
    }
}
