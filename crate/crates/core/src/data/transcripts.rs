//! Transcript files: `utt_id<TAB>text`, UTF-8, one utterance per line.

use std::collections::BTreeSet;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Transcript {
    pub utt_id: String,
    pub text: String,
}

impl Transcript {
    pub fn new(utt_id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            utt_id: utt_id.into(),
            text: text.into(),
        }
    }
}

/// Parses transcript lines. With `lowercase`, text is lowercased on
/// ingestion. Duplicate ids are rejected.
pub fn parse_transcripts(content: &str, lowercase: bool) -> Result<Vec<Transcript>> {
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    let mut offset = 0u64;
    for line in content.split_inclusive('\n') {
        let body = line.trim_end_matches(['\n', '\r']);
        if !body.trim().is_empty() {
            let (id, text) = body.split_once('\t').ok_or_else(|| {
                Error::parse("transcript file", offset, "missing tab after utterance id")
            })?;
            if id.is_empty() || id.chars().any(char::is_whitespace) {
                return Err(Error::parse(
                    "transcript file",
                    offset,
                    format!("bad utterance id {id:?}"),
                ));
            }
            if !seen.insert(id.to_string()) {
                return Err(Error::parse(
                    "transcript file",
                    offset,
                    format!("duplicate utterance id {id}"),
                ));
            }
            let text = if lowercase {
                text.to_lowercase()
            } else {
                text.to_string()
            };
            out.push(Transcript::new(id, text));
        }
        offset += line.len() as u64;
    }
    Ok(out)
}

pub fn format_transcripts(items: &[Transcript]) -> String {
    let mut s = String::new();
    for t in items {
        s.push_str(&t.utt_id);
        s.push('\t');
        s.push_str(&t.text);
        s.push('\n');
    }
    s
}

pub fn read_transcripts(path: &Path, lowercase: bool) -> Result<Vec<Transcript>> {
    parse_transcripts(&std::fs::read_to_string(path)?, lowercase)
}

pub fn write_transcripts(path: &Path, items: &[Transcript]) -> Result<()> {
    std::fs::write(path, format_transcripts(items))?;
    Ok(())
}
