//! Feature and transcript files, and the synthetic corpus generator.

pub(crate) mod binio;
mod features;
mod synth;
mod transcripts;

pub use features::{feature_path, FeatureMatrix, FEATURE_EXTENSION, FEATURE_HEADER_BYTES};
pub use synth::{generate_synthetic, SyntheticSource, SyntheticSpec, SyntheticUtterance};
pub use transcripts::{
    format_transcripts, parse_transcripts, read_transcripts, write_transcripts, Transcript,
};

use std::path::Path;

use crate::error::{Error, Result};

/// Loads the feature file of every transcript from `dir`, in transcript order.
pub fn load_corpus(
    dir: &Path,
    transcripts: Vec<Transcript>,
) -> Result<Vec<(FeatureMatrix, Transcript)>> {
    let mut missing = Vec::new();
    let mut out = Vec::with_capacity(transcripts.len());
    for t in transcripts {
        let path = feature_path(dir, &t.utt_id);
        if !path.exists() {
            missing.push(t.utt_id.clone());
            continue;
        }
        let mut feats = FeatureMatrix::read(&path)?;
        feats.utt_id = t.utt_id.clone();
        out.push((feats, t));
    }
    if !missing.is_empty() {
        return Err(Error::Alignment {
            missing,
            extra: Vec::new(),
        });
    }
    Ok(out)
}
