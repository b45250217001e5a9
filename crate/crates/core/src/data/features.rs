//! Feature files: little-endian, magic `FEAT`, u32 version, u32 T, u32 F,
//! then T×F `f32` values, time-major.

use std::path::Path;

use crate::data::binio::{Reader, Writer};
use crate::error::{Error, Result};
use crate::numerics::Tensor2D;

const MAGIC: &[u8; 4] = b"FEAT";
const VERSION: u32 = 1;
pub const FEATURE_HEADER_BYTES: usize = 16;
pub const FEATURE_EXTENSION: &str = "feat";

/// One utterance of acoustic features, held feature-major (`F × T`) in
/// memory as the model consumes it.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    pub utt_id: String,
    values: Tensor2D<f64>,
}

impl FeatureMatrix {
    pub fn new(utt_id: impl Into<String>, values: Tensor2D<f64>) -> Result<Self> {
        if values.rows() == 0 || values.cols() == 0 {
            return Err(Error::contract("feature matrix needs T >= 1 and F >= 1"));
        }
        if !values.is_finite() {
            return Err(Error::contract("feature matrix has non-finite values"));
        }
        Ok(Self {
            utt_id: utt_id.into(),
            values,
        })
    }

    /// Builds from frames listed one after another (`T × F`, row-major).
    pub fn from_frames(
        utt_id: impl Into<String>,
        frames: usize,
        dim: usize,
        data: &[f64],
    ) -> Result<Self> {
        if data.len() != frames * dim {
            return Err(Error::contract(format!(
                "{} values do not fill {frames} frames of dimension {dim}",
                data.len()
            )));
        }
        Self::new(
            utt_id,
            Tensor2D::from_fn(dim, frames, |f, t| data[t * dim + f]),
        )
    }

    pub fn frames(&self) -> usize {
        self.values.cols()
    }

    pub fn dim(&self) -> usize {
        self.values.rows()
    }

    /// `F × T` view.
    pub fn values(&self) -> &Tensor2D<f64> {
        &self.values
    }

    pub fn into_values(self) -> Tensor2D<f64> {
        self.values
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = Writer::default();
        w.bytes(MAGIC);
        w.u32(VERSION);
        w.len_u32(self.frames())?;
        w.len_u32(self.dim())?;
        w.buf.reserve(self.frames() * self.dim() * 4);
        for t in 0..self.frames() {
            for f in 0..self.dim() {
                w.bytes(&(self.values.get(f, t) as f32).to_le_bytes());
            }
        }
        Ok(w.buf)
    }

    pub fn from_bytes(utt_id: impl Into<String>, bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new("feature file", bytes);
        r.magic(MAGIC)?;
        let version = r.u32()?;
        if version != VERSION {
            return Err(r.error(format!("unsupported feature version {version}")));
        }
        let frames = r.u32()? as usize;
        let dim = r.u32()? as usize;
        if frames == 0 || dim == 0 {
            return Err(r.error(format!("empty shape {frames}x{dim}")));
        }
        let n = frames
            .checked_mul(dim)
            .filter(|n| n.checked_mul(4).is_some())
            .ok_or_else(|| r.error("shape overflow"))?;
        let start = r.offset();
        let raw = r.take(n * 4)?;
        r.finish()?;
        let data: Vec<f64> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::parse(
                "feature file",
                start + 4 * i as u64,
                "non-finite value",
            ));
        }
        Self::from_frames(utt_id, frames, dim, &data)
    }

    /// Reads a file; the utterance id is the file stem.
    pub fn read(path: &Path) -> Result<Self> {
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        Self::from_bytes(stem, &std::fs::read(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    /// Plain-text matrix: one frame per line, whitespace-separated numbers.
    /// Blank lines and lines starting with `#` are skipped.
    pub fn parse_text(utt_id: impl Into<String>, text: &str) -> Result<Self> {
        let mut data = Vec::new();
        let mut dim = None;
        let mut frames = 0;
        let mut offset = 0u64;
        for line in text.split_inclusive('\n') {
            let body = line.trim();
            if !body.is_empty() && !body.starts_with('#') {
                let row: Vec<f64> = body
                    .split_whitespace()
                    .map(|tok| tok.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| Error::parse("text matrix", offset, e.to_string()))?;
                match dim {
                    None => dim = Some(row.len()),
                    Some(d) if d != row.len() => {
                        return Err(Error::parse(
                            "text matrix",
                            offset,
                            format!("row has {} values, expected {d}", row.len()),
                        ))
                    }
                    _ => {}
                }
                data.extend(row);
                frames += 1;
            }
            offset += line.len() as u64;
        }
        let dim = dim.ok_or_else(|| Error::parse("text matrix", 0, "no frames"))?;
        Self::from_frames(utt_id, frames, dim, &data)
    }
}

/// Path of an utterance's feature file inside a feature directory.
pub fn feature_path(dir: &Path, utt_id: &str) -> std::path::PathBuf {
    dir.join(format!("{utt_id}.{FEATURE_EXTENSION}"))
}
