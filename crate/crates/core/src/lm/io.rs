//! Binary LM files: magic `HCLM`, version, backend tag, inventory hash,
//! `|L'|`, then the counts or parameters.

use std::collections::BTreeMap;

use crate::data::binio::{Reader, Writer};
use crate::error::Result;
use crate::lm::ngram::ContextCounts;
use crate::lm::{fresh_tag, LmModel, NGramLm, RecurrentLm};
use crate::nn::{LstmParams, ProjectionParams};

const MAGIC: &[u8; 4] = b"HCLM";
const VERSION: u32 = 1;
const TAG_NGRAM: u8 = 0;
const TAG_RECURRENT: u8 = 1;

pub(crate) fn encode(model: &LmModel) -> Result<Vec<u8>> {
    let mut w = Writer::default();
    w.bytes(MAGIC);
    w.u32(VERSION);
    match model {
        LmModel::NGram(m) => {
            w.u8(TAG_NGRAM);
            w.str(&m.inventory_hash)?;
            w.len_u32(m.classes)?;
            w.len_u32(m.order)?;
            w.f64(m.alpha);
            w.len_u32(m.counts.len())?;
            for (ctx, c) in &m.counts {
                w.len_u32(ctx.len())?;
                for &u in ctx {
                    w.len_u32(u)?;
                }
                w.u64(c.total);
                w.len_u32(c.next.len())?;
                for (&u, &n) in &c.next {
                    w.len_u32(u)?;
                    w.u64(n);
                }
            }
        }
        LmModel::Recurrent(m) => {
            w.u8(TAG_RECURRENT);
            w.str(&m.inventory_hash)?;
            w.len_u32(m.classes())?;
            w.len_u32(m.layers.len())?;
            for l in &m.layers {
                w.tensor(&l.w_in)?;
                w.tensor(&l.w_rec)?;
                w.tensor(&l.bias)?;
            }
            w.tensor(&m.output.weight)?;
            w.tensor(&m.output.bias)?;
        }
    }
    Ok(w.buf)
}

pub(crate) fn decode(bytes: &[u8]) -> Result<LmModel> {
    let mut r = Reader::new("LM file", bytes);
    r.magic(MAGIC)?;
    let version = r.u32()?;
    if version != VERSION {
        return Err(r.error(format!("unsupported LM version {version}")));
    }
    let tag = r.u8()?;
    let inventory_hash = r.str()?;
    let classes = r.u32()? as usize;
    let model = match tag {
        TAG_NGRAM => {
            let order = r.u32()? as usize;
            let alpha = r.f64()?;
            let n = r.u32()? as usize;
            let mut counts = BTreeMap::new();
            for _ in 0..n {
                let len = r.u32()? as usize;
                let mut ctx = Vec::with_capacity(len.min(64));
                for _ in 0..len {
                    ctx.push(r.u32()? as usize);
                }
                let total = r.u64()?;
                let m = r.u32()? as usize;
                let mut next = BTreeMap::new();
                for _ in 0..m {
                    let u = r.u32()? as usize;
                    next.insert(u, r.u64()?);
                }
                counts.insert(ctx, ContextCounts { total, next });
            }
            LmModel::NGram(NGramLm {
                tag: fresh_tag(),
                order,
                alpha,
                classes,
                inventory_hash,
                counts,
            })
        }
        TAG_RECURRENT => {
            let n = r.u32()? as usize;
            let mut layers = Vec::with_capacity(n.min(64));
            for _ in 0..n {
                layers.push(LstmParams {
                    w_in: r.tensor()?,
                    w_rec: r.tensor()?,
                    bias: r.tensor()?,
                });
            }
            let output = ProjectionParams {
                weight: r.tensor()?,
                bias: r.tensor()?,
            };
            if output.output_dim() != classes {
                return Err(r.error("output layer does not match inventory size"));
            }
            LmModel::Recurrent(RecurrentLm {
                tag: fresh_tag(),
                inventory_hash,
                layers,
                output,
            })
        }
        other => return Err(r.error(format!("unknown LM backend tag {other}"))),
    };
    r.finish()?;
    Ok(model)
}
