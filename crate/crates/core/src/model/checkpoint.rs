//! Model files: magic `HCTC`, u32 version, scalar tag, the topology as
//! TOML, each head's name, inventory, merge table and inventory hash, then
//! every parameter tensor by name.

use std::path::Path;

use crate::data::binio::{Reader, Writer};
use crate::error::{Error, Result};
use crate::model::{ModelGraph, TopologyConfig};
use crate::nn::ParamGroup;
use crate::numerics::Tensor2D;
use crate::scalar::Scalar;
use crate::units::{Inventory, MergeTable, UnitCodec};

const MAGIC: &[u8; 4] = b"HCTC";
const VERSION: u32 = 1;

impl<S: Scalar> ModelGraph<S> {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = Writer::default();
        w.bytes(MAGIC);
        w.u32(VERSION);
        w.u8(S::TAG);
        let toml = toml::to_string(self.config()).map_err(|e| Error::Config(e.to_string()))?;
        w.str(&toml)?;
        w.len_u32(self.codecs().len())?;
        for (head, codec) in self.heads().iter().zip(self.codecs()) {
            w.str(&head.name)?;
            w.str(&codec.inventory().to_file_string())?;
            match codec.merges() {
                Some(m) => {
                    w.u8(1);
                    w.str(&m.to_file_string())?;
                }
                None => w.u8(0),
            }
            w.str(&codec.inventory().hash())?;
        }
        let names = self.param_names();
        let tensors = self.tensors();
        w.len_u32(tensors.len())?;
        for (name, t) in names.iter().zip(tensors) {
            w.str(name)?;
            w.tensor(t)?;
        }
        Ok(w.buf)
    }

    /// Loads a checkpoint written at any scalar precision.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new("checkpoint", bytes);
        r.magic(MAGIC)?;
        let version = r.u32()?;
        if version != VERSION {
            return Err(r.error(format!("unsupported checkpoint version {version}")));
        }
        let tag = r.u8()?;
        if tag != 32 && tag != 64 {
            return Err(r.error(format!("unknown scalar tag {tag}")));
        }
        let at = r.offset();
        let toml = r.str()?;
        let config: TopologyConfig = toml::from_str(&toml)
            .map_err(|e| Error::parse("checkpoint", at, format!("config: {e}")))?;
        let heads = r.u32()? as usize;
        let mut codecs = Vec::with_capacity(heads.min(64));
        for h in 0..heads {
            let name = r.str()?;
            if config.heads.get(h) != Some(&name) {
                return Err(r.error(format!("head {name:?} does not match the stored config")));
            }
            let inventory = Inventory::parse(&r.str()?)?;
            let merges = match r.u8()? {
                0 => None,
                1 => Some(MergeTable::parse(&r.str()?)?),
                other => return Err(r.error(format!("bad merge flag {other}"))),
            };
            let hash = r.str()?;
            if hash != inventory.hash() {
                return Err(Error::InventoryMismatch(format!(
                    "head {name}: stored hash {hash}, inventory hashes to {}",
                    inventory.hash()
                )));
            }
            codecs.push(UnitCodec::from_parts(inventory, merges)?);
        }
        let mut model = ModelGraph::<S>::new(&config, codecs, None)?;
        let names = model.param_names();
        let count = r.u32()? as usize;
        if count != names.len() {
            return Err(r.error(format!("{count} tensors, model has {}", names.len())));
        }
        let mut values = Vec::with_capacity(count);
        for want in &names {
            let name = r.str()?;
            if &name != want {
                return Err(r.error(format!("tensor {name:?} where {want:?} expected")));
            }
            let t: Tensor2D<S> = if tag == 32 {
                r.tensor::<f32>()?.cast()
            } else {
                r.tensor::<f64>()?.cast()
            };
            values.push(t);
        }
        r.finish()?;
        model
            .set_params(&values)
            .map_err(|e| Error::parse("checkpoint", bytes.len() as u64, e.to_string()))?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
