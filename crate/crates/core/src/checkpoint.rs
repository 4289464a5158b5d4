//! Binary checkpoint container.
//!
//! All integers and floats are little-endian; floats are stored as raw IEEE
//! bits so a save/load cycle is exact.
//!
//! ```text
//! magic          8 bytes  "ANCCKPT\0"
//! version        u32      1
//! spec_len       u32      length of the JSON-encoded NetworkSpec
//! spec           spec_len bytes
//! param_count    u64
//! params         param_count x f64
//! flags          u32      bit 0: anchor map follows, bit 1: optimizer state follows
//! [anchor map]   u64 frame_interval, u32 name length, name bytes,
//!                u64 anchor count, count x (f64 x, f64 y)
//! [optimizer]    u64 completed epochs, u64 Adam step, param_count x f64 m,
//!                param_count x f64 v
//! ```

use std::path::Path;

use crate::data::formats::Reader;
use crate::error::{Error, Result};
use crate::geometry::AnchorMap;
use crate::model::{NetworkSpec, Parameters};
use crate::optim::{AdamState, TrainState};

pub const MAGIC: &[u8; 8] = b"ANCCKPT\0";
pub const VERSION: u32 = 1;

const HAS_ANCHORS: u32 = 1;
const HAS_OPTIMIZER: u32 = 2;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: Parameters,
    pub anchor_map: Option<AnchorMap>,
    /// Adam state and completed epochs, for resuming.
    pub optimizer: Option<(AdamState, usize)>,
}

impl Checkpoint {
    pub fn from_state(state: &TrainState, anchor_map: Option<AnchorMap>) -> Self {
        Checkpoint {
            params: state.params.clone(),
            anchor_map,
            optimizer: Some((state.adam.clone(), state.epoch)),
        }
    }

    /// Training state to resume from, if the optimizer section is present.
    pub fn train_state(&self) -> Option<TrainState> {
        self.optimizer.as_ref().map(|(adam, epoch)| TrainState {
            params: self.params.clone(),
            adam: adam.clone(),
            epoch: *epoch,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let n = self.params.len();
        let spec = serde_json::to_vec(self.params.spec()).expect("spec serializes");
        let mut b = Vec::with_capacity(64 + spec.len() + 8 * 3 * n);
        b.extend_from_slice(MAGIC);
        b.extend_from_slice(&VERSION.to_le_bytes());
        b.extend_from_slice(&(spec.len() as u32).to_le_bytes());
        b.extend_from_slice(&spec);
        b.extend_from_slice(&(n as u64).to_le_bytes());
        put_f64s(&mut b, self.params.values());
        let mut flags = 0;
        if self.anchor_map.is_some() {
            flags |= HAS_ANCHORS;
        }
        if self.optimizer.is_some() {
            flags |= HAS_OPTIMIZER;
        }
        b.extend_from_slice(&flags.to_le_bytes());
        if let Some(map) = &self.anchor_map {
            b.extend_from_slice(&(map.frame_interval() as u64).to_le_bytes());
            b.extend_from_slice(&(map.source_scene().len() as u32).to_le_bytes());
            b.extend_from_slice(map.source_scene().as_bytes());
            b.extend_from_slice(&(map.len() as u64).to_le_bytes());
            for a in map.anchors() {
                put_f64s(&mut b, a);
            }
        }
        if let Some((adam, epoch)) = &self.optimizer {
            b.extend_from_slice(&(*epoch as u64).to_le_bytes());
            b.extend_from_slice(&adam.t.to_le_bytes());
            put_f64s(&mut b, &adam.m);
            put_f64s(&mut b, &adam.v);
        }
        b
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Format("not a checkpoint (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let spec_len = r.u32()? as usize;
        let spec: NetworkSpec =
            serde_json::from_slice(r.take(spec_len)?).map_err(|e| Error::Format(format!("bad network spec: {e}")))?;
        spec.validate()?;
        let n = r.u64()? as usize;
        if n != spec.param_count() {
            return Err(Error::Format(format!(
                "checkpoint stores {n} parameters, spec needs {}",
                spec.param_count()
            )));
        }
        let values = get_f64s(&mut r, n)?;
        let params = Parameters::from_vec(spec, values)?;
        let flags = r.u32()?;
        if flags & !(HAS_ANCHORS | HAS_OPTIMIZER) != 0 {
            return Err(Error::Format(format!("unknown checkpoint flags {flags:#x}")));
        }
        let anchor_map = if flags & HAS_ANCHORS != 0 {
            let k = r.u64()? as usize;
            let name_len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|e| Error::Format(format!("scene name is not UTF-8: {e}")))?
                .to_string();
            let count = r.u64()? as usize;
            let flat = get_f64s(
                &mut r,
                count
                    .checked_mul(2)
                    .ok_or_else(|| Error::Format("anchor count overflow".into()))?,
            )?;
            let anchors = flat.chunks_exact(2).map(|c| [c[0], c[1]]).collect();
            Some(AnchorMap::new(anchors, k, name)?)
        } else {
            None
        };
        let optimizer = if flags & HAS_OPTIMIZER != 0 {
            let epoch = r.u64()? as usize;
            let t = r.u64()?;
            let m = get_f64s(&mut r, n)?;
            let v = get_f64s(&mut r, n)?;
            Some((AdamState { m, v, t }, epoch))
        } else {
            None
        };
        if r.pos != bytes.len() {
            return Err(Error::Format(format!(
                "{} trailing bytes in checkpoint",
                bytes.len() - r.pos
            )));
        }
        Ok(Checkpoint {
            params,
            anchor_map,
            optimizer,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)
            .map_err(|e| Error::InvalidInput(format!("cannot read checkpoint {}: {e}", path.display())))?;
        Checkpoint::from_bytes(&bytes)
    }
}

fn put_f64s(b: &mut Vec<u8>, v: &[f64]) {
    for x in v {
        b.extend_from_slice(&x.to_le_bytes());
    }
}

fn get_f64s(r: &mut Reader<'_>, n: usize) -> Result<Vec<f64>> {
    let bytes = r.take(
        n.checked_mul(8)
            .ok_or_else(|| Error::Format("length overflow".into()))?,
    )?;
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}
