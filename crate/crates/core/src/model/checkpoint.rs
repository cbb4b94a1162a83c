//! `NIERT1` checkpoint container.
//!
//! ```text
//! b"NIERT1"
//! u32 LE header length, UTF-8 JSON header {"config": …, "metadata": …}
//! u32 LE tensor count
//! per tensor: u32 LE name length, UTF-8 name, u32 LE rows, u32 LE cols,
//!             rows·cols f64 LE values (row-major)
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{NiertError, Result};
use crate::model::params::{NamedTensor, ParamSet};
use crate::model::ModelConfig;
use crate::numerics::Matrix;

pub const MAGIC: &[u8; 6] = b"NIERT1";

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub params: ParamSet,
    /// Free-form provenance (training flags, effective configs).
    pub metadata: BTreeMap<String, serde_json::Value>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    config: ModelConfig,
    metadata: BTreeMap<String, serde_json::Value>,
}

fn corrupt(msg: impl Into<String>) -> NiertError {
    NiertError::CheckpointMismatch(msg.into())
}

impl Checkpoint {
    pub fn new(config: ModelConfig, params: ParamSet) -> Result<Self> {
        params.check_matches(&config)?;
        Ok(Checkpoint {
            config,
            params,
            metadata: BTreeMap::new(),
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&Header {
            config: self.config.clone(),
            metadata: self.metadata.clone(),
        })
        .expect("checkpoint header serializes");
        let mut out = Vec::with_capacity(16 + header.len() + 8 * self.params.num_scalars());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&(self.params.tensors.len() as u32).to_le_bytes());
        for t in &self.params.tensors {
            out.extend_from_slice(&(t.name.len() as u32).to_le_bytes());
            out.extend_from_slice(t.name.as_bytes());
            out.extend_from_slice(&(t.value.rows() as u32).to_le_bytes());
            out.extend_from_slice(&(t.value.cols() as u32).to_le_bytes());
            for v in t.value.as_slice() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(MAGIC.len())? != MAGIC {
            return Err(corrupt("missing NIERT1 magic"));
        }
        let header_len = r.u32()? as usize;
        let header: Header = serde_json::from_slice(r.take(header_len)?)
            .map_err(|e| corrupt(format!("bad header: {e}")))?;
        let count = r.u32()? as usize;
        let mut tensors = Vec::with_capacity(count);
        for _ in 0..count {
            let name_len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| corrupt("tensor name is not UTF-8"))?
                .to_string();
            let rows = r.u32()? as usize;
            let cols = r.u32()? as usize;
            let raw = r.take(rows * cols * 8)?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            let value = Matrix::from_vec(rows, cols, data)
                .map_err(|e| corrupt(format!("tensor {name}: {e}")))?;
            tensors.push(NamedTensor { name, value });
        }
        if r.pos != bytes.len() {
            return Err(corrupt(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        let params = ParamSet { tensors };
        header.config.validate()?;
        params.check_matches(&header.config)?;
        Ok(Checkpoint {
            config: header.config,
            params,
            metadata: header.metadata,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| NiertError::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| NiertError::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| corrupt("truncated checkpoint"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::init_params;
    use crate::numerics::RngStream;

    fn checkpoint() -> Checkpoint {
        let c = ModelConfig::sized(2, 1, 1, 8, 2);
        let p = init_params(&c, &mut RngStream::new(3, 0)).unwrap();
        let mut ck = Checkpoint::new(c, p).unwrap();
        ck.metadata.insert("note".into(), serde_json::json!({"b": 1, "a": [1.5]}));
        ck
    }

    #[test]
    fn byte_identical_round_trip() {
        let ck = checkpoint();
        let bytes = ck.to_bytes();
        assert_eq!(&bytes[..6], b"NIERT1");
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn corrupt_inputs() {
        let bytes = checkpoint().to_bytes();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Checkpoint::from_bytes(&bad).is_err());
        let mut longer = bytes;
        longer.push(0);
        assert!(Checkpoint::from_bytes(&longer).is_err());
    }

    #[test]
    fn config_mismatch_rejected() {
        let ck = checkpoint();
        let other = ModelConfig::sized(2, 1, 2, 8, 2);
        assert!(matches!(
            Checkpoint::new(other, ck.params),
            Err(NiertError::CheckpointMismatch(_))
        ));
    }
}
