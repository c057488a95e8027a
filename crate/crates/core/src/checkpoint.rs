//! Model checkpoints.
//!
//! ```text
//! b"SSUP"
//! u32 version (1)
//! u32 n, then n bytes of JSON ModelConfig
//! u32 count of named tensors
//! repeated: u32 name length, UTF-8 name, SALT v2 tensor
//! ```
//!
//! Tensors are stored with the f64 SALT payload so that a checkpoint
//! reproduces the model bit for bit. The class centers are stored under the
//! name `centers`.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::network::{Model, ModelConfig};
use crate::tensor::{ParamSet, Tensor, SALT_V2_F64};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"SSUP";
pub const CHECKPOINT_VERSION: u32 = 1;
const CENTERS: &str = "centers";

pub fn to_bytes(model: &Model) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    let cfg = serde_json::to_vec(&model.config)?;
    out.extend_from_slice(&(cfg.len() as u32).to_le_bytes());
    out.extend_from_slice(&cfg);
    let named: Vec<(&str, &Tensor)> = model
        .params
        .iter()
        .chain(std::iter::once((CENTERS, &model.centers)))
        .collect();
    out.extend_from_slice(&(named.len() as u32).to_le_bytes());
    for (name, t) in named {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        t.write_salt(&mut out, SALT_V2_F64)?;
    }
    Ok(out)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let s = self
            .buf
            .get(self.pos..self.pos + n)
            .ok_or_else(|| Error::format("checkpoint", "truncated"))?;
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<Model> {
    let mut cur = Cursor { buf: bytes, pos: 0 };
    if cur.take(4)? != CHECKPOINT_MAGIC {
        return Err(Error::format("checkpoint", "bad magic"));
    }
    let version = cur.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::format("checkpoint", format!("unsupported version {version}")));
    }
    let n = cur.u32()? as usize;
    let config: ModelConfig = serde_json::from_slice(cur.take(n)?)?;
    config.validate()?;
    let count = cur.u32()? as usize;
    let mut params = ParamSet::new();
    let mut centers = None;
    for _ in 0..count {
        let len = cur.u32()? as usize;
        let name = std::str::from_utf8(cur.take(len)?)
            .map_err(|_| Error::format("checkpoint", "non UTF-8 tensor name"))?
            .to_string();
        let mut rest = &bytes[cur.pos..];
        let before = rest.len();
        let t = Tensor::read_salt(&mut rest)?;
        cur.pos += before - rest.len();
        if name == CENTERS {
            centers = Some(t);
        } else {
            params.insert(name, t)?;
        }
    }
    if cur.pos != bytes.len() {
        return Err(Error::format("checkpoint", "trailing bytes"));
    }
    let centers = centers.ok_or_else(|| Error::format("checkpoint", "missing centers"))?;
    let reference = Model::new(config.clone(), 0)?;
    for (name, t) in reference.params.iter() {
        let got = params
            .get(name)
            .ok_or_else(|| Error::format("checkpoint", format!("missing tensor {name}")))?;
        if got.shape() != t.shape() {
            return Err(Error::format("checkpoint", format!("tensor {name} has shape {:?}", got.shape())));
        }
    }
    if params.len() != reference.params.len() || centers.shape() != reference.centers.shape() {
        return Err(Error::format("checkpoint", "tensor set does not match the config"));
    }
    Ok(Model {
        config,
        params,
        centers,
    })
}

pub fn save(model: &Model, path: &Path) -> Result<()> {
    fs::write(path, to_bytes(model)?).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<Model> {
    from_bytes(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_bit_exactly() {
        let mut m = Model::new(ModelConfig::default(), 17).unwrap();
        m.centers.data_mut()[3] = 0.1 + 0.2;
        let bytes = to_bytes(&m).unwrap();
        let back = from_bytes(&bytes).unwrap();
        assert!(back.params.bit_eq(&m.params));
        assert!(back.centers.bit_eq(&m.centers));
        assert_eq!(back.config, m.config);
        assert_eq!(to_bytes(&back).unwrap(), bytes);
    }

    #[test]
    fn rejects_corruption() {
        let m = Model::new(ModelConfig::default(), 1).unwrap();
        let bytes = to_bytes(&m).unwrap();
        assert!(from_bytes(&bytes[..bytes.len() - 3]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(from_bytes(&bad).is_err());
        let mut extra = bytes;
        extra.push(0);
        assert!(from_bytes(&extra).is_err());
    }
}
