//! Dense row-major tensors, named parameter sets, and the SALT binary dump
//! format.
//!
//! SALT layout (all integers little-endian):
//!
//! ```text
//! offset 0   b"SALT"
//! offset 4   u32 version   1 = f32 payload, 2 = f64 payload
//! offset 8   u32 rank
//! offset 12  u32 reserved  (always 0)
//! offset 16  rank x u32 extents
//! ...        product(extents) payload elements, row-major
//! ```

use std::collections::BTreeMap;
use std::io::{Read, Write};

use crate::error::{Error, Result};

pub const SALT_MAGIC: &[u8; 4] = b"SALT";
/// Version tag for the f32 payload.
pub const SALT_V1_F32: u32 = 1;
/// Version tag for the f64 payload, used by checkpoints for exact round-trips.
pub const SALT_V2_F64: u32 = 2;

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::Shape(format!("zero extent in {shape:?}")));
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::dim("data length", n, data.len()));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; n],
        }
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> f64) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: (0..n).map(&mut f).collect(),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Reinterprets the data under a new shape with the same element count.
    pub fn reshape(self, shape: Vec<usize>) -> Result<Self> {
        Self::new(shape, self.data)
    }

    /// Returns `(C, H, W)` for a rank-3 tensor.
    pub fn chw(&self) -> Result<(usize, usize, usize)> {
        match self.shape[..] {
            [c, h, w] => Ok((c, h, w)),
            _ => Err(Error::dim("rank", 3, self.rank())),
        }
    }

    pub fn dot(&self, other: &Tensor) -> Result<f64> {
        if self.shape != other.shape {
            return Err(Error::Shape(format!(
                "dot of {:?} and {:?}",
                self.shape, other.shape
            )));
        }
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Bitwise equality, distinguishing `-0.0` from `0.0`.
    pub fn bit_eq(&self, other: &Tensor) -> bool {
        self.shape == other.shape
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }

    pub fn write_salt<W: Write>(&self, mut w: W, version: u32) -> Result<()> {
        let mut buf = Vec::with_capacity(16 + 4 * self.rank() + 8 * self.len());
        buf.extend_from_slice(SALT_MAGIC);
        buf.extend_from_slice(&version.to_le_bytes());
        buf.extend_from_slice(&(self.rank() as u32).to_le_bytes());
        buf.extend_from_slice(&0u32.to_le_bytes());
        for &d in &self.shape {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        match version {
            SALT_V1_F32 => {
                for &v in &self.data {
                    buf.extend_from_slice(&(v as f32).to_le_bytes());
                }
            }
            SALT_V2_F64 => {
                for &v in &self.data {
                    buf.extend_from_slice(&v.to_le_bytes());
                }
            }
            other => return Err(Error::format("SALT", format!("unknown version {other}"))),
        }
        w.write_all(&buf)
            .map_err(|e| Error::format("SALT", e.to_string()))
    }

    pub fn to_salt_bytes(&self, version: u32) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        self.write_salt(&mut out, version)?;
        Ok(out)
    }

    pub fn read_salt<R: Read>(mut r: R) -> Result<Self> {
        let mut header = [0u8; 16];
        read_exact(&mut r, &mut header)?;
        if &header[0..4] != SALT_MAGIC {
            return Err(Error::format("SALT", "bad magic"));
        }
        let version = u32_at(&header, 4);
        let rank = u32_at(&header, 8) as usize;
        if u32_at(&header, 12) != 0 {
            return Err(Error::format("SALT", "reserved header word is not zero"));
        }
        if rank == 0 || rank > 8 {
            return Err(Error::format("SALT", format!("unsupported rank {rank}")));
        }
        let mut ext = vec![0u8; 4 * rank];
        read_exact(&mut r, &mut ext)?;
        let shape: Vec<usize> = (0..rank).map(|i| u32_at(&ext, 4 * i) as usize).collect();
        let n = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::format("SALT", "extent overflow"))?;
        let width = match version {
            SALT_V1_F32 => 4,
            SALT_V2_F64 => 8,
            other => return Err(Error::format("SALT", format!("unknown version {other}"))),
        };
        let mut payload = vec![0u8; n * width];
        read_exact(&mut r, &mut payload)?;
        let data = if width == 4 {
            payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                .collect()
        } else {
            payload
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect()
        };
        Tensor::new(shape, data)
    }
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf)
        .map_err(|e| Error::format("SALT", format!("truncated: {e}")))
}

fn u32_at(buf: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([buf[at], buf[at + 1], buf[at + 2], buf[at + 3]])
}

/// Named parameter tensors, iterated in name order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet {
    params: BTreeMap<String, Tensor>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) -> Result<()> {
        let name = name.into();
        if self.params.contains_key(&name) {
            return Err(Error::Config(format!("duplicate parameter `{name}`")));
        }
        self.params.insert(name, t);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.params.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.params.get_mut(name)
    }

    /// Like [`get`](Self::get) but a missing name is an error.
    pub fn expect(&self, name: &str) -> Result<&Tensor> {
        self.params
            .get(name)
            .ok_or_else(|| Error::Config(format!("missing parameter `{name}`")))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.params.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.params.values().map(Tensor::len).sum()
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            params: self
                .params
                .iter()
                .map(|(k, v)| (k.clone(), Tensor::zeros(v.shape())))
                .collect(),
        }
    }

    /// `self[name] += scale * other[name]` for every name present in both.
    pub fn add_scaled(&mut self, other: &ParamSet, scale: f64) {
        for (name, t) in self.params.iter_mut() {
            if let Some(o) = other.params.get(name) {
                for (a, b) in t.data.iter_mut().zip(&o.data) {
                    *a += scale * b;
                }
            }
        }
    }

    pub fn bit_eq(&self, other: &ParamSet) -> bool {
        self.params.len() == other.params.len()
            && self
                .params
                .iter()
                .zip(&other.params)
                .all(|((ka, a), (kb, b))| ka == kb && a.bit_eq(b))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_length_mismatch() {
        assert!(Tensor::new(vec![2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::new(vec![2, 0], vec![]).is_err());
    }

    #[test]
    fn salt_header_layout_is_fixed() {
        let t = Tensor::new(vec![1, 2], vec![1.0, -2.5]).unwrap();
        let bytes = t.to_salt_bytes(SALT_V1_F32).unwrap();
        assert_eq!(&bytes[0..4], b"SALT");
        assert_eq!(&bytes[4..8], &[1, 0, 0, 0]);
        assert_eq!(&bytes[8..12], &[2, 0, 0, 0]);
        assert_eq!(&bytes[12..16], &[0, 0, 0, 0]);
        assert_eq!(&bytes[16..20], &[1, 0, 0, 0]);
        assert_eq!(&bytes[20..24], &[2, 0, 0, 0]);
        assert_eq!(&bytes[24..28], &1.0f32.to_le_bytes());
        assert_eq!(&bytes[28..32], &(-2.5f32).to_le_bytes());
        assert_eq!(bytes.len(), 32);
    }

    #[test]
    fn salt_v2_round_trips_bits() {
        let t = Tensor::new(vec![3], vec![0.1, -0.0, 1e-300]).unwrap();
        let back = Tensor::read_salt(&t.to_salt_bytes(SALT_V2_F64).unwrap()[..]).unwrap();
        assert!(t.bit_eq(&back));
    }

    #[test]
    fn salt_rejects_garbage() {
        assert!(Tensor::read_salt(&b"SALX\x01\0\0\0\x01\0\0\0\0\0\0\0"[..]).is_err());
        let t = Tensor::zeros(&[4]);
        let bytes = t.to_salt_bytes(SALT_V1_F32).unwrap();
        assert!(Tensor::read_salt(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn param_names_are_unique() {
        let mut p = ParamSet::new();
        p.insert("w", Tensor::zeros(&[1])).unwrap();
        assert!(p.insert("w", Tensor::zeros(&[1])).is_err());
    }
}
