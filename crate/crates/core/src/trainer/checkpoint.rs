//! Flat little-endian parameter file.
//!
//! ```text
//! magic   8 bytes  "PLTNCKPT"
//! version u32      1
//! count   u32      number of parameters
//! count times:
//!   name_len u32, name utf-8 bytes, rank u32, rank x u64 dims
//! then, in header order, every parameter's values as f64 (row-major)
//! ```

use std::fs;
use std::path::Path;

use crate::diffcore::{Parameter, Tensor};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"PLTNCKPT";
pub const VERSION: u32 = 1;

pub fn encode(params: &[&Parameter]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for p in params {
        out.extend_from_slice(&(p.name.len() as u32).to_le_bytes());
        out.extend_from_slice(p.name.as_bytes());
        out.extend_from_slice(&(p.value.rank() as u32).to_le_bytes());
        for &d in p.value.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
    }
    for p in params {
        for x in p.value.data() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

/// Biases (names ending in `.bias`) come back unregularized.
pub fn decode(bytes: &[u8]) -> Result<Vec<Parameter>> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let count = r.u32()? as usize;
    let mut header = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| Error::Checkpoint("parameter name is not utf-8".into()))?
            .to_string();
        let rank = r.u32()? as usize;
        let shape = (0..rank)
            .map(|_| r.u64().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        header.push((name, shape));
    }
    let mut params = Vec::with_capacity(header.len());
    for (name, shape) in header {
        let n = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::Checkpoint(format!("'{name}' is too large")))?;
        let raw = r.take(n.checked_mul(8).ok_or_else(|| Error::Checkpoint("overflow".into()))?)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let value = Tensor::new(shape, data).map_err(|e| Error::Checkpoint(format!("'{name}': {e}")))?;
        let regularized = !name.ends_with(".bias");
        params.push(Parameter::new(name, value, regularized));
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(params)
}

pub fn write_checkpoint(path: &Path, params: &[&Parameter]) -> Result<()> {
    fs::write(path, encode(params)).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<Vec<Parameter>> {
    decode(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_and_round_trip() {
        let w = Parameter::new("g.layer1.weight", Tensor::matrix(2, 3, vec![1.0, -2.0, 0.5, 1e-300, f64::MIN_POSITIVE, 7.0]).unwrap(), true);
        let b = Parameter::new("g.layer1.bias", Tensor::vector(vec![0.25, -0.0, 3.0]).unwrap(), false);
        let bytes = encode(&[&w, &b]);
        let header = 8 + 4 + 4 + (4 + 15 + 4 + 16) + (4 + 13 + 4 + 8);
        assert_eq!(bytes.len(), header + 9 * 8);
        assert_eq!(&bytes[..8], MAGIC);
        assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 2);
        assert_eq!(f64::from_le_bytes(bytes[header..header + 8].try_into().unwrap()), 1.0);
        let back = decode(&bytes).unwrap();
        assert_eq!(back, vec![w, b]);
        assert!(back[1].value.data()[1].is_sign_negative());
    }

    #[test]
    fn rejects_corruption() {
        let p = Parameter::new("f.layer1.weight", Tensor::identity(2).unwrap(), true);
        let bytes = encode(&[&p]);
        assert!(decode(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode(&extra).is_err());
        let mut magic = bytes;
        magic[0] = b'X';
        assert!(matches!(decode(&magic), Err(Error::Checkpoint(_))));
    }
}
