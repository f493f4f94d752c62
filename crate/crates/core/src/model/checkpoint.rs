//! Binary checkpoint container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic       8 bytes  "DDF2POL1"
//! config      7 x u32  patch, classes, descriptor depth, complex depth,
//!                      filters 1, filters 2, attention reduction
//! count       u32      number of tensors
//! per tensor: u32 name length, name (UTF-8), u32 rank, rank x u64 extents,
//!             extents-product x f64
//! ```

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use super::config::ModelConfig;
use super::params::ModelParams;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"DDF2POL1";

pub fn encode(params: &ModelParams) -> Vec<u8> {
    let c = &params.config;
    let mut out = Vec::with_capacity(64 + params.allocated() * 8);
    out.extend_from_slice(MAGIC);
    for v in [c.patch, c.num_classes, c.descriptor_depth, c.complex_depth, c.filters.0, c.filters.1, c.ca_reduction] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    let tensors = params.named_tensors();
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, t) in tensors {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.dims().len() as u32).to_le_bytes());
        for &d in t.dims() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let Some(end) = end else {
            return Err(Error::format(self.path, "truncated checkpoint"));
        };
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }

    fn u64(&mut self) -> Result<usize> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")) as usize)
    }
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<ModelParams> {
    let mut r = Reader { bytes, pos: 0, path };
    if r.take(8)? != MAGIC {
        return Err(Error::format(path, "bad magic, not a DDF2POL1 checkpoint"));
    }
    let mut cfg = [0usize; 7];
    for v in &mut cfg {
        *v = r.u32()?;
    }
    let config = ModelConfig {
        patch: cfg[0],
        num_classes: cfg[1],
        descriptor_depth: cfg[2],
        complex_depth: cfg[3],
        filters: (cfg[4], cfg[5]),
        ca_reduction: cfg[6],
    };
    config.validate().map_err(|e| Error::format(path, format!("invalid config block: {e}")))?;
    let mut params = ModelParams::zeros(config);
    let count = r.u32()?;
    let mut slots = params.named_tensors_mut();
    if count != slots.len() {
        return Err(Error::format(path, format!("expected {} tensors, found {count}", slots.len())));
    }
    for (expected_name, tensor) in slots.iter_mut() {
        let len = r.u32()?;
        let name = std::str::from_utf8(r.take(len)?).map_err(|_| Error::format(path, "tensor name is not UTF-8"))?;
        if name != expected_name {
            return Err(Error::format(path, format!("expected tensor {expected_name}, found {name}")));
        }
        let rank = r.u32()?;
        let dims = (0..rank).map(|_| r.u64()).collect::<Result<Vec<_>>>()?;
        if dims != tensor.dims() {
            return Err(Error::format(
                path,
                format!("tensor {name} has extents {dims:?}, expected {:?}", tensor.dims()),
            ));
        }
        let raw = r.take(tensor.numel() * 8)?;
        for (dst, chunk) in tensor.data_mut().iter_mut().zip(raw.chunks_exact(8)) {
            *dst = f64::from_le_bytes(chunk.try_into().expect("8 bytes"));
        }
    }
    drop(slots);
    if r.pos != bytes.len() {
        return Err(Error::format(path, "trailing bytes after last tensor"));
    }
    Ok(params)
}

pub fn save(params: &ModelParams, path: &Path) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&encode(params)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<ModelParams> {
    let mut bytes = Vec::new();
    fs::File::open(path).and_then(|mut f| f.read_to_end(&mut bytes)).map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let p = ModelParams::init(ModelConfig::new(9, 5).unwrap(), 4);
        let bytes = encode(&p);
        let q = decode(&bytes, Path::new("mem")).unwrap();
        assert_eq!(p, q);
        assert_eq!(encode(&q), bytes);
        assert_eq!(&bytes[..8], b"DDF2POL1");
    }

    #[test]
    fn corrupt_inputs_rejected() {
        let p = ModelParams::init(ModelConfig::new(5, 3).unwrap(), 4);
        let mut bytes = encode(&p);
        assert!(decode(&bytes[..bytes.len() - 1], Path::new("x")).is_err());
        bytes[0] = b'X';
        let err = decode(&bytes, Path::new("x")).unwrap_err();
        assert!(err.to_string().contains("magic"));
    }
}
