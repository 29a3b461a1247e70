//! Binary checkpoint container.
//!
//! All integers and floats are little-endian:
//!
//! ```text
//! magic     8 bytes   "XSEGCKPT"
//! version   u32       currently 1
//! meta_len  u64
//! meta      meta_len bytes of UTF-8 JSON (config echo and metadata)
//! count     u32       number of tensors
//! tensor*   name_len u32, name UTF-8, ndim u32, dims u64 x ndim,
//!           values f64 x prod(dims)
//! checksum  32 bytes  SHA-256 of every preceding byte
//! ```
//!
//! Values are stored as raw IEEE-754 bits, so a save/load round trip is exact.

use std::path::Path;

use ndarray::{ArrayD, IxDyn};
use sha2::{Digest, Sha256};

use super::params::Parameters;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"XSEGCKPT";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub meta: serde_json::Value,
    pub tensors: Vec<(String, ArrayD<f64>)>,
}

impl Checkpoint {
    pub fn new(meta: serde_json::Value) -> Self {
        Checkpoint {
            meta,
            tensors: Vec::new(),
        }
    }

    /// Append every tensor of `params` under `prefix`.
    pub fn add_params<P: Parameters>(&mut self, prefix: &str, params: &P) {
        let mut views = Vec::new();
        params.visit(prefix, &mut views);
        for (name, view) in views {
            self.tensors.push((name, view.to_owned()));
        }
    }

    pub fn get(&self, name: &str) -> Option<&ArrayD<f64>> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    /// Overwrite every tensor of `params` (under `prefix`) from this
    /// checkpoint, checking names and shapes.
    pub fn restore_params<P: Parameters>(&self, prefix: &str, params: &mut P) -> Result<()> {
        let mut views = Vec::new();
        params.visit_mut(prefix, &mut views);
        for (name, mut view) in views {
            let stored = self
                .get(&name)
                .ok_or_else(|| Error::Format(format!("missing tensor {name}")))?;
            if stored.shape() != view.shape() {
                return Err(Error::Format(format!(
                    "tensor {name} has shape {:?}, expected {:?}",
                    stored.shape(),
                    view.shape()
                )));
            }
            view.assign(stored);
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        let meta = serde_json::to_vec(&self.meta).expect("JSON value serializes");
        out.extend_from_slice(&(meta.len() as u64).to_le_bytes());
        out.extend_from_slice(&meta);
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, t) in &self.tensors {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.ndim() as u32).to_le_bytes());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in t.iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() + 4 + 32 {
            return Err(Error::Format("file too short to be a checkpoint".into()));
        }
        if &bytes[..8] != MAGIC {
            return Err(Error::Format("bad magic; not an xseg checkpoint".into()));
        }
        let (body, digest) = bytes.split_at(bytes.len() - 32);
        if Sha256::digest(body).as_slice() != digest {
            return Err(Error::Format("checksum mismatch; file is corrupted".into()));
        }
        let mut r = Reader { buf: body, pos: 8 };
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Format(format!(
                "unsupported checkpoint version {version}"
            )));
        }
        let meta_len = r.u64()? as usize;
        let meta = serde_json::from_slice(r.take(meta_len)?)
            .map_err(|e| Error::Format(format!("invalid metadata: {e}")))?;
        let count = r.u32()? as usize;
        let mut tensors = Vec::with_capacity(count);
        for _ in 0..count {
            let name_len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| Error::Format("tensor name is not UTF-8".into()))?
                .to_string();
            let ndim = r.u32()? as usize;
            let dims = (0..ndim)
                .map(|_| r.u64().map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let n: usize = dims.iter().product();
            let raw = r.take(n.checked_mul(8).ok_or_else(|| Error::Format("tensor too large".into()))?)?;
            let values = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            let t = ArrayD::from_shape_vec(IxDyn(&dims), values)
                .map_err(|e| Error::Format(format!("tensor {name}: {e}")))?;
            tensors.push((name, t));
        }
        if r.pos != body.len() {
            return Err(Error::Format("trailing bytes after tensors".into()));
        }
        Ok(Checkpoint { meta, tensors })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Format("unexpected end of checkpoint".into()))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}
