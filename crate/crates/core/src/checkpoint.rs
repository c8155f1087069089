//! `NNPMCKPT` block container shared by weight and memory checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic    8 bytes  "NNPMCKPT"
//! version  u32      1
//! hash     32 bytes SHA-256 of the owning configuration
//! blocks   u32      count, then per block:
//!   name_len u32, name (UTF-8), rank u32, dims u64 × rank, values f64 × Πdims
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"NNPMCKPT";
const VERSION: u32 = 1;

pub type ConfigHash = [u8; 32];

#[derive(Clone, Debug, PartialEq)]
pub struct Block {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

pub fn encode(hash: &ConfigHash, blocks: &[Block]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(hash);
    out.extend_from_slice(&(blocks.len() as u32).to_le_bytes());
    for b in blocks {
        out.extend_from_slice(&(b.name.len() as u32).to_le_bytes());
        out.extend_from_slice(b.name.as_bytes());
        out.extend_from_slice(&(b.shape.len() as u32).to_le_bytes());
        for &d in &b.shape {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in &b.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| corrupt("truncated"))?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

fn corrupt(detail: impl Into<String>) -> Error {
    Error::Format {
        kind: "checkpoint",
        detail: detail.into(),
    }
}

pub fn decode(bytes: &[u8]) -> Result<(ConfigHash, Vec<Block>)> {
    let mut c = Cursor { bytes, at: 0 };
    if c.take(8)? != MAGIC {
        return Err(corrupt("missing NNPMCKPT magic"));
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(corrupt(format!("unsupported version {version}")));
    }
    let hash: ConfigHash = c.take(32)?.try_into().unwrap();
    let count = c.u32()? as usize;
    let mut blocks = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let len = c.u32()? as usize;
        let name = String::from_utf8(c.take(len)?.to_vec()).map_err(|_| corrupt("block name is not UTF-8"))?;
        let rank = c.u32()? as usize;
        let shape = (0..rank).map(|_| c.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let n = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| corrupt(format!("block `{name}` is too large")))?;
        let raw = c.take(n.checked_mul(8).ok_or_else(|| corrupt("block too large"))?)?;
        let data = raw.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect();
        blocks.push(Block { name, shape, data });
    }
    if c.at != bytes.len() {
        return Err(corrupt(format!("{} trailing bytes", bytes.len() - c.at)));
    }
    Ok((hash, blocks))
}

pub fn write(path: &Path, hash: &ConfigHash, blocks: &[Block]) -> Result<()> {
    fs::write(path, encode(hash, blocks)).map_err(|e| Error::io(path, e))
}

pub fn read(path: &Path) -> Result<(ConfigHash, Vec<Block>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|e| match e {
        Error::Format { kind, detail } => Error::Format {
            kind,
            detail: format!("{}: {detail}", path.display()),
        },
        other => other,
    })
}
