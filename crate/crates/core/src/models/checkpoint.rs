//! Named-tensor archive.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic    b"RTCKPT"
//! version  u16
//! meta_len u64, then meta_len bytes of JSON metadata
//! count    u32
//! count x { name_len u32, name bytes, rank u32, rank x u64 dims, f64 payload }
//! ```
//!
//! Tensors are stored as raw `f64` bits, so a reload is bit-exact.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

const MAGIC: &[u8; 6] = b"RTCKPT";
pub const ARCHIVE_VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct TensorArchive {
    pub metadata: serde_json::Value,
    pub tensors: BTreeMap<String, Tensor>,
}

impl TensorArchive {
    pub fn to_bytes(&self) -> Vec<u8> {
        let meta = serde_json::to_vec(&self.metadata).expect("json metadata serializes");
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&ARCHIVE_VERSION.to_le_bytes());
        out.extend_from_slice(&(meta.len() as u64).to_le_bytes());
        out.extend_from_slice(&meta);
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, t) in &self.tensors {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
            for d in t.shape() {
                out.extend_from_slice(&(*d as u64).to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = bytes;
        let mut magic = [0u8; 6];
        read_exact(&mut r, &mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = u16::from_le_bytes(take(&mut r)?);
        if version != ARCHIVE_VERSION {
            return Err(Error::Checkpoint(format!("unsupported archive version {version}")));
        }
        let meta_len = u64::from_le_bytes(take(&mut r)?) as usize;
        if meta_len > r.len() {
            return Err(Error::Checkpoint("truncated metadata".into()));
        }
        let metadata = serde_json::from_slice(&r[..meta_len])
            .map_err(|e| Error::Checkpoint(format!("metadata: {e}")))?;
        r = &r[meta_len..];
        let count = u32::from_le_bytes(take(&mut r)?) as usize;
        let mut tensors = BTreeMap::new();
        for _ in 0..count {
            let name_len = u32::from_le_bytes(take(&mut r)?) as usize;
            if name_len > r.len() {
                return Err(Error::Checkpoint("truncated tensor name".into()));
            }
            let name = String::from_utf8(r[..name_len].to_vec())
                .map_err(|_| Error::Checkpoint("tensor name is not utf-8".into()))?;
            r = &r[name_len..];
            let rank = u32::from_le_bytes(take(&mut r)?) as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(u64::from_le_bytes(take(&mut r)?) as usize);
            }
            let n: usize = shape.iter().product();
            if n * 8 > r.len() {
                return Err(Error::Checkpoint(format!("truncated payload for {name}")));
            }
            let data = r[..n * 8]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            r = &r[n * 8..];
            tensors.insert(name, Tensor::from_vec(&shape, data)?);
        }
        if !r.is_empty() {
            return Err(Error::Checkpoint("trailing bytes after last tensor".into()));
        }
        Ok(TensorArchive { metadata, tensors })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

fn read_exact(r: &mut &[u8], buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|_| Error::Checkpoint("truncated archive".into()))
}

fn take<const N: usize>(r: &mut &[u8]) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    read_exact(r, &mut buf)?;
    Ok(buf)
}
