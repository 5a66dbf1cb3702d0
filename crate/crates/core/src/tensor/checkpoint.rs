//! Parameter checkpoints.
//!
//! Binary layout (all integers little-endian `u32`):
//!
//! ```text
//! magic "SPCKPT01"
//! count
//! repeated count times:
//!     name_len, name (UTF-8), dtype (u8: 0 = f64, 1 = f32), rows, cols,
//!     rows*cols floats (little-endian, in dtype)
//! ```
//!
//! Next to `model.ckpt` a text manifest `model.ckpt.manifest` lists one
//! parameter per line: `name<TAB>rows x cols<TAB>dtype<TAB>sha256(payload)`.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ParamStore, Result, Tensor, TensorError};

const MAGIC: &[u8; 8] = b"SPCKPT01";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DType {
    F64,
    F32,
}

impl DType {
    fn tag(self) -> u8 {
        match self {
            DType::F64 => 0,
            DType::F32 => 1,
        }
    }

    fn name(self) -> &'static str {
        match self {
            DType::F64 => "f64",
            DType::F32 => "f32",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointEntry {
    pub name: String,
    pub value: Tensor,
    pub dtype: DType,
}

pub fn manifest_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".manifest");
    PathBuf::from(s)
}

fn payload(t: &Tensor, dtype: DType) -> Vec<u8> {
    match dtype {
        DType::F64 => t.data().iter().flat_map(|v| v.to_le_bytes()).collect(),
        DType::F32 => t.data().iter().flat_map(|v| (*v as f32).to_le_bytes()).collect(),
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes every parameter of `store` plus the manifest.
pub fn save_checkpoint(path: &Path, store: &ParamStore, dtype: DType) -> Result<()> {
    let mut out = Vec::new();
    let mut manifest = String::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(store.len() as u32).to_le_bytes());
    for (_, p) in store.iter() {
        let name = p.name.as_bytes();
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name);
        out.push(dtype.tag());
        out.extend_from_slice(&(p.value.rows() as u32).to_le_bytes());
        out.extend_from_slice(&(p.value.cols() as u32).to_le_bytes());
        let bytes = payload(&p.value, dtype);
        manifest.push_str(&format!(
            "{}\t{} x {}\t{}\t{}\n",
            p.name,
            p.value.rows(),
            p.value.cols(),
            dtype.name(),
            hex(&Sha256::digest(&bytes))
        ));
        out.extend_from_slice(&bytes);
    }
    fs::File::create(path)?.write_all(&out)?;
    fs::write(manifest_path(path), manifest)?;
    Ok(())
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(TensorError::Checkpoint(format!("truncated at byte {}", self.pos)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }
}

/// Reads a checkpoint, verifying payload checksums against the manifest
/// when one is present.
pub fn load_checkpoint(path: &Path) -> Result<Vec<CheckpointEntry>> {
    let mut buf = Vec::new();
    fs::File::open(path)?.read_to_end(&mut buf)?;
    let mut cur = Cursor { buf: &buf, pos: 0 };
    if cur.take(8)? != MAGIC {
        return Err(TensorError::Checkpoint("bad magic".into()));
    }
    let count = cur.u32()?;
    let mut entries = Vec::with_capacity(count);
    let mut digests = Vec::with_capacity(count);
    for _ in 0..count {
        let len = cur.u32()?;
        let name = String::from_utf8(cur.take(len)?.to_vec()).map_err(|_| TensorError::Checkpoint("parameter name is not UTF-8".into()))?;
        let dtype = match cur.take(1)?[0] {
            0 => DType::F64,
            1 => DType::F32,
            t => return Err(TensorError::Checkpoint(format!("unknown dtype tag {t}"))),
        };
        let (rows, cols) = (cur.u32()?, cur.u32()?);
        let width = if dtype == DType::F64 { 8 } else { 4 };
        let bytes = cur.take(rows * cols * width)?;
        digests.push(hex(&Sha256::digest(bytes)));
        let data = match dtype {
            DType::F64 => bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect(),
            DType::F32 => bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64).collect(),
        };
        entries.push(CheckpointEntry { name, value: Tensor::new(rows, cols, data)?, dtype });
    }
    if let Ok(manifest) = fs::read_to_string(manifest_path(path)) {
        let lines: Vec<&str> = manifest.lines().collect();
        if lines.len() != entries.len() {
            return Err(TensorError::Checkpoint("manifest does not match checkpoint".into()));
        }
        for ((line, e), digest) in lines.iter().zip(&entries).zip(&digests) {
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 4 || fields[0] != e.name || fields[3] != digest {
                return Err(TensorError::Checkpoint(format!("checksum mismatch for `{}`", e.name)));
            }
        }
    }
    Ok(entries)
}

impl ParamStore {
    /// Overwrites parameters by name. Every stored parameter must be present
    /// with the same shape.
    pub fn load_entries(&mut self, entries: &[CheckpointEntry]) -> Result<()> {
        for e in entries {
            let id = self.id(&e.name).ok_or_else(|| TensorError::UnknownParam(e.name.clone()))?;
            let p = self.get_mut(id);
            if p.value.shape() != e.value.shape() {
                return Err(TensorError::Shape {
                    op: "load_checkpoint",
                    detail: format!("`{}` is {:?} in the model, {:?} on disk", e.name, p.value.shape(), e.value.shape()),
                });
            }
            p.value = e.value.clone();
        }
        if entries.len() != self.len() {
            return Err(TensorError::Checkpoint(format!("checkpoint has {} parameters, model has {}", entries.len(), self.len())));
        }
        Ok(())
    }
}
