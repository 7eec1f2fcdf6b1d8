//! Named-tensor archive.
//!
//! Little-endian layout:
//!
//! ```text
//! magic "SNTXTNSR" | u32 version
//! u32 len | config hash (utf-8)
//! u32 len | metadata json (utf-8)
//! u32 tensor count
//! per tensor: u32 len | name | u32 ndim | u64 dims... | f64 values (row-major)
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use ndarray::ArrayViewMutD;

use super::params::{ModelConfig, ModelParams, ModelShape};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"SNTXTNSR";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TensorArchive {
    pub config_hash: String,
    pub metadata: BTreeMap<String, String>,
    pub tensors: Vec<NamedTensor>,
}

impl TensorArchive {
    pub fn get(&self, name: &str) -> Option<&NamedTensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        put_str(&mut out, &self.config_hash);
        put_str(
            &mut out,
            &serde_json::to_string(&self.metadata).expect("string map serializes"),
        );
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for t in &self.tensors {
            put_str(&mut out, &t.name);
            out.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
            for &d in &t.shape {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in &t.values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Checkpoint("not a tensor archive".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let config_hash = r.string()?;
        let metadata = serde_json::from_str(&r.string()?)?;
        let count = r.u32()? as usize;
        let mut tensors = Vec::with_capacity(count);
        for _ in 0..count {
            let name = r.string()?;
            let ndim = r.u32()? as usize;
            let shape = (0..ndim)
                .map(|_| r.u64().map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let len: usize = shape.iter().product();
            let values = (0..len).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
            tensors.push(NamedTensor {
                name,
                shape,
                values,
            });
        }
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint("trailing bytes".into()));
        }
        Ok(TensorArchive {
            config_hash,
            metadata,
            tensors,
        })
    }
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
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
            .ok_or_else(|| Error::Checkpoint("truncated archive".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| Error::Checkpoint("invalid utf-8".into()))
    }
}

pub fn save_archive(path: &Path, archive: &TensorArchive) -> Result<()> {
    fs::write(path, archive.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn load_archive(path: &Path) -> Result<TensorArchive> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    TensorArchive::from_bytes(&bytes)
}

fn fill(name: &str, mut dst: ArrayViewMutD<'_, f64>, src: &NamedTensor) -> Result<()> {
    if dst.shape() != src.shape.as_slice() {
        return Err(Error::Checkpoint(format!(
            "tensor {name}: archive shape {:?}, model expects {:?}",
            src.shape,
            dst.shape()
        )));
    }
    for (d, &v) in dst.iter_mut().zip(&src.values) {
        *d = v;
    }
    Ok(())
}

impl ModelParams {
    pub fn to_archive(&self, config_hash: &str) -> TensorArchive {
        TensorArchive {
            config_hash: config_hash.to_string(),
            metadata: BTreeMap::new(),
            tensors: self
                .tensors()
                .into_iter()
                .map(|(name, t)| NamedTensor {
                    name,
                    shape: t.shape().to_vec(),
                    values: t.iter().copied().collect(),
                })
                .collect(),
        }
    }

    /// Rebuilds parameters, verifying every tensor name and shape.
    pub fn from_archive(
        archive: &TensorArchive,
        config: &ModelConfig,
        shape: &ModelShape,
    ) -> Result<Self> {
        let mut params = ModelParams::init(config, shape, 0)?;
        let mut expected = 0;
        for (name, view) in params.tensors_mut() {
            let src = archive
                .get(&name)
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))?;
            fill(&name, view, src)?;
            expected += 1;
        }
        if expected != archive.tensors.len() {
            return Err(Error::Checkpoint(format!(
                "archive has {} tensors, model has {expected}",
                archive.tensors.len()
            )));
        }
        Ok(params)
    }

    /// Overwrites tensors that share names with `archive` entries.
    pub fn load_matching(&mut self, archive: &TensorArchive) -> Result<()> {
        for (name, view) in self.tensors_mut() {
            if let Some(src) = archive.get(&name) {
                fill(&name, view, src)?;
            }
        }
        Ok(())
    }
}
