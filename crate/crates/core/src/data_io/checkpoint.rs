//! Binary checkpoint format.
//!
//! ```text
//! magic      8 bytes  "MGCNAGL1"
//! version    u32 LE
//! iteration  u64 LE
//! config     u64 LE length + UTF-8 JSON
//! count      u32 LE
//! per matrix:
//!   name     u32 LE length + UTF-8
//!   rows     u64 LE
//!   cols     u64 LE
//!   data     rows * cols f64 LE, row-major
//! ```
//!
//! Parameters are stored as raw `f64` bits, so a round trip is exact.

use std::fs;
use std::path::Path;

use crate::autodiff::Matrix;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"MGCNAGL1";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub version: u32,
    pub iteration: u64,
    /// Serialized run configuration the parameters were trained with.
    pub config_json: String,
    pub tensors: Vec<(String, Matrix)>,
}

impl Checkpoint {
    pub fn new(iteration: u64, config_json: String, tensors: Vec<(String, Matrix)>) -> Self {
        Self {
            version: VERSION,
            iteration,
            config_json,
            tensors,
        }
    }

    pub fn get(&self, name: &str) -> Option<&Matrix> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, m)| m)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&self.version.to_le_bytes());
        out.extend_from_slice(&self.iteration.to_le_bytes());
        out.extend_from_slice(&(self.config_json.len() as u64).to_le_bytes());
        out.extend_from_slice(self.config_json.as_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, m) in &self.tensors {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(m.nrows() as u64).to_le_bytes());
            out.extend_from_slice(&(m.ncols() as u64).to_le_bytes());
            for v in m.iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let mut r = Reader {
            bytes,
            pos: 0,
            path,
        };
        if r.take(8)? != MAGIC {
            return Err(Error::format(path, "not a checkpoint (bad magic)"));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::UnsupportedVersion {
                found: version,
                expected: VERSION,
            });
        }
        let iteration = r.u64()?;
        let config_len = r.len()?;
        let config_json = r.string(config_len)?;
        let count = r.u32()? as usize;
        let mut tensors = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            let name_len = r.u32()? as usize;
            let name = r.string(name_len)?;
            let rows = r.len()?;
            let cols = r.len()?;
            let n = rows
                .checked_mul(cols)
                .ok_or_else(|| Error::format(path, "matrix size overflows"))?;
            let raw = r.take(
                n.checked_mul(8)
                    .ok_or_else(|| Error::format(path, "matrix size overflows"))?,
            )?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            let m = Matrix::from_shape_vec((rows, cols), data)
                .map_err(|e| Error::format(path, e.to_string()))?;
            tensors.push((name, m));
        }
        if r.pos != bytes.len() {
            return Err(Error::format(path, "trailing bytes after last matrix"));
        }
        Ok(Self {
            version,
            iteration,
            config_json,
            tensors,
        })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| {
                Error::format(
                    self.path,
                    format!("truncated: need {n} bytes at offset {}", self.pos),
                )
            })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    fn len(&mut self) -> Result<usize> {
        let v = self.u64()?;
        usize::try_from(v).map_err(|_| Error::format(self.path, format!("length {v} too large")))
    }

    fn string(&mut self, n: usize) -> Result<String> {
        let path = self.path;
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| Error::format(path, "invalid UTF-8 in checkpoint"))
    }
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    fs::write(path, ckpt.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes, path)
}
