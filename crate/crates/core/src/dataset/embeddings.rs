//! `PVPR` embedding exchange format.
//!
//! ```text
//! magic      4 bytes   "PVPR"
//! version    u32 LE    currently 1
//! count      u32 LE    number of records
//! dim        u32 LE    values per record, > 0
//! normalized u8        1 if every vector is already unit norm
//! records    count x { id_len u16 LE, id UTF-8, dim x f32 LE }
//! ```

use std::fs;
use std::path::Path;

use crate::encoder::l2_normalize;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"PVPR";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingFile {
    pub dim: usize,
    pub normalized: bool,
    pub records: Vec<(String, Vec<f32>)>,
}

impl EmbeddingFile {
    pub fn new(dim: usize, normalized: bool, records: Vec<(String, Vec<f32>)>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Format("embedding dimension must be positive".into()));
        }
        for (id, v) in &records {
            if v.len() != dim {
                return Err(Error::Format(format!(
                    "record `{id}` has {} values, expected {dim}",
                    v.len()
                )));
            }
            if id.len() > usize::from(u16::MAX) {
                return Err(Error::Format(format!(
                    "id of {} bytes is too long",
                    id.len()
                )));
            }
        }
        Ok(Self {
            dim,
            normalized,
            records,
        })
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(17 + self.records.len() * (2 + 4 * self.dim));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.records.len() as u32).to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.push(u8::from(self.normalized));
        for (id, values) in &self.records {
            out.extend_from_slice(&(id.len() as u16).to_le_bytes());
            out.extend_from_slice(id.as_bytes());
            for v in values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    /// Parse bytes verbatim; no renormalization.
    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Format("bad magic, not a PVPR embedding file".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported format version {version}"
            )));
        }
        let count = r.u32()? as usize;
        let dim = r.u32()? as usize;
        if dim == 0 {
            return Err(Error::Format("embedding dimension is 0".into()));
        }
        let normalized = match r.take(1)?[0] {
            0 => false,
            1 => true,
            other => return Err(Error::Format(format!("invalid normalized flag {other}"))),
        };
        let mut records = Vec::with_capacity(count.min(1 << 20));
        for _ in 0..count {
            let len = usize::from(u16::from_le_bytes(r.take(2)?.try_into().unwrap()));
            let id = std::str::from_utf8(r.take(len)?)
                .map_err(|_| Error::Format("record id is not valid UTF-8".into()))?
                .to_string();
            let raw = r.take(4 * dim)?;
            let values = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            records.push((id, values));
        }
        if r.pos != bytes.len() {
            return Err(Error::Format(format!(
                "{} trailing bytes after {count} records",
                bytes.len() - r.pos
            )));
        }
        Ok(Self {
            dim,
            normalized,
            records,
        })
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.records.iter().map(|(id, _)| id.as_str())
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::Format(format!(
                "truncated payload: wanted {n} bytes at offset {}, file has {}",
                self.pos,
                self.bytes.len()
            ))),
        }
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn write_embeddings(
    path: &Path,
    ids: &[String],
    vectors: &[Vec<f32>],
    normalized: bool,
) -> Result<()> {
    if ids.len() != vectors.len() {
        return Err(Error::Argument(format!(
            "{} ids for {} vectors",
            ids.len(),
            vectors.len()
        )));
    }
    let dim = vectors.first().map_or(0, Vec::len);
    let file = EmbeddingFile::new(
        dim,
        normalized,
        ids.iter().cloned().zip(vectors.iter().cloned()).collect(),
    )?;
    fs::write(path, file.encode()).map_err(|e| Error::io(path, e))
}

/// Read a file; vectors flagged raw are L2-normalized on the way in.
pub fn read_embeddings(path: &Path) -> Result<EmbeddingFile> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut file = EmbeddingFile::decode(&bytes)?;
    if !file.normalized {
        for (_, v) in &mut file.records {
            let raw: Vec<f64> = v.iter().map(|&x| f64::from(x)).collect();
            *v = l2_normalize(&raw).0.into_iter().map(|x| x as f32).collect();
        }
        file.normalized = true;
    }
    Ok(file)
}
