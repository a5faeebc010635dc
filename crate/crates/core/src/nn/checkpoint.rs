//! Binary checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! | bytes | content |
//! |-------|---------|
//! | 8     | magic `MSYNCKPT` |
//! | 4     | format version (`u32`) |
//! | 8     | header length `L` (`u64`) |
//! | L     | UTF-8 JSON header `{"meta": ..., "tensors": [{name, rows, cols, offset}]}` |
//! | rest  | tensor data, `f64` little-endian, row-major, at `offset` scalars from the blob start |

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::params::ParamStore;
use super::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"MSYNCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    rows: usize,
    cols: usize,
    offset: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header<M> {
    meta: M,
    tensors: Vec<TensorEntry>,
}

/// Decoded checkpoint: typed metadata plus named tensors in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<M> {
    pub meta: M,
    pub tensors: Vec<(String, Tensor)>,
}

impl<M> Checkpoint<M> {
    pub fn tensor(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    /// Collects tensors whose names start with `prefix` (prefix stripped)
    /// into a parameter store, preserving order.
    pub fn params_with_prefix(&self, prefix: &str) -> ParamStore {
        let mut s = ParamStore::new();
        for (n, t) in &self.tensors {
            if let Some(rest) = n.strip_prefix(prefix) {
                s.add(rest, t.clone());
            }
        }
        s
    }
}

impl<M: Serialize> Checkpoint<M> {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut offset = 0;
        let entries: Vec<TensorEntry> = self
            .tensors
            .iter()
            .map(|(name, t)| {
                let e = TensorEntry {
                    name: name.clone(),
                    rows: t.rows(),
                    cols: t.cols(),
                    offset,
                };
                offset += t.len();
                e
            })
            .collect();
        let header = serde_json::to_vec(&Header {
            meta: &self.meta,
            tensors: entries,
        })
        .map_err(|e| Error::Config(format!("checkpoint header: {e}")))?;
        let mut out = Vec::with_capacity(20 + header.len() + offset * 8);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for (_, t) in &self.tensors {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let bytes = self.to_bytes()?;
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }
}

impl<M: DeserializeOwned> Checkpoint<M> {
    pub fn from_bytes(bytes: &[u8], origin: &str) -> Result<Self> {
        let bad = |m: String| Error::parse(origin, m);
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(bad("not a checkpoint file (bad magic)".into()));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(bad(format!("unsupported checkpoint version {version}")));
        }
        let hlen = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
        let body = bytes.get(20..20 + hlen).ok_or_else(|| bad("truncated header".into()))?;
        let header: Header<M> = serde_json::from_slice(body).map_err(|e| bad(format!("header: {e}")))?;
        let blob = &bytes[20 + hlen..];
        if blob.len() % 8 != 0 {
            return Err(bad("tensor blob is not a whole number of f64 values".into()));
        }
        let n_scalars = blob.len() / 8;
        let mut tensors = Vec::with_capacity(header.tensors.len());
        for e in header.tensors {
            let len = e.rows * e.cols;
            if e.offset + len > n_scalars {
                return Err(bad(format!("tensor {} extends past the end of the file", e.name)));
            }
            let data = blob[e.offset * 8..(e.offset + len) * 8]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            tensors.push((e.name, Tensor::from_vec(e.rows, e.cols, data)?));
        }
        Ok(Self {
            meta: header.meta,
            tensors,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, &path.display().to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let ck = Checkpoint {
            meta: serde_json::json!({"step": 3, "note": "x"}),
            tensors: vec![
                ("a".to_string(), Tensor::from_vec(1, 3, vec![0.1, -2.5e-300, f64::MAX]).unwrap()),
                ("b".to_string(), Tensor::zeros(2, 0)),
                ("c".to_string(), Tensor::scalar(std::f64::consts::PI)),
            ],
        };
        let bytes = ck.to_bytes().unwrap();
        let back: Checkpoint<serde_json::Value> = Checkpoint::from_bytes(&bytes, "mem").unwrap();
        assert_eq!(back, ck);
    }

    #[test]
    fn rejects_garbage() {
        assert!(Checkpoint::<serde_json::Value>::from_bytes(b"hello world, not a checkpoint", "mem").is_err());
        let ck = Checkpoint {
            meta: 1u32,
            tensors: vec![("a".to_string(), Tensor::zeros(4, 4))],
        };
        let mut bytes = ck.to_bytes().unwrap();
        bytes.truncate(bytes.len() - 8);
        assert!(Checkpoint::<u32>::from_bytes(&bytes, "mem").is_err());
    }

    #[test]
    fn prefix_extraction() {
        let ck = Checkpoint {
            meta: (),
            tensors: vec![
                ("param.w".to_string(), Tensor::scalar(1.0)),
                ("adam.m.w".to_string(), Tensor::scalar(2.0)),
            ],
        };
        let p = ck.params_with_prefix("param.");
        assert_eq!(p.len(), 1);
        assert_eq!(p.name(crate::nn::ParamId(0)), "w");
    }
}
