//! Versioned model container: a format-version tag, the vocabulary, all
//! hyperparameters, and named parameter tensors with shapes. Loading a
//! container with a mismatched version fails loudly.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MAGIC: &[u8; 4] = b"ANMC";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ContainerError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("not a model container (bad magic)")]
    BadMagic,
    #[error("container format version {found} is incompatible with supported version {expected}")]
    Version { found: u32, expected: u32 },
    #[error("malformed container header: {0}")]
    Header(String),
    #[error("tensor {name}: expected {expected} values, found {found}")]
    TensorSize { name: String, expected: usize, found: usize },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TensorMeta {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    kind: String,
    vocab: Vec<char>,
    hyper: serde_json::Map<String, serde_json::Value>,
    tensors: Vec<TensorMeta>,
}

/// A named tensor: shape plus row-major data.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// In-memory form of the container file.
#[derive(Debug, Clone)]
pub struct Container {
    pub kind: String,
    pub vocab: Vec<char>,
    pub hyper: serde_json::Map<String, serde_json::Value>,
    pub tensors: Vec<NamedTensor>,
}

impl Container {
    pub fn tensor(&self, name: &str) -> Option<&NamedTensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn hyper_f64(&self, key: &str) -> Option<f64> {
        self.hyper.get(key).and_then(serde_json::Value::as_f64)
    }

    pub fn hyper_u64(&self, key: &str) -> Option<u64> {
        self.hyper.get(key).and_then(serde_json::Value::as_u64)
    }

    pub fn save(&self, path: &Path) -> Result<(), ContainerError> {
        let io_err =
            |source| ContainerError::Io { path: path.display().to_string(), source };
        for t in &self.tensors {
            let expected: usize = t.shape.iter().product();
            if t.data.len() != expected {
                return Err(ContainerError::TensorSize {
                    name: t.name.clone(),
                    expected,
                    found: t.data.len(),
                });
            }
        }
        let header = Header {
            kind: self.kind.clone(),
            vocab: self.vocab.clone(),
            hyper: self.hyper.clone(),
            tensors: self
                .tensors
                .iter()
                .map(|t| TensorMeta { name: t.name.clone(), shape: t.shape.clone() })
                .collect(),
        };
        let header_json = serde_json::to_vec(&header)
            .map_err(|e| ContainerError::Header(e.to_string()))?;
        let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
        w.write_all(MAGIC).map_err(io_err)?;
        w.write_u32::<LittleEndian>(FORMAT_VERSION).map_err(io_err)?;
        w.write_u32::<LittleEndian>(header_json.len() as u32).map_err(io_err)?;
        w.write_all(&header_json).map_err(io_err)?;
        for t in &self.tensors {
            for &v in &t.data {
                w.write_f64::<LittleEndian>(v).map_err(io_err)?;
            }
        }
        w.flush().map_err(io_err)
    }

    pub fn load(path: &Path) -> Result<Container, ContainerError> {
        let io_err =
            |source| ContainerError::Io { path: path.display().to_string(), source };
        let mut r = BufReader::new(File::open(path).map_err(io_err)?);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(io_err)?;
        if &magic != MAGIC {
            return Err(ContainerError::BadMagic);
        }
        let version = r.read_u32::<LittleEndian>().map_err(io_err)?;
        if version != FORMAT_VERSION {
            return Err(ContainerError::Version { found: version, expected: FORMAT_VERSION });
        }
        let header_len = r.read_u32::<LittleEndian>().map_err(io_err)? as usize;
        let mut header_json = vec![0u8; header_len];
        r.read_exact(&mut header_json).map_err(io_err)?;
        let header: Header = serde_json::from_slice(&header_json)
            .map_err(|e| ContainerError::Header(e.to_string()))?;
        let mut tensors = Vec::with_capacity(header.tensors.len());
        for meta in header.tensors {
            let n: usize = meta.shape.iter().product();
            let mut data = vec![0.0f64; n];
            r.read_f64_into::<LittleEndian>(&mut data).map_err(io_err)?;
            tensors.push(NamedTensor { name: meta.name, shape: meta.shape, data });
        }
        Ok(Container { kind: header.kind, vocab: header.vocab, hyper: header.hyper, tensors })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Container {
        let mut hyper = serde_json::Map::new();
        hyper.insert("lr".into(), serde_json::json!(1e-3));
        hyper.insert("epochs".into(), serde_json::json!(8));
        Container {
            kind: "test-model".into(),
            vocab: vec!['a', 'b'],
            hyper,
            tensors: vec![NamedTensor {
                name: "w".into(),
                shape: vec![2, 3],
                data: vec![1.0, -2.0, 0.5, 0.0, 3.25, -0.125],
            }],
        }
    }

    #[test]
    fn roundtrip_is_identity() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.anmc");
        let c = sample();
        c.save(&path).unwrap();
        let loaded = Container::load(&path).unwrap();
        assert_eq!(loaded.kind, c.kind);
        assert_eq!(loaded.vocab, c.vocab);
        assert_eq!(loaded.hyper, c.hyper);
        assert_eq!(loaded.tensors, c.tensors);
    }

    #[test]
    fn version_bump_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.anmc");
        sample().save(&path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[4] = 99; // overwrite version field
        std::fs::write(&path, bytes).unwrap();
        assert!(matches!(
            Container::load(&path),
            Err(ContainerError::Version { found: 99, expected: FORMAT_VERSION })
        ));
    }

    #[test]
    fn truncated_file_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.anmc");
        sample().save(&path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 9]).unwrap();
        assert!(matches!(Container::load(&path), Err(ContainerError::Io { .. })));
    }

    #[test]
    fn bad_magic_is_distinct() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.anmc");
        std::fs::write(&path, b"NOPE____________").unwrap();
        assert!(matches!(Container::load(&path), Err(ContainerError::BadMagic)));
    }
}
