//! Versioned binary tensor containers for teacher and student checkpoints.
//!
//! Layout (all integers and floats little-endian):
//!   magic: 5 bytes ("TCHR1" or "STDT1")
//!   u32 meta count, then per entry: u32 key length, key utf-8, u64 value
//!   u32 tensor count, then per tensor: u32 name length, name utf-8,
//!     u32 ndim, ndim x u64 dims, numel x f64 data
//!
//! The byte stream is deterministic for a given model, so a SHA-256 over it
//! doubles as the parameter hash used by the teacher-freezing checks.

use crate::error::{Error, Result};
use crate::numerics::Tensor;
use sha2::{Digest, Sha256};
use std::io::{Read, Write};
use std::path::Path;

pub const TEACHER_MAGIC: &[u8; 5] = b"TCHR1";
pub const STUDENT_MAGIC: &[u8; 5] = b"STDT1";

#[derive(Debug, Clone)]
pub struct Container {
    pub meta: Vec<(String, u64)>,
    pub tensors: Vec<(String, Tensor)>,
}

impl Container {
    pub fn meta_value(&self, key: &str) -> Result<u64> {
        self.meta
            .iter()
            .find(|(k, _)| k == key)
            .map(|&(_, v)| v)
            .ok_or_else(|| Error::Checkpoint(format!("missing meta key {key}")))
    }

    pub fn take_tensor(&mut self, name: &str) -> Result<Tensor> {
        let pos = self
            .tensors
            .iter()
            .position(|(n, _)| n == name)
            .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))?;
        Ok(self.tensors.remove(pos).1)
    }
}

pub fn container_bytes(magic: &[u8; 5], container: &Container) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(magic);
    out.extend_from_slice(&(container.meta.len() as u32).to_le_bytes());
    for (k, v) in &container.meta {
        out.extend_from_slice(&(k.len() as u32).to_le_bytes());
        out.extend_from_slice(k.as_bytes());
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&(container.tensors.len() as u32).to_le_bytes());
    for (name, t) in &container.tensors {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn write_container(path: impl AsRef<Path>, magic: &[u8; 5], container: &Container) -> Result<()> {
    let bytes = container_bytes(magic, container);
    let mut f = std::fs::File::create(path.as_ref())?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn read_container(path: impl AsRef<Path>, magic: &[u8; 5]) -> Result<Container> {
    let mut bytes = Vec::new();
    std::fs::File::open(path.as_ref())?.read_to_end(&mut bytes)?;
    parse_container(&bytes, magic)
}

pub fn parse_container(bytes: &[u8], magic: &[u8; 5]) -> Result<Container> {
    let mut cur = Cursor { bytes, pos: 0 };
    let got = cur.take(5)?;
    if got != magic {
        return Err(Error::Checkpoint(format!(
            "bad magic: expected {:?}, got {:?}",
            String::from_utf8_lossy(magic),
            String::from_utf8_lossy(got)
        )));
    }
    let meta_count = cur.u32()? as usize;
    let mut meta = Vec::with_capacity(meta_count);
    for _ in 0..meta_count {
        let klen = cur.u32()? as usize;
        let key = String::from_utf8(cur.take(klen)?.to_vec())
            .map_err(|_| Error::Checkpoint("meta key is not utf-8".into()))?;
        let val = cur.u64()?;
        meta.push((key, val));
    }
    let tensor_count = cur.u32()? as usize;
    let mut tensors = Vec::with_capacity(tensor_count);
    for _ in 0..tensor_count {
        let nlen = cur.u32()? as usize;
        let name = String::from_utf8(cur.take(nlen)?.to_vec())
            .map_err(|_| Error::Checkpoint("tensor name is not utf-8".into()))?;
        let ndim = cur.u32()? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(cur.u64()? as usize);
        }
        let numel: usize = shape.iter().product();
        let raw = cur.take(numel * 8)?;
        let data: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        tensors.push((
            name,
            Tensor::new(shape, data).map_err(|e| Error::Checkpoint(e.to_string()))?,
        ));
    }
    if cur.pos != bytes.len() {
        return Err(Error::Checkpoint(format!(
            "{} trailing bytes after container",
            bytes.len() - cur.pos
        )));
    }
    Ok(Container { meta, tensors })
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Checkpoint("truncated container".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn container_roundtrip() {
        let c = Container {
            meta: vec![("num_classes".into(), 2), ("feature_dim".into(), 4096)],
            tensors: vec![
                ("w".into(), Tensor::matrix(2, 3, vec![1.0, -2.5, 3.0, 0.0, 1e-300, 7.25]).unwrap()),
                ("b".into(), Tensor::from_vec(vec![0.5])),
            ],
        };
        let bytes = container_bytes(TEACHER_MAGIC, &c);
        assert_eq!(&bytes[..5], TEACHER_MAGIC);
        let parsed = parse_container(&bytes, TEACHER_MAGIC).unwrap();
        assert_eq!(parsed.meta, c.meta);
        assert_eq!(parsed.tensors.len(), 2);
        assert_eq!(parsed.tensors[0].1, c.tensors[0].1);
        // wrong magic is rejected
        assert!(parse_container(&bytes, STUDENT_MAGIC).is_err());
        // truncation is rejected
        assert!(parse_container(&bytes[..bytes.len() - 1], TEACHER_MAGIC).is_err());
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let c = Container {
            meta: vec![],
            tensors: vec![("w".into(), Tensor::from_vec(vec![1.0, 2.0]))],
        };
        let h1 = sha256_hex(&container_bytes(TEACHER_MAGIC, &c));
        let h2 = sha256_hex(&container_bytes(TEACHER_MAGIC, &c));
        assert_eq!(h1, h2);
        let c2 = Container {
            meta: vec![],
            tensors: vec![("w".into(), Tensor::from_vec(vec![1.0, 2.0000000001]))],
        };
        assert_ne!(h1, sha256_hex(&container_bytes(TEACHER_MAGIC, &c2)));
    }
}
