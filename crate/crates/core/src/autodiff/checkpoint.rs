//! Binary checkpoint container. The layout is documented in
//! `docs/checkpoint-format.md`; all integers and floats are little-endian.

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::array::Array;
use super::params::{Parameter, ParameterStore};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"CAUEMOCK";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    /// Canonical text of the experiment configuration that produced the
    /// parameters.
    pub config_text: String,
    pub store: ParameterStore,
}

impl Checkpoint {
    pub fn config_hash(&self) -> [u8; 32] {
        config_hash(&self.config_text)
    }
}

pub fn config_hash(text: &str) -> [u8; 32] {
    Sha256::digest(text.as_bytes()).into()
}

pub fn encode(store: &ParameterStore, config_text: &str) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&store.seed().to_le_bytes());
    buf.extend_from_slice(&store.step_count().to_le_bytes());
    buf.extend_from_slice(&config_hash(config_text));
    buf.extend_from_slice(&(config_text.len() as u32).to_le_bytes());
    buf.extend_from_slice(config_text.as_bytes());
    buf.extend_from_slice(&(store.len() as u32).to_le_bytes());
    for p in store.iter() {
        buf.extend_from_slice(&(p.name.len() as u32).to_le_bytes());
        buf.extend_from_slice(p.name.as_bytes());
        let shape = p.value.shape();
        buf.extend_from_slice(&(shape.len() as u32).to_le_bytes());
        for &d in shape {
            buf.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for xs in [p.value.data(), &p.m[..], &p.v[..]] {
            for &x in xs {
                buf.extend_from_slice(&(x as f32).to_le_bytes());
            }
        }
    }
    let digest: [u8; 32] = Sha256::digest(&buf).into();
    buf.extend_from_slice(&digest);
    buf
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
            .ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(4).ok_or_else(|| Error::Checkpoint("size overflow".into()))?)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect())
    }
}

pub fn decode(bytes: &[u8]) -> Result<Checkpoint> {
    if bytes.len() < MAGIC.len() + 4 + 32 {
        return Err(Error::Checkpoint("file too short".into()));
    }
    if &bytes[..8] != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let (body, digest) = bytes.split_at(bytes.len() - 32);
    let mut r = Reader { buf: body, pos: 8 };
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!(
            "version {version} unsupported (expected {VERSION})"
        )));
    }
    let actual: [u8; 32] = Sha256::digest(body).into();
    if actual[..] != digest[..] {
        return Err(Error::Checkpoint("checksum mismatch (corrupt file)".into()));
    }
    let seed = r.u64()?;
    let step = r.u64()?;
    let stored_hash = r.take(32)?.to_vec();
    let config_len = r.u32()? as usize;
    let config_text = String::from_utf8(r.take(config_len)?.to_vec())
        .map_err(|_| Error::Checkpoint("config text is not UTF-8".into()))?;
    if stored_hash[..] != config_hash(&config_text)[..] {
        return Err(Error::Checkpoint("config hash does not match config text".into()));
    }
    let mut store = ParameterStore::new(seed);
    store.step = step;
    let count = r.u32()?;
    for _ in 0..count {
        let name_len = r.u32()? as usize;
        let name = String::from_utf8(r.take(name_len)?.to_vec())
            .map_err(|_| Error::Checkpoint("parameter name is not UTF-8".into()))?;
        let rank = r.u32()? as usize;
        let shape = (0..rank)
            .map(|_| r.u64().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let numel = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::Checkpoint("shape overflow".into()))?;
        let value = Array::new(&shape, r.f32s(numel)?)
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        let m = r.f32s(numel)?;
        let v = r.f32s(numel)?;
        store.push_loaded(Parameter {
            name,
            value,
            grad: None,
            m,
            v,
        })?;
    }
    if r.pos != body.len() {
        return Err(Error::Checkpoint("trailing bytes after parameters".into()));
    }
    Ok(Checkpoint { config_text, store })
}

pub fn save_checkpoint(path: &Path, store: &ParameterStore, config_text: &str) -> Result<()> {
    fs::write(path, encode(store, config_text)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_store() -> ParameterStore {
        let mut s = ParameterStore::new(7);
        s.glorot("layer.w", 3, 2).unwrap();
        s.zeros("layer.b", &[2]).unwrap();
        s.add("prior", Array::scalar(0.25)).unwrap();
        s.quantized()
    }

    #[test]
    fn round_trip_is_exact_at_f32() {
        let store = sample_store();
        let ck = decode(&encode(&store, "seed = 7\n")).unwrap();
        assert_eq!(ck.store, store);
        assert_eq!(ck.config_text, "seed = 7\n");
        assert_eq!(ck.store.seed(), 7);
    }

    #[test]
    fn corrupt_byte_is_rejected() {
        let mut bytes = encode(&sample_store(), "x = 1\n");
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0x40;
        assert!(matches!(decode(&bytes), Err(Error::Checkpoint(_))));
    }

    #[test]
    fn truncation_and_version_are_rejected() {
        let bytes = encode(&sample_store(), "");
        assert!(decode(&bytes[..bytes.len() - 5]).is_err());
        let mut wrong = bytes.clone();
        wrong[8] = 9;
        let err = decode(&wrong).unwrap_err().to_string();
        assert!(err.contains("version"), "{err}");
    }
}
