//! Named-tensor checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic   b"FSCK"
//! version u32 (= 1)
//! count   u32
//! count × { name_len u32, name utf-8, rank u32, dims rank × u32, data f64 × Π dims }
//! footer  32-byte SHA-256 of every preceding byte
//! ```
//!
//! Only parameter values are stored. The footer doubles as the content hash
//! of the parameters, so comparing hashes is how callers check that a model
//! was left untouched.

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::numerics::{ParamStore, Tensor};

const MAGIC: &[u8; 4] = b"FSCK";
const VERSION: u32 = 1;

pub fn encode(store: &ParamStore) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(store.len() as u32).to_le_bytes());
    for id in store.ids() {
        let name = store.name(id).as_bytes();
        let value = store.value(id);
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name);
        buf.extend_from_slice(&(value.shape().len() as u32).to_le_bytes());
        for &d in value.shape() {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &x in value.data() {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    let digest = Sha256::digest(&buf);
    buf.extend_from_slice(&digest);
    buf
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
            .ok_or_else(|| Error::format("checkpoint truncated"))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Decodes a checkpoint into a fresh store (zero gradients, fresh optimizer
/// state). The footer hash is verified before anything is parsed.
pub fn decode(bytes: &[u8]) -> Result<ParamStore> {
    if bytes.len() < 4 + 4 + 4 + 32 {
        return Err(Error::format("checkpoint too short"));
    }
    let (body, footer) = bytes.split_at(bytes.len() - 32);
    if Sha256::digest(body).as_slice() != footer {
        return Err(Error::Integrity("checkpoint hash footer mismatch".into()));
    }
    let mut r = Reader { bytes: body, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::format("bad checkpoint magic"));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::format(format!("unsupported checkpoint version {version}")));
    }
    let count = r.u32()?;
    let mut store = ParamStore::new();
    for _ in 0..count {
        let name_len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| Error::format("parameter name is not utf-8"))?
            .to_string();
        let rank = r.u32()? as usize;
        let shape = (0..rank)
            .map(|_| r.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        store.add(name, Tensor::new(shape, data)?)?;
    }
    if r.pos != body.len() {
        return Err(Error::format("trailing bytes in checkpoint"));
    }
    Ok(store)
}

/// Hex SHA-256 of the parameter values (the checkpoint footer).
pub fn content_hash(store: &ParamStore) -> String {
    let bytes = encode(store);
    hex(&bytes[bytes.len() - 32..])
}

pub fn save(store: &ParamStore, path: &Path) -> Result<()> {
    fs::write(path, encode(store))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<ParamStore> {
    decode(&fs::read(path)?)
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
