//! Checkpoint archive.
//!
//! Layout: magic `MCKP`, u32 version, u32 record count, then per record a
//! u16 name length, UTF-8 name, and an embedded MCTN tensor. A trailing
//! metadata block holds the config hash and global step (both u64 LE).

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::mctn;
use crate::tensor::{Dtype, Tensor};

pub const MAGIC: &[u8; 4] = b"MCKP";
pub const VERSION: u32 = 1;

/// Ordered named-tensor archive. Names must be unique; insertion order is
/// preserved so round-trips are byte-identical.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ModelCheckpoint {
    records: Vec<(String, Tensor)>,
    pub config_hash: u64,
    pub step: u64,
}

impl ModelCheckpoint {
    pub fn new(config_hash: u64, step: u64) -> Self {
        ModelCheckpoint {
            records: Vec::new(),
            config_hash,
            step,
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) -> Result<()> {
        let name = name.into();
        if self.records.iter().any(|(n, _)| *n == name) {
            return Err(Error::corrupt("checkpoint", format!("duplicate name `{name}`")));
        }
        self.records.push((name, t));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.records.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn require(&self, name: &str) -> Result<&Tensor> {
        self.get(name)
            .ok_or_else(|| Error::corrupt("checkpoint", format!("missing tensor `{name}`")))
    }

    pub fn records(&self) -> &[(String, Tensor)] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn write_to<W: Write>(&self, w: &mut W, dtype: Dtype) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.records.len() as u32).to_le_bytes())?;
        for (name, t) in &self.records {
            w.write_all(&(name.len() as u16).to_le_bytes())?;
            w.write_all(name.as_bytes())?;
            mctn::write_tensor(w, t, dtype)?;
        }
        w.write_all(&self.config_hash.to_le_bytes())?;
        w.write_all(&self.step.to_le_bytes())?;
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R, path: &str) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)
            .map_err(|_| Error::corrupt(path, "truncated header"))?;
        if &magic != MAGIC {
            return Err(Error::corrupt(path, "bad magic, expected MCKP"));
        }
        let version = read_u32(r, path)?;
        if version != VERSION {
            return Err(Error::corrupt(path, format!("unsupported version {version}")));
        }
        let count = read_u32(r, path)? as usize;
        let mut ckpt = ModelCheckpoint::new(0, 0);
        for _ in 0..count {
            let mut lenb = [0u8; 2];
            r.read_exact(&mut lenb)
                .map_err(|_| Error::corrupt(path, "truncated record"))?;
            let len = u16::from_le_bytes(lenb) as usize;
            let mut nameb = vec![0u8; len];
            r.read_exact(&mut nameb)
                .map_err(|_| Error::corrupt(path, "truncated name"))?;
            let name = String::from_utf8(nameb)
                .map_err(|_| Error::corrupt(path, "record name is not UTF-8"))?;
            let t = mctn::read_tensor(r, path)?;
            ckpt.insert(name, t)
                .map_err(|_| Error::corrupt(path, "duplicate record name"))?;
        }
        let mut meta = [0u8; 8];
        r.read_exact(&mut meta)
            .map_err(|_| Error::corrupt(path, "missing metadata block"))?;
        ckpt.config_hash = u64::from_le_bytes(meta);
        r.read_exact(&mut meta)
            .map_err(|_| Error::corrupt(path, "missing metadata block"))?;
        ckpt.step = u64::from_le_bytes(meta);
        Ok(ckpt)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        self.write_to(&mut f, Dtype::F64)
            .map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut f = std::fs::File::open(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::read_from(&mut f, &path.display().to_string())
    }
}

fn read_u32<R: Read>(r: &mut R, path: &str) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)
        .map_err(|_| Error::corrupt(path, "truncated header"))?;
    Ok(u32::from_le_bytes(buf))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_bit_identical() {
        let mut ck = ModelCheckpoint::new(0xDEADBEEF, 42);
        ck.insert("a", Tensor::from_vec(vec![1.0, -2.5, 3.25])).unwrap();
        ck.insert("b.w", Tensor::new(vec![2, 2], vec![0.1, 0.2, 0.3, 0.4]).unwrap())
            .unwrap();
        let mut buf = Vec::new();
        ck.write_to(&mut buf, Dtype::F64).unwrap();
        let back = ModelCheckpoint::read_from(&mut buf.as_slice(), "mem").unwrap();
        assert_eq!(ck, back);

        let mut buf2 = Vec::new();
        back.write_to(&mut buf2, Dtype::F64).unwrap();
        assert_eq!(buf, buf2);
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut ck = ModelCheckpoint::new(0, 0);
        ck.insert("w", Tensor::scalar(1.0)).unwrap();
        assert!(ck.insert("w", Tensor::scalar(2.0)).is_err());
    }

    #[test]
    fn truncated_file_rejected() {
        let mut ck = ModelCheckpoint::new(1, 2);
        ck.insert("w", Tensor::from_vec(vec![1.0, 2.0])).unwrap();
        let mut buf = Vec::new();
        ck.write_to(&mut buf, Dtype::F64).unwrap();
        buf.truncate(buf.len() - 10);
        assert!(ModelCheckpoint::read_from(&mut buf.as_slice(), "mem").is_err());
    }

    #[test]
    fn corrupt_magic_rejected() {
        let err = ModelCheckpoint::read_from(&mut &b"XXXX\x01\x00\x00\x00"[..], "mem").unwrap_err();
        assert!(err.to_string().contains("bad magic"));
    }
}
