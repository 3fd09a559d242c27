//! Raw tensor file format.
//!
//! Layout: magic `MCTN`, u8 dtype code (0 = f32, 1 = f64), u32 rank,
//! rank x u32 extents, little-endian payload.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"MCTN";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    pub fn code(self) -> u8 {
        match self {
            Dtype::F32 => 0,
            Dtype::F64 => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Dtype> {
        match code {
            0 => Some(Dtype::F32),
            1 => Some(Dtype::F64),
            _ => None,
        }
    }
}

pub fn write_tensor<W: Write>(w: &mut W, t: &Tensor, dtype: Dtype) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&[dtype.code()])?;
    w.write_all(&(t.shape().len() as u32).to_le_bytes())?;
    for &e in t.shape() {
        w.write_all(&(e as u32).to_le_bytes())?;
    }
    match dtype {
        Dtype::F32 => {
            for &v in t.data() {
                w.write_all(&(v as f32).to_le_bytes())?;
            }
        }
        Dtype::F64 => {
            for &v in t.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
    }
    Ok(())
}

pub fn read_tensor<R: Read>(r: &mut R, path: &str) -> Result<Tensor> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| Error::corrupt(path, "truncated header"))?;
    if &magic != MAGIC {
        return Err(Error::corrupt(path, "bad magic, expected MCTN"));
    }
    let mut byte = [0u8; 1];
    r.read_exact(&mut byte)
        .map_err(|_| Error::corrupt(path, "missing dtype"))?;
    let dtype = Dtype::from_code(byte[0])
        .ok_or_else(|| Error::corrupt(path, format!("unknown dtype code {}", byte[0])))?;
    let rank = read_u32(r, path)? as usize;
    if rank > 16 {
        return Err(Error::corrupt(path, format!("implausible rank {rank}")));
    }
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        shape.push(read_u32(r, path)? as usize);
    }
    let numel: usize = shape.iter().product();
    let mut data = Vec::with_capacity(numel);
    match dtype {
        Dtype::F32 => {
            let mut buf = [0u8; 4];
            for _ in 0..numel {
                r.read_exact(&mut buf)
                    .map_err(|_| Error::corrupt(path, "truncated payload"))?;
                data.push(f32::from_le_bytes(buf) as f64);
            }
        }
        Dtype::F64 => {
            let mut buf = [0u8; 8];
            for _ in 0..numel {
                r.read_exact(&mut buf)
                    .map_err(|_| Error::corrupt(path, "truncated payload"))?;
                data.push(f64::from_le_bytes(buf));
            }
        }
    }
    Tensor::new(shape, data)
}

fn read_u32<R: Read>(r: &mut R, path: &str) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)
        .map_err(|_| Error::corrupt(path, "truncated header"))?;
    Ok(u32::from_le_bytes(buf))
}

pub fn save(path: &std::path::Path, t: &Tensor, dtype: Dtype) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    write_tensor(&mut f, t, dtype).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn load(path: &std::path::Path) -> Result<Tensor> {
    let mut f = std::fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    read_tensor(&mut f, &path.display().to_string())
}
