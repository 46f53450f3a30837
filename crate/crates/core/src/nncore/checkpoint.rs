//! Binary checkpoint: magic, version, JSON metadata, then named tensors in
//! little-endian order.

use std::io::{Read, Write};

use super::tensor::{ModelParams, Tensor};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"CTRJCKPT";
const VERSION: u32 = 1;
const MAX_NAME: usize = 4096;

fn put_u32<W: Write>(w: &mut W, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn put_u64<W: Write>(w: &mut W, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn get_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn get_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub fn write_checkpoint<W: Write>(
    mut w: W,
    params: &ModelParams,
    metadata: &serde_json::Value,
) -> Result<()> {
    w.write_all(MAGIC)?;
    put_u32(&mut w, VERSION)?;
    let meta = serde_json::to_vec(metadata)?;
    put_u64(&mut w, meta.len() as u64)?;
    w.write_all(&meta)?;
    put_u32(&mut w, params.len() as u32)?;
    for (name, t) in params.iter() {
        put_u32(&mut w, name.len() as u32)?;
        w.write_all(name.as_bytes())?;
        put_u32(&mut w, t.shape().len() as u32)?;
        for &d in t.shape() {
            put_u64(&mut w, d as u64)?;
        }
        for &v in t.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<(ModelParams, serde_json::Value)> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("not a checkpoint file".into()));
    }
    let version = get_u32(&mut r)?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let meta_len = get_u64(&mut r)? as usize;
    let mut meta = Vec::new();
    (&mut r).take(meta_len as u64).read_to_end(&mut meta)?;
    if meta.len() != meta_len {
        return Err(Error::Format("truncated metadata".into()));
    }
    let metadata: serde_json::Value = serde_json::from_slice(&meta)?;
    let n = get_u32(&mut r)?;
    let mut params = ModelParams::new();
    for _ in 0..n {
        let name_len = get_u32(&mut r)? as usize;
        if name_len > MAX_NAME {
            return Err(Error::Format("tensor name too long".into()));
        }
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|e| Error::Format(e.to_string()))?;
        let ndim = get_u32(&mut r)? as usize;
        let shape = (0..ndim)
            .map(|_| get_u64(&mut r).map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let len: usize = shape.iter().product();
        let mut data = Vec::with_capacity(len.min(1 << 24));
        let mut b = [0u8; 8];
        for _ in 0..len {
            r.read_exact(&mut b)?;
            data.push(f64::from_le_bytes(b));
        }
        params.insert(name, Tensor::new(shape, data)?);
    }
    Ok((params, metadata))
}
