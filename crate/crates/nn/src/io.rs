//! Flat parameter files: `"WGSF"`, version `u32`, count `u64`, then the
//! values as `f64`, all little-endian.

use std::path::Path;

use crate::error::{NnError, Result};

pub const MAGIC: &[u8; 4] = b"WGSF";
pub const VERSION: u32 = 1;
const HEADER: usize = 16;

pub fn encode_params(values: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER + 8 * values.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(values.len() as u64).to_le_bytes());
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_params(bytes: &[u8]) -> Result<Vec<f64>> {
    if bytes.len() < HEADER || &bytes[..4] != MAGIC {
        return Err(NnError::BadModelFile("missing WGSF header".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(NnError::BadModelFile(format!("unsupported version {version}")));
    }
    let n = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let body = &bytes[HEADER..];
    if n.checked_mul(8) != Some(body.len()) {
        return Err(NnError::BadModelFile(format!("header announces {n} values, body holds {} bytes", body.len())));
    }
    Ok(body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
}

pub fn write_params(path: &Path, values: &[f64]) -> Result<()> {
    std::fs::write(path, encode_params(values))?;
    Ok(())
}

pub fn read_params(path: &Path) -> Result<Vec<f64>> {
    decode_params(&std::fs::read(path)?)
}
