//! `TEN1` array files: 8-byte magic `TEN1\0\0\0\0`, little-endian `u32` rank,
//! `u32` dims, then an `f32` payload in row-major order.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: [u8; 8] = *b"TEN1\0\0\0\0";

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let n: usize = dims.iter().product();
        if n != data.len() {
            return Err(Error::InvalidArgument(format!(
                "dims {dims:?} need {n} elements, got {}",
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }
}

pub fn encode(dims: &[usize], data: &[f32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + 4 * dims.len() + 4 * data.len());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&(dims.len() as u32).to_le_bytes());
    for &d in dims {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for &v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<Tensor> {
    let bad = |reason: &str| Error::Malformed { path: path.to_path_buf(), reason: reason.to_string() };
    if bytes.len() < 12 || bytes[..8] != MAGIC {
        return Err(bad("missing TEN1 magic"));
    }
    let word = |off: usize| -> Result<u32> {
        bytes
            .get(off..off + 4)
            .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
            .ok_or_else(|| bad("truncated header"))
    };
    let rank = word(8)? as usize;
    let mut dims = Vec::with_capacity(rank);
    for r in 0..rank {
        dims.push(word(12 + 4 * r)? as usize);
    }
    let start = 12 + 4 * rank;
    let n: usize = dims.iter().product();
    let payload = &bytes[start.min(bytes.len())..];
    if payload.len() != 4 * n {
        return Err(bad(&format!("payload has {} bytes, dims {dims:?} need {}", payload.len(), 4 * n)));
    }
    let data = payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
    Ok(Tensor { dims, data })
}

pub fn write(path: &Path, dims: &[usize], data: &[f32]) -> Result<()> {
    debug_assert_eq!(dims.iter().product::<usize>(), data.len());
    fs::write(path, encode(dims, data))?;
    Ok(())
}

pub fn read(path: &Path) -> Result<Tensor> {
    if !path.exists() {
        return Err(Error::MissingInput(path.to_path_buf()));
    }
    decode(&fs::read(path)?, path)
}
