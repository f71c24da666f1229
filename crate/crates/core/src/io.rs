//! The `.dtz` tensor file format.
//!
//! ```text
//! b"ATD1" | u8 order | order × u32 LE extents | row-major f64 LE payload
//! ```
//!
//! No compression and no padding. Readers reject zero extents, products that
//! overflow, short or over-long payloads and non-finite values.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{AtdError, Result};
use crate::tensor::DenseTensor;

pub const MAGIC: [u8; 4] = *b"ATD1";

pub fn encode_tensor(t: &DenseTensor) -> Result<Vec<u8>> {
    let order = u8::try_from(t.order()).map_err(|_| AtdError::Format(format!("order {} exceeds 255", t.order())))?;
    let mut out = Vec::with_capacity(5 + 4 * t.order() + t.byte_size());
    out.extend_from_slice(&MAGIC);
    out.push(order);
    for &e in t.shape() {
        let e = u32::try_from(e).map_err(|_| AtdError::Format(format!("extent {e} does not fit in u32")))?;
        out.extend_from_slice(&e.to_le_bytes());
    }
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_tensor(bytes: &[u8]) -> Result<DenseTensor> {
    if bytes.len() < 5 || bytes[..4] != MAGIC {
        return Err(AtdError::Format("bad magic, expected ATD1".into()));
    }
    let order = bytes[4] as usize;
    if order == 0 {
        return Err(AtdError::Format("order 0".into()));
    }
    let header = 5 + 4 * order;
    if bytes.len() < header {
        return Err(AtdError::Format("truncated header".into()));
    }
    let shape: Vec<usize> = bytes[5..header]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().unwrap()) as usize)
        .collect();
    if let Some(m) = shape.iter().position(|&e| e == 0) {
        return Err(AtdError::Format(format!("extent of mode {m} is zero")));
    }
    let count = shape
        .iter()
        .try_fold(1usize, |acc, &e| acc.checked_mul(e))
        .and_then(|n| n.checked_mul(8))
        .ok_or_else(|| AtdError::Format(format!("extents {shape:?} overflow")))?;
    let payload = &bytes[header..];
    if payload.len() < count {
        return Err(AtdError::Format(format!(
            "truncated payload: {} of {count} bytes",
            payload.len()
        )));
    }
    if payload.len() > count {
        return Err(AtdError::Format(format!(
            "{} trailing bytes after payload",
            payload.len() - count
        )));
    }
    let data: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
        return Err(AtdError::Format(format!("non-finite value at element {pos}")));
    }
    DenseTensor::new(shape, data)
}

pub fn write_tensor(t: &DenseTensor, path: impl AsRef<Path>) -> Result<()> {
    let bytes = encode_tensor(t)?;
    let mut f = fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<DenseTensor> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode_tensor(&bytes)
}
