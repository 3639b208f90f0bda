//! Middlebury `.flo` reader and writer.
//!
//! Layout (little-endian): `f32` magic `202021.25`, `i32` width, `i32` height,
//! then `height × width` interleaved `f32` pairs `(u, v)` in row-major order.

use std::fs;
use std::io::{self, Read};
use std::path::Path;

use super::FlowField;
use crate::error::{io_at, Error, Result};
use crate::scalar::Real;

pub const FLO_MAGIC: f32 = 202021.25;

pub fn read_flo<S: Real>(path: impl AsRef<Path>) -> Result<FlowField<S>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(io_at(path))?;
    read_flo_bytes(&bytes)
}

pub fn read_flo_bytes<S: Real>(bytes: &[u8]) -> Result<FlowField<S>> {
    let mut r = bytes;
    let mut word = [0u8; 4];
    r.read_exact(&mut word)?;
    let magic = f32::from_le_bytes(word);
    if magic != FLO_MAGIC {
        return Err(Error::Format(format!("bad .flo magic {magic}, expected {FLO_MAGIC}")));
    }
    r.read_exact(&mut word)?;
    let width = i32::from_le_bytes(word);
    r.read_exact(&mut word)?;
    let height = i32::from_le_bytes(word);
    if width <= 0 || height <= 0 {
        return Err(Error::Format(format!("non-positive .flo dimensions {width}x{height}")));
    }
    let (width, height) = (width as usize, height as usize);
    let count = width
        .checked_mul(height)
        .ok_or_else(|| Error::Format("flo dimensions overflow".into()))?;
    if r.len() / 8 < count {
        return Err(Error::Io(io::Error::new(
            io::ErrorKind::UnexpectedEof,
            format!(
                "truncated .flo payload: {} bytes for {}x{} field",
                r.len(),
                width,
                height
            ),
        )));
    }
    let mut data = Vec::with_capacity(count);
    for (i, chunk) in r[..count * 8].chunks_exact(8).enumerate() {
        let u = f32::from_le_bytes(chunk[0..4].try_into().unwrap());
        let v = f32::from_le_bytes(chunk[4..8].try_into().unwrap());
        if !(u.is_finite() && v.is_finite()) {
            return Err(Error::data(format!(
                "non-finite flow ({u}, {v}) at pixel ({}, {})",
                i % width,
                i / width
            )));
        }
        data.push([S::lit(u as f64), S::lit(v as f64)]);
    }
    FlowField::new(width, height, data)
}

/// Serializes a field. Values are narrowed to `f32`.
pub fn write_flo_bytes<S: Real>(field: &FlowField<S>) -> Result<Vec<u8>> {
    if field.width() == 0 || field.height() == 0 {
        return Err(Error::dim(format!(
            "cannot write {}x{} flow field",
            field.width(),
            field.height()
        )));
    }
    if !field.is_finite() {
        return Err(Error::data("flow field contains non-finite values"));
    }
    let to_i32 = |n: usize| {
        i32::try_from(n).map_err(|_| Error::dim(format!("dimension {n} exceeds .flo limits")))
    };
    let mut out = Vec::with_capacity(12 + field.len() * 8);
    out.extend_from_slice(&FLO_MAGIC.to_le_bytes());
    out.extend_from_slice(&to_i32(field.width())?.to_le_bytes());
    out.extend_from_slice(&to_i32(field.height())?.to_le_bytes());
    for p in field.data() {
        let (u, v) = (p[0].as_f64() as f32, p[1].as_f64() as f32);
        if !(u.is_finite() && v.is_finite()) {
            return Err(Error::data("flow value overflows f32"));
        }
        out.extend_from_slice(&u.to_le_bytes());
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn write_flo<S: Real>(field: &FlowField<S>, path: impl AsRef<Path>) -> Result<()> {
    let bytes = write_flo_bytes(field)?;
    fs::write(path.as_ref(), bytes).map_err(io_at(path.as_ref()))?;
    Ok(())
}
