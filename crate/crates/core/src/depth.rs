//! Per-pixel depth maps: analytic proxies and PFM files.

use std::fs;
use std::path::Path;

use crate::error::{io_at, Error, Result};
use crate::scalar::Real;

/// Z-depth in scene units for every pixel of the reference view.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap<S> {
    width: usize,
    height: usize,
    data: Vec<S>,
}

impl<S: Real> DepthMap<S> {
    pub fn new(width: usize, height: usize, data: Vec<S>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::dim(format!(
                "depth map has {} values, expected {}x{}",
                data.len(),
                width,
                height
            )));
        }
        if let Some(i) = data.iter().position(|d| !(d.is_finite() && *d > S::zero())) {
            return Err(Error::data(format!(
                "depth must be positive and finite, got {} at pixel ({}, {})",
                data[i],
                i % width,
                i / width
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> S {
        self.data[y * self.width + x]
    }
}

/// Synthetic stand-ins for scene geometry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DepthProxy<S> {
    Constant(S),
    /// Linear in the row index: `near` on the top row, `far` on the bottom row.
    FrontoRamp { near: S, far: S },
}

pub fn depth_proxy<S: Real>(kind: DepthProxy<S>, width: usize, height: usize) -> Result<DepthMap<S>> {
    let positive = |v: S, name: &str| {
        if v.is_finite() && v > S::zero() {
            Ok(v)
        } else {
            Err(Error::arg(format!("depth proxy {name} must be positive, got {v}")))
        }
    };
    let data = match kind {
        DepthProxy::Constant(d) => vec![positive(d, "value")?; width * height],
        DepthProxy::FrontoRamp { near, far } => {
            let (near, far) = (positive(near, "near")?, positive(far, "far")?);
            let denom = S::from_usize_lossy(height.saturating_sub(1).max(1));
            (0..height)
                .flat_map(|y| {
                    let d = near + (far - near) * S::from_usize_lossy(y) / denom;
                    std::iter::repeat_n(d, width)
                })
                .collect()
        }
    };
    DepthMap::new(width, height, data)
}

/// Reads a single-channel PFM (`Pf`). Rows are stored bottom-to-top.
pub fn read_pfm<S: Real>(path: impl AsRef<Path>) -> Result<DepthMap<S>> {
    let path = path.as_ref();
    read_pfm_bytes(&fs::read(path).map_err(io_at(path))?)
}

pub fn read_pfm_bytes<S: Real>(bytes: &[u8]) -> Result<DepthMap<S>> {
    let mut pos = 0;
    let mut token = || -> Result<String> {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format("truncated PFM header".into()));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    let kind = token()?;
    if kind != "Pf" {
        return Err(Error::Format(format!("expected single-channel PFM 'Pf', got '{kind}'")));
    }
    let parse = |s: String, what: &str| {
        s.parse::<f64>()
            .map_err(|_| Error::Format(format!("bad PFM {what} '{s}'")))
    };
    let width = parse(token()?, "width")? as usize;
    let height = parse(token()?, "height")? as usize;
    let scale = parse(token()?, "scale")?;
    // Exactly one whitespace byte separates the header from the payload.
    pos += 1;
    let little = scale < 0.0;
    let need = width * height * 4;
    let payload = bytes
        .get(pos..pos + need)
        .ok_or_else(|| Error::Format("truncated PFM payload".into()))?;
    let mut data = vec![S::zero(); width * height];
    for (i, chunk) in payload.chunks_exact(4).enumerate() {
        let raw: [u8; 4] = chunk.try_into().unwrap();
        let v = if little {
            f32::from_le_bytes(raw)
        } else {
            f32::from_be_bytes(raw)
        };
        let (x, row_from_bottom) = (i % width, i / width);
        data[(height - 1 - row_from_bottom) * width + x] = S::lit(v as f64);
    }
    DepthMap::new(width, height, data)
}

pub fn write_pfm<S: Real>(depth: &DepthMap<S>, path: impl AsRef<Path>) -> Result<()> {
    let mut out = format!("Pf\n{} {}\n-1.0\n", depth.width, depth.height).into_bytes();
    for y in (0..depth.height).rev() {
        for x in 0..depth.width {
            out.extend_from_slice(&(depth.get(x, y).as_f64() as f32).to_le_bytes());
        }
    }
    fs::write(path.as_ref(), out).map_err(io_at(path.as_ref()))?;
    Ok(())
}
