//! Deterministic flow autoencoder stand-in: 4× temporal and 8×8 spatial
//! block pooling, multilinear decoding.

use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{io_at, Error, Result};
use crate::flow::{FlowField, FlowSequence};
use crate::scalar::{lerp, shifted_mean, Real};

pub const TEMPORAL_BLOCK: usize = 4;
pub const SPATIAL_BLOCK: usize = 8;

/// Block means, layout `[t_block][h_block][w_block][u, v]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentGrid<S> {
    shape: LatentShape,
    values: Vec<S>,
}

/// Recorded source dims and the block counts they imply.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatentShape {
    pub frames: usize,
    pub width: usize,
    pub height: usize,
    pub t_blocks: usize,
    pub h_blocks: usize,
    pub w_blocks: usize,
}

impl LatentShape {
    pub fn for_dims(frames: usize, width: usize, height: usize) -> Self {
        Self {
            frames,
            width,
            height,
            t_blocks: frames.div_ceil(TEMPORAL_BLOCK),
            h_blocks: height.div_ceil(SPATIAL_BLOCK),
            w_blocks: width.div_ceil(SPATIAL_BLOCK),
        }
    }

    pub fn cells(&self) -> usize {
        self.t_blocks * self.h_blocks * self.w_blocks
    }

    fn validate(&self) -> Result<()> {
        if self.frames == 0 || self.width == 0 || self.height == 0 {
            return Err(Error::Format("latent records empty source dims".into()));
        }
        if *self != Self::for_dims(self.frames, self.width, self.height) {
            return Err(Error::Format(format!(
                "block counts {}x{}x{} do not match source {} frames of {}x{}",
                self.t_blocks, self.h_blocks, self.w_blocks, self.frames, self.width, self.height
            )));
        }
        Ok(())
    }
}

impl<S: Real> LatentGrid<S> {
    pub fn new(shape: LatentShape, values: Vec<S>) -> Result<Self> {
        shape.validate()?;
        if values.len() != shape.cells() * 2 {
            return Err(Error::Format(format!(
                "latent has {} values, shape needs {}",
                values.len(),
                shape.cells() * 2
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::data("latent contains non-finite values"));
        }
        Ok(Self { shape, values })
    }

    pub fn shape(&self) -> &LatentShape {
        &self.shape
    }

    pub fn values(&self) -> &[S] {
        &self.values
    }

    pub fn into_values(self) -> Vec<S> {
        self.values
    }

    fn index(&self, tb: usize, hb: usize, wb: usize) -> usize {
        ((tb * self.shape.h_blocks + hb) * self.shape.w_blocks + wb) * 2
    }

    pub fn cell(&self, tb: usize, hb: usize, wb: usize) -> [S; 2] {
        let i = self.index(tb, hb, wb);
        [self.values[i], self.values[i + 1]]
    }
}

/// Block means over `4 × 8 × 8` cells; edge cells average their actual extent.
///
/// Every pixel counts, including ones masked invalid (whose flow is zero).
pub fn encode<S: Real>(seq: &FlowSequence<S>) -> Result<LatentGrid<S>> {
    if seq.is_empty() {
        return Err(Error::arg("cannot encode an empty flow sequence"));
    }
    let shape = LatentShape::for_dims(seq.len(), seq.width(), seq.height());
    let w = seq.width();
    let cells: Vec<[S; 2]> = (0..shape.cells())
        .into_par_iter()
        .map(|c| {
            let wb = c % shape.w_blocks;
            let hb = (c / shape.w_blocks) % shape.h_blocks;
            let tb = c / (shape.w_blocks * shape.h_blocks);
            let frames = &seq.frames()[tb * TEMPORAL_BLOCK..((tb + 1) * TEMPORAL_BLOCK).min(shape.frames)];
            let ys = hb * SPATIAL_BLOCK..((hb + 1) * SPATIAL_BLOCK).min(shape.height);
            let xs = wb * SPATIAL_BLOCK..((wb + 1) * SPATIAL_BLOCK).min(shape.width);
            let pixels = || {
                frames.iter().flat_map(|f| {
                    let xs = xs.clone();
                    ys.clone().flat_map(move |y| xs.clone().map(move |x| f.data()[y * w + x]))
                })
            };
            [
                shifted_mean(pixels().map(|p| p[0])).expect("non-empty block"),
                shifted_mean(pixels().map(|p| p[1])).expect("non-empty block"),
            ]
        })
        .collect();
    LatentGrid::new(shape, cells.into_iter().flatten().collect())
}

/// Interpolation stencil along one axis: lower block, upper block, weight.
fn axis_stencil<S: Real>(n: usize, block: usize) -> Vec<(usize, usize, S)> {
    let blocks = n.div_ceil(block);
    let centre = |b: usize| {
        let start = b * block;
        let end = ((b + 1) * block).min(n);
        S::lit((start + end - 1) as f64 / 2.0)
    };
    (0..n)
        .map(|p| {
            let pf = S::from_usize_lossy(p);
            if blocks == 1 || pf <= centre(0) {
                return (0, 0, S::zero());
            }
            if pf >= centre(blocks - 1) {
                return (blocks - 1, blocks - 1, S::zero());
            }
            let b = (0..blocks - 1).find(|&b| pf < centre(b + 1)).expect("interior point");
            let (c0, c1) = (centre(b), centre(b + 1));
            (b, b + 1, (pf - c0) / (c1 - c0))
        })
        .collect()
}

/// Multilinear interpolation of block centres, without residual correction.
pub fn interpolate<S: Real>(lat: &LatentGrid<S>) -> Result<FlowSequence<S>> {
    let sh = lat.shape;
    let ts = axis_stencil::<S>(sh.frames, TEMPORAL_BLOCK);
    let ys = axis_stencil::<S>(sh.height, SPATIAL_BLOCK);
    let xs = axis_stencil::<S>(sh.width, SPATIAL_BLOCK);
    let frames = ts
        .par_iter()
        .map(|&(t0, t1, ft)| {
            FlowField::from_fn(sh.width, sh.height, |x, y| {
                let (y0, y1, fy) = ys[y];
                let (x0, x1, fx) = xs[x];
                let plane = |tb: usize| {
                    let row = |hb: usize| {
                        let (a, b) = (lat.cell(tb, hb, x0), lat.cell(tb, hb, x1));
                        [lerp(a[0], b[0], fx), lerp(a[1], b[1], fx)]
                    };
                    let (a, b) = (row(y0), row(y1));
                    [lerp(a[0], b[0], fy), lerp(a[1], b[1], fy)]
                };
                let (a, b) = (plane(t0), plane(t1));
                [lerp(a[0], b[0], ft), lerp(a[1], b[1], ft)]
            })
        })
        .collect::<Result<Vec<_>>>()?;
    FlowSequence::new(sh.width, sh.height, frames)
}

/// Interpolates block centres back to the recorded dims, then adds a
/// per-block constant so that re-encoding returns `lat` exactly.
pub fn decode<S: Real>(lat: &LatentGrid<S>) -> Result<FlowSequence<S>> {
    lat.shape.validate()?;
    let mut seq = interpolate(lat)?;
    let pooled = encode(&seq)?;
    let residual: Vec<S> = lat.values.iter().zip(&pooled.values).map(|(&a, &b)| a - b).collect();
    let sh = lat.shape;
    let (w, h) = (sh.width, sh.height);
    seq.frames_mut().par_iter_mut().enumerate().for_each(|(t, f)| {
        let tb = t / TEMPORAL_BLOCK;
        for y in 0..h {
            for x in 0..w {
                let i = ((tb * sh.h_blocks + y / SPATIAL_BLOCK) * sh.w_blocks + x / SPATIAL_BLOCK) * 2;
                let p = &mut f.data_mut()[y * w + x];
                p[0] += residual[i];
                p[1] += residual[i + 1];
            }
        }
    });
    Ok(seq)
}

#[derive(Serialize, Deserialize)]
struct LatentHeader {
    format: String,
    #[serde(flatten)]
    shape: LatentShape,
}

const LATENT_FORMAT: &str = "motionflow-latent-v1";

/// JSON header line followed by little-endian `f32` values.
pub fn write_latent<S: Real>(lat: &LatentGrid<S>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, latent_bytes(lat)?).map_err(io_at(path))?;
    Ok(())
}

pub fn latent_bytes<S: Real>(lat: &LatentGrid<S>) -> Result<Vec<u8>> {
    let header = LatentHeader {
        format: LATENT_FORMAT.into(),
        shape: lat.shape,
    };
    let mut out = serde_json::to_vec(&header)?;
    out.push(b'\n');
    for v in &lat.values {
        out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
    }
    Ok(out)
}

pub fn read_latent<S: Real>(path: impl AsRef<Path>) -> Result<LatentGrid<S>> {
    let path = path.as_ref();
    read_latent_from(BufReader::new(fs::File::open(path).map_err(io_at(path))?))
}

pub fn read_latent_from<S: Real>(mut reader: impl BufRead) -> Result<LatentGrid<S>> {
    let mut line = String::new();
    reader.read_line(&mut line)?;
    let header: LatentHeader =
        serde_json::from_str(line.trim_end()).map_err(|e| Error::Format(format!("latent header: {e}")))?;
    if header.format != LATENT_FORMAT {
        return Err(Error::Format(format!("unknown latent format '{}'", header.format)));
    }
    let mut payload = Vec::new();
    reader.read_to_end(&mut payload)?;
    if payload.len() % 4 != 0 {
        return Err(Error::Format("latent payload is not a whole number of f32 values".into()));
    }
    let values = payload
        .chunks_exact(4)
        .map(|c| S::lit(f32::from_le_bytes(c.try_into().unwrap()) as f64))
        .collect();
    LatentGrid::new(header.shape, values)
}
