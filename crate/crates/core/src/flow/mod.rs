//! Dense flow fields and sequences.
//!
//! A [`FlowField`] stores one `(u, v)` displacement per pixel in row-major
//! order. Frame `l` of a [`FlowSequence`] always holds the displacement from
//! the reference frame 0 to frame `l`.

mod color;
mod flo;
mod warp;

pub use color::{flow_to_color, hsv_to_rgb, sequence_to_color, MaxMagnitude};
pub use flo::{read_flo, read_flo_bytes, write_flo, write_flo_bytes, FLO_MAGIC};
pub use warp::{warp_backward, Image};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::{lerp, Real};

#[derive(Debug, Clone, PartialEq)]
pub struct FlowField<S> {
    width: usize,
    height: usize,
    data: Vec<[S; 2]>,
    valid: Option<Vec<bool>>,
}

impl<S: Real> FlowField<S> {
    /// Builds a field from row-major displacements. All pixels are valid.
    pub fn new(width: usize, height: usize, data: Vec<[S; 2]>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::dim(format!(
                "flow data has {} entries, expected {}x{}",
                data.len(),
                width,
                height
            )));
        }
        if let Some(i) = data.iter().position(|p| !(p[0].is_finite() && p[1].is_finite())) {
            return Err(Error::data(format!(
                "non-finite displacement at pixel ({}, {})",
                i % width.max(1),
                i / width.max(1)
            )));
        }
        Ok(Self {
            width,
            height,
            data,
            valid: None,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self::constant(width, height, S::zero(), S::zero())
    }

    pub fn constant(width: usize, height: usize, u: S, v: S) -> Self {
        assert!(u.is_finite() && v.is_finite(), "constant flow must be finite");
        Self {
            width,
            height,
            data: vec![[u, v]; width * height],
            valid: None,
        }
    }

    /// Evaluates `f(x, y)` at every pixel.
    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> [S; 2]) -> Result<Self> {
        let data = (0..width * height).map(|i| f(i % width, i / width)).collect();
        Self::new(width, height, data)
    }

    /// Attaches a validity mask (`true` = known displacement).
    pub fn with_mask(mut self, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != self.data.len() {
            return Err(Error::dim(format!(
                "mask has {} entries, field has {}",
                mask.len(),
                self.data.len()
            )));
        }
        self.valid = if mask.iter().all(|&m| m) { None } else { Some(mask) };
        Ok(self)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[[S; 2]] {
        &self.data
    }

    /// Mutable access to the raw displacements. Writers re-check finiteness.
    pub fn data_mut(&mut self) -> &mut [[S; 2]] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<[S; 2]> {
        self.data
    }

    /// `None` means every pixel is valid.
    pub fn valid_mask(&self) -> Option<&[bool]> {
        self.valid.as_deref()
    }

    pub fn is_valid_index(&self, i: usize) -> bool {
        self.valid.as_ref().is_none_or(|m| m[i])
    }

    pub fn get(&self, x: usize, y: usize) -> [S; 2] {
        self.data[y * self.width + x]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|p| p[0].is_finite() && p[1].is_finite())
    }

    pub fn magnitude_at(&self, i: usize) -> S {
        let [u, v] = self.data[i];
        u.hypot(v)
    }

    /// Largest displacement norm over valid pixels.
    pub fn max_magnitude(&self) -> S {
        (0..self.len())
            .filter(|&i| self.is_valid_index(i))
            .map(|i| self.magnitude_at(i))
            .fold(S::zero(), S::max)
    }

    pub fn scaled(&self, alpha: S) -> Self {
        let mut out = self.clone();
        for p in &mut out.data {
            p[0] *= alpha;
            p[1] *= alpha;
        }
        out
    }

    /// Bilinear lookup with coordinates clamped to the image border.
    pub fn sample_bilinear(&self, x: S, y: S) -> [S; 2] {
        let s = warp::BilinearSite::new(x, y, self.width, self.height);
        let at = |xi: usize, yi: usize| self.data[yi * self.width + xi];
        let (a, b, c, d) = (at(s.x0, s.y0), at(s.x1, s.y0), at(s.x0, s.y1), at(s.x1, s.y1));
        let mut out = [S::zero(); 2];
        for (k, o) in out.iter_mut().enumerate() {
            *o = lerp(lerp(a[k], b[k], s.fx), lerp(c[k], d[k], s.fx), s.fy);
        }
        out
    }

    fn check_same_dims(&self, other: &Self) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::dim(format!(
                "flow fields differ in size: {}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )));
        }
        Ok(())
    }

    fn merged_mask(&self, other: &Self) -> Option<Vec<bool>> {
        match (&self.valid, &other.valid) {
            (None, None) => None,
            (Some(m), None) | (None, Some(m)) => Some(m.clone()),
            (Some(a), Some(b)) => Some(a.iter().zip(b).map(|(x, y)| *x && *y).collect()),
        }
    }
}

/// Pointwise sum `a + b`. Validity is the intersection of both masks.
pub fn compose_add<S: Real>(a: &FlowField<S>, b: &FlowField<S>) -> Result<FlowField<S>> {
    a.check_same_dims(b)?;
    let data = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(p, q)| [p[0] + q[0], p[1] + q[1]])
        .collect();
    Ok(FlowField {
        width: a.width,
        height: a.height,
        data,
        valid: a.merged_mask(b),
    })
}

/// Sequential composition: `a(p) + b(p + a(p))`, `b` sampled bilinearly.
pub fn compose_chain<S: Real>(a: &FlowField<S>, b: &FlowField<S>) -> Result<FlowField<S>> {
    a.check_same_dims(b)?;
    let w = a.width;
    let data: Vec<[S; 2]> = a
        .data
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let x = S::from_usize_lossy(i % w) + p[0];
            let y = S::from_usize_lossy(i / w) + p[1];
            let q = b.sample_bilinear(x, y);
            [p[0] + q[0], p[1] + q[1]]
        })
        .collect();
    Ok(FlowField {
        width: a.width,
        height: a.height,
        data,
        valid: a.merged_mask(b),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowSequence<S> {
    width: usize,
    height: usize,
    frames: Vec<FlowField<S>>,
}

impl<S: Real> FlowSequence<S> {
    pub fn new(width: usize, height: usize, frames: Vec<FlowField<S>>) -> Result<Self> {
        if let Some((l, f)) = frames.iter().enumerate().find(|(_, f)| f.dims() != (width, height)) {
            return Err(Error::dim(format!(
                "frame {} is {}x{}, sequence is {}x{}",
                l + 1,
                f.width(),
                f.height(),
                width,
                height
            )));
        }
        Ok(Self {
            width,
            height,
            frames,
        })
    }

    /// Sequence of `count` all-zero frames.
    pub fn zeros(width: usize, height: usize, count: usize) -> Self {
        Self {
            width,
            height,
            frames: vec![FlowField::zeros(width, height); count],
        }
    }

    pub fn from_frames(frames: Vec<FlowField<S>>) -> Result<Self> {
        let first = frames
            .first()
            .ok_or_else(|| Error::arg("flow sequence needs at least one frame"))?;
        let (w, h) = first.dims();
        Self::new(w, h, frames)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Number of stored frames (`L - 1` for an `L`-frame clip).
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frames(&self) -> &[FlowField<S>] {
        &self.frames
    }

    pub fn frames_mut(&mut self) -> &mut [FlowField<S>] {
        &mut self.frames
    }

    pub fn into_frames(self) -> Vec<FlowField<S>> {
        self.frames
    }

    pub fn max_magnitude(&self) -> S {
        self.frames
            .iter()
            .map(FlowField::max_magnitude)
            .fold(S::zero(), S::max)
    }

    pub fn scaled(&self, alpha: S) -> Self {
        Self {
            width: self.width,
            height: self.height,
            frames: self.frames.iter().map(|f| f.scaled(alpha)).collect(),
        }
    }

    fn zip_frames(
        &self,
        other: &Self,
        op: impl Fn(&FlowField<S>, &FlowField<S>) -> Result<FlowField<S>> + Sync,
    ) -> Result<Self> {
        if self.len() != other.len() {
            return Err(Error::dim(format!(
                "sequences differ in length: {} vs {}",
                self.len(),
                other.len()
            )));
        }
        let frames = self
            .frames
            .par_iter()
            .zip(other.frames.par_iter())
            .map(|(a, b)| op(a, b))
            .collect::<Result<Vec<_>>>()?;
        Self::new(self.width, self.height, frames)
    }

    /// Frame-wise [`compose_add`].
    pub fn compose_add(&self, other: &Self) -> Result<Self> {
        self.zip_frames(other, compose_add)
    }

    /// Frame-wise [`compose_chain`].
    pub fn compose_chain(&self, other: &Self) -> Result<Self> {
        self.zip_frames(other, compose_chain)
    }
}

/// Adds i.i.d. `N(0, sigma²)` noise to every component.
///
/// Frame `l` draws from stream `l` of a ChaCha8 generator seeded with `seed`,
/// so the result does not depend on scheduling.
pub fn add_flow_noise<S: Real>(seq: &FlowSequence<S>, sigma: S, seed: u64) -> Result<FlowSequence<S>> {
    if !(sigma >= S::zero()) || !sigma.is_finite() {
        return Err(Error::arg(format!("noise sigma must be >= 0, got {sigma}")));
    }
    if sigma == S::zero() {
        return Ok(seq.clone());
    }
    let frames = seq
        .frames
        .par_iter()
        .enumerate()
        .map(|(l, f)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(l as u64);
            let mut out = f.clone();
            for p in &mut out.data {
                for c in p.iter_mut() {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    *c += sigma * S::lit(z);
                }
            }
            out
        })
        .collect();
    FlowSequence::new(seq.width, seq.height, frames)
}
