//! Drag annotations to sparse and dense flow.
//!
//! Each user trajectory is resampled to one position per output frame with a
//! uniform Catmull-Rom spline. The frame-0 position becomes the control
//! pixel; frame `l` contributes the displacement `T̂_l − T̂_0`. A Gaussian
//! kernel with a background anchor then spreads the sparse displacements
//! over the canvas.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::flow::{FlowField, FlowSequence};
use crate::scalar::Real;

/// Background anchor radius in units of the kernel width.
pub const CUTOFF_SIGMAS: f64 = 4.0;

#[derive(Debug, Clone, PartialEq)]
pub struct DragTrajectory<S> {
    points: Vec<[S; 2]>,
}

impl<S: Real> DragTrajectory<S> {
    pub fn new(points: Vec<[S; 2]>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::arg(format!(
                "drag trajectory needs at least 2 points, got {}",
                points.len()
            )));
        }
        if points.iter().any(|p| !(p[0].is_finite() && p[1].is_finite())) {
            return Err(Error::data("drag trajectory contains non-finite points"));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[[S; 2]] {
        &self.points
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationSet<S> {
    pub width: usize,
    pub height: usize,
    pub num_frames: usize,
    trajectories: Vec<DragTrajectory<S>>,
}

impl<S: Real> AnnotationSet<S> {
    pub fn new(
        width: usize,
        height: usize,
        num_frames: usize,
        trajectories: Vec<DragTrajectory<S>>,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::dim("annotation canvas must be at least 1x1"));
        }
        if num_frames < 2 {
            return Err(Error::arg(format!("num_frames must be >= 2, got {num_frames}")));
        }
        let (w, h) = (S::from_usize_lossy(width), S::from_usize_lossy(height));
        for (i, t) in trajectories.iter().enumerate() {
            if let Some(p) = t
                .points
                .iter()
                .find(|p| p[0] < S::zero() || p[0] >= w || p[1] < S::zero() || p[1] >= h)
            {
                return Err(Error::data(format!(
                    "trajectory {i} point ({}, {}) lies outside the {width}x{height} canvas",
                    p[0], p[1]
                )));
            }
        }
        Ok(Self {
            width,
            height,
            num_frames,
            trajectories,
        })
    }

    pub fn trajectories(&self) -> &[DragTrajectory<S>] {
        &self.trajectories
    }
}

fn catmull_rom<S: Real>(p0: [S; 2], p1: [S; 2], p2: [S; 2], p3: [S; 2], u: S) -> [S; 2] {
    let (u2, u3) = (u * u, u * u * u);
    let (two, three, four, five) = (S::two(), S::lit(3.0), S::lit(4.0), S::lit(5.0));
    std::array::from_fn(|k| {
        S::half()
            * (two * p1[k]
                + (p2[k] - p0[k]) * u
                + (two * p0[k] - five * p1[k] + four * p2[k] - p3[k]) * u2
                + (three * p1[k] - p0[k] - three * p2[k] + p3[k]) * u3)
    })
}

/// Resamples a drag path to `frames` positions `T̂_0 .. T̂_{frames-1}`.
///
/// Uniform Catmull-Rom through the input points, with reflected phantom end
/// points so evenly spaced collinear input stays on its line. Paths with
/// fewer than four points are interpolated piecewise linearly. The first and
/// last outputs are the first and last inputs exactly.
pub fn resample_trajectory<S: Real>(traj: &DragTrajectory<S>, frames: usize) -> Result<Vec<[S; 2]>> {
    let pts = &traj.points;
    let n = pts.len();
    if n < 2 {
        return Err(Error::arg("trajectory needs at least 2 points"));
    }
    if frames < 2 {
        return Err(Error::arg(format!("frame count must be >= 2, got {frames}")));
    }
    let at = |i: isize| -> [S; 2] {
        if i < 0 {
            let (a, b) = (pts[0], pts[1]);
            [S::two() * a[0] - b[0], S::two() * a[1] - b[1]]
        } else if i as usize >= n {
            let (a, b) = (pts[n - 1], pts[n - 2]);
            [S::two() * a[0] - b[0], S::two() * a[1] - b[1]]
        } else {
            pts[i as usize]
        }
    };
    let span = S::from_usize_lossy(n - 1);
    let denom = S::from_usize_lossy(frames - 1);
    let mut out = Vec::with_capacity(frames);
    out.push(pts[0]);
    for i in 1..frames - 1 {
        let s = S::from_usize_lossy(i) * span / denom;
        let k = s.floor().to_usize().unwrap_or(0).min(n - 2);
        let u = s - S::from_usize_lossy(k);
        let p = if n < 4 {
            let (a, b) = (pts[k], pts[k + 1]);
            [a[0] + u * (b[0] - a[0]), a[1] + u * (b[1] - a[1])]
        } else {
            let k = k as isize;
            catmull_rom(at(k - 1), at(k), at(k + 1), at(k + 2), u)
        };
        out.push(p);
    }
    out.push(pts[n - 1]);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlPoint<S> {
    pub x: usize,
    pub y: usize,
    pub flow: [S; 2],
}

/// One sparse map per output frame `l = 1 .. L-1`, control points sorted by `(y, x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseFlowSequence<S> {
    pub width: usize,
    pub height: usize,
    pub frames: Vec<Vec<ControlPoint<S>>>,
}

impl<S: Real> SparseFlowSequence<S> {
    /// Multiplies every displacement by `alpha`.
    pub fn scaled(&self, alpha: S) -> Self {
        let mut out = self.clone();
        for cp in out.frames.iter_mut().flatten() {
            cp.flow = [cp.flow[0] * alpha, cp.flow[1] * alpha];
        }
        out
    }
}

pub fn sparse_flow<S: Real>(ann: &AnnotationSet<S>) -> Result<SparseFlowSequence<S>> {
    let frames = ann.num_frames;
    let mut acc: Vec<BTreeMap<(usize, usize), ([S; 2], usize)>> = vec![BTreeMap::new(); frames - 1];
    for traj in &ann.trajectories {
        let path = resample_trajectory(traj, frames)?;
        let origin = path[0];
        let px = |c: S, n: usize| c.round().max(S::zero()).to_usize().unwrap_or(0).min(n - 1);
        let key = (px(origin[1], ann.height), px(origin[0], ann.width));
        for (l, pos) in path.iter().enumerate().skip(1) {
            let d = [pos[0] - origin[0], pos[1] - origin[1]];
            let e = acc[l - 1].entry(key).or_insert(([S::zero(); 2], 0));
            e.0[0] += d[0];
            e.0[1] += d[1];
            e.1 += 1;
        }
    }
    let frames = acc
        .into_iter()
        .map(|m| {
            m.into_iter()
                .map(|((y, x), (sum, count))| {
                    let c = S::from_usize_lossy(count);
                    let flow = if count == 1 { sum } else { [sum[0] / c, sum[1] / c] };
                    ControlPoint { x, y, flow }
                })
                .collect()
        })
        .collect();
    Ok(SparseFlowSequence {
        width: ann.width,
        height: ann.height,
        frames,
    })
}

/// Kernel width used when none is given: 5% of the longer canvas side.
pub fn default_sigma<S: Real>(width: usize, height: usize) -> S {
    S::lit(0.05) * S::from_usize_lossy(width.max(height))
}

/// Gaussian radial-basis densification with a background anchor.
///
/// `F(p) = Σ wᵢ fᵢ / (Σ wᵢ + ε)` with `wᵢ = exp(−|p − cᵢ|² / 2σ²)` and
/// `ε = exp(−r² / 2σ²)`, `r = 4σ`. Control pixels take their displacement exactly.
pub fn densify<S: Real>(
    sparse: &SparseFlowSequence<S>,
    width: usize,
    height: usize,
    sigma: S,
) -> Result<FlowSequence<S>> {
    if !(sigma > S::zero()) || !sigma.is_finite() {
        return Err(Error::arg(format!("densify sigma must be > 0, got {sigma}")));
    }
    if let Some(cp) = sparse.frames.iter().flatten().find(|c| c.x >= width || c.y >= height) {
        return Err(Error::dim(format!(
            "control point ({}, {}) outside {width}x{height}",
            cp.x, cp.y
        )));
    }
    let inv_two_var = S::one() / (S::two() * sigma * sigma);
    let cutoff = S::lit(CUTOFF_SIGMAS) * sigma;
    let anchor = (-(cutoff * cutoff) * inv_two_var).exp();

    let frames = sparse
        .frames
        .par_iter()
        .map(|points| {
            if points.is_empty() {
                return Ok(FlowField::zeros(width, height));
            }
            let mut data = vec![[S::zero(); 2]; width * height];
            for (i, out) in data.iter_mut().enumerate() {
                let (x, y) = (i % width, i / width);
                let (mut num, mut den) = ([S::zero(); 2], S::zero());
                for cp in points {
                    let dx = S::from_usize_lossy(x) - S::from_usize_lossy(cp.x);
                    let dy = S::from_usize_lossy(y) - S::from_usize_lossy(cp.y);
                    let w = (-(dx * dx + dy * dy) * inv_two_var).exp();
                    num[0] += w * cp.flow[0];
                    num[1] += w * cp.flow[1];
                    den += w;
                }
                let den = den + anchor;
                *out = [num[0] / den, num[1] / den];
            }
            for cp in points {
                data[cp.y * width + cp.x] = cp.flow;
            }
            FlowField::new(width, height, data)
        })
        .collect::<Result<Vec<_>>>()?;
    FlowSequence::new(width, height, frames)
}
