//! Trajectory and flow quality metrics.

use rayon::prelude::*;

use crate::camera::{CameraTrajectory, ROTATION_TOLERANCE};
use crate::error::{Error, Result};
use crate::flow::FlowSequence;
use crate::linalg::{Mat3, Vec3};
use crate::scalar::Real;

/// World-to-camera poses `(R, t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseTrajectory<S> {
    poses: Vec<(Mat3<S>, Vec3<S>)>,
}

impl<S: Real> PoseTrajectory<S> {
    pub fn new(poses: Vec<(Mat3<S>, Vec3<S>)>) -> Result<Self> {
        let tol = S::lit(ROTATION_TOLERANCE);
        for (i, (r, t)) in poses.iter().enumerate() {
            if !(r.is_finite() && t.is_finite()) {
                return Err(Error::data(format!("pose {i} is not finite")));
            }
            let defect = r.orthonormality_defect();
            if defect > tol || (r.determinant() - S::one()).abs() > tol {
                return Err(Error::data(format!(
                    "pose {i} is not a rotation (defect {:e})",
                    defect.as_f64()
                )));
            }
        }
        Ok(Self { poses })
    }

    pub fn from_camera(traj: &CameraTrajectory<S>) -> Self {
        Self {
            poses: traj
                .frames()
                .iter()
                .map(|f| (*f.rotation(), f.translation()))
                .collect(),
        }
    }

    pub fn poses(&self) -> &[(Mat3<S>, Vec3<S>)] {
        &self.poses
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    /// Camera centres `−Rᵀ t`.
    pub fn centers(&self) -> Vec<Vec3<S>> {
        self.poses.iter().map(|(r, t)| -r.transpose().mul_vec(*t)).collect()
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            poses: indices.iter().map(|&i| self.poses[i]).collect(),
        }
    }
}

fn check_pair<S>(pred: &PoseTrajectory<S>, gt: &PoseTrajectory<S>) -> Result<()> {
    if pred.poses.len() != gt.poses.len() {
        return Err(Error::dim(format!(
            "trajectories have {} and {} poses",
            pred.poses.len(),
            gt.poses.len()
        )));
    }
    if gt.poses.len() < 2 {
        return Err(Error::arg("trajectory metrics need at least 2 poses"));
    }
    Ok(())
}

/// Geodesic angle of `R_a R_bᵀ`, in `[0, π]`.
///
/// Evaluated as `atan2(sin θ, cos θ)` with `sin θ` from the skew part, which
/// equals the clamped `arccos((tr − 1)/2)` but keeps full precision near 0
/// and π.
pub fn geodesic_angle<S: Real>(a: &Mat3<S>, b: &Mat3<S>) -> S {
    let r = a.mul_mat(&b.transpose()).m;
    let c = ((r[0][0] + r[1][1] + r[2][2] - S::one()) * S::half()).max(-S::one()).min(S::one());
    let (x, y, z) = (r[2][1] - r[1][2], r[0][2] - r[2][0], r[1][0] - r[0][1]);
    let s = (x * x + y * y + z * z).sqrt() * S::half();
    s.atan2(c)
}

/// Mean per-frame geodesic rotation distance, radians.
pub fn rotation_error<S: Real>(pred: &PoseTrajectory<S>, gt: &PoseTrajectory<S>) -> Result<S> {
    check_pair(pred, gt)?;
    let total: S = pred
        .poses
        .iter()
        .zip(&gt.poses)
        .map(|((rp, _), (rg, _))| geodesic_angle(rp, rg))
        .sum();
    Ok(total / S::from_usize_lossy(gt.len()))
}

fn path_length<S: Real>(c: &[Vec3<S>]) -> S {
    c.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
}

/// Centres relative to the first camera, scaled to unit path length.
/// A zero-length path is returned unscaled.
pub fn normalized_centers<S: Real>(traj: &PoseTrajectory<S>) -> Vec<Vec3<S>> {
    let c = traj.centers();
    let Some(&origin) = c.first() else {
        return c;
    };
    let len = path_length(&c);
    let inv = if len > S::zero() { S::one() / len } else { S::one() };
    c.into_iter().map(|p| (p - origin).scale(inv)).collect()
}

/// Mean distance between path-length-normalized camera centres.
pub fn translation_error<S: Real>(pred: &PoseTrajectory<S>, gt: &PoseTrajectory<S>) -> Result<S> {
    check_pair(pred, gt)?;
    if path_length(&gt.centers()) <= S::zero() {
        return Err(Error::arg("ground-truth camera never moves"));
    }
    let (a, b) = (normalized_centers(pred), normalized_centers(gt));
    let total: S = a.iter().zip(&b).map(|(&p, &g)| (p - g).norm()).sum();
    Ok(total / S::from_usize_lossy(gt.len()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrajectoryMode {
    /// Every 8th frame.
    Basic,
    /// The largest stride that fits the clip.
    Difficult,
}

impl std::str::FromStr for TrajectoryMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "basic" => Ok(Self::Basic),
            "difficult" => Ok(Self::Difficult),
            other => Err(Error::arg(format!("unknown trajectory mode '{other}' (basic | difficult)"))),
        }
    }
}

pub const BASIC_STRIDE: usize = 8;

/// Source indices picked for a clip of `clip_len` frames.
pub fn sample_indices(source_len: usize, mode: TrajectoryMode, clip_len: usize) -> Result<Vec<usize>> {
    if clip_len == 0 || source_len == 0 {
        return Err(Error::arg("clip and source must be non-empty"));
    }
    if clip_len == 1 {
        return Ok(vec![0]);
    }
    let stride = match mode {
        TrajectoryMode::Basic => BASIC_STRIDE,
        TrajectoryMode::Difficult => (source_len - 1) / (clip_len - 1),
    };
    if stride == 0 || (clip_len - 1) * stride >= source_len {
        return Err(Error::arg(format!(
            "{source_len} source frames cannot supply {clip_len} frames in {mode:?} mode"
        )));
    }
    Ok((0..clip_len).map(|i| i * stride).collect())
}

pub fn sample_trajectory<S: Real>(
    full: &PoseTrajectory<S>,
    mode: TrajectoryMode,
    clip_len: usize,
) -> Result<PoseTrajectory<S>> {
    Ok(full.select(&sample_indices(full.len(), mode, clip_len)?))
}

/// Mean L2 difference over pixels valid in both sequences.
pub fn endpoint_error<S: Real>(pred: &FlowSequence<S>, gt: &FlowSequence<S>) -> Result<S> {
    if (pred.width(), pred.height(), pred.len()) != (gt.width(), gt.height(), gt.len()) {
        return Err(Error::dim("flow sequences differ in shape"));
    }
    let (sum, count) = pred
        .frames()
        .par_iter()
        .zip(gt.frames())
        .map(|(p, g)| {
            let mut sum = S::zero();
            let mut count = 0usize;
            for (i, (a, b)) in p.data().iter().zip(g.data()).enumerate() {
                if p.is_valid_index(i) && g.is_valid_index(i) {
                    sum += (a[0] - b[0]).hypot(a[1] - b[1]);
                    count += 1;
                }
            }
            (sum, count)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold((S::zero(), 0usize), |(s, c), (s2, c2)| (s + s2, c + c2));
    if count == 0 {
        return Err(Error::data("no pixel is valid in both sequences"));
    }
    Ok(sum / S::from_usize_lossy(count))
}

/// Median over frames of the mean flow magnitude.
pub fn static_camera_score<S: Real>(seq: &FlowSequence<S>) -> Result<S> {
    if seq.is_empty() {
        return Err(Error::arg("static camera score needs at least one frame"));
    }
    let mut means: Vec<S> = seq
        .frames()
        .iter()
        .map(|f| {
            let s: S = (0..f.len()).map(|i| f.magnitude_at(i)).sum();
            s / S::from_usize_lossy(f.len().max(1))
        })
        .collect();
    means.sort_by(|a, b| a.partial_cmp(b).expect("finite magnitudes"));
    let n = means.len();
    Ok(if n % 2 == 1 {
        means[n / 2]
    } else {
        (means[n / 2 - 1] + means[n / 2]) * S::half()
    })
}
