//! Pinhole cameras, trajectories, Plücker ray embeddings and camera-induced flow.
//!
//! Poses are world-to-camera: `x_cam = R x_world + t`, camera center `-Rᵀ t`.

use rayon::prelude::*;

use crate::depth::DepthMap;
use crate::error::{Error, Result};
use crate::flow::{FlowField, FlowSequence};
use crate::linalg::{Mat3, Vec3};
use crate::scalar::Real;

/// Rotations whose orthonormality defect is at most this are accepted
/// (and re-projected onto SO(3)); anything larger is rejected.
pub const ROTATION_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics<S> {
    pub fx: S,
    pub fy: S,
    pub cx: S,
    pub cy: S,
}

impl<S: Real> CameraIntrinsics<S> {
    pub fn new(fx: S, fy: S, cx: S, cy: S) -> Result<Self> {
        if !(fx.is_finite() && fx > S::zero() && fy.is_finite() && fy > S::zero()) {
            return Err(Error::data(format!("focal lengths must be positive, got fx={fx} fy={fy}")));
        }
        if !(cx.is_finite() && cy.is_finite()) {
            return Err(Error::data("principal point must be finite"));
        }
        Ok(Self { fx, fy, cx, cy })
    }

    /// `K = [[fx, 0, cx], [0, fy, cy], [0, 0, 1]]`.
    pub fn matrix(&self) -> Mat3<S> {
        let (z, o) = (S::zero(), S::one());
        Mat3::from_rows([[self.fx, z, self.cx], [z, self.fy, self.cy], [z, z, o]])
    }

    pub fn project(&self, p: Vec3<S>) -> [S; 2] {
        [self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy]
    }

    /// Point at z-depth `depth` behind pixel `(u, v)`, in camera coordinates.
    pub fn back_project(&self, u: S, v: S, depth: S) -> Vec3<S> {
        Vec3::new(
            (u - self.cx) / self.fx * depth,
            (v - self.cy) / self.fy * depth,
            depth,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraFrame<S> {
    rotation: Mat3<S>,
    translation: Vec3<S>,
    pub intrinsics: CameraIntrinsics<S>,
}

impl<S: Real> CameraFrame<S> {
    /// Validates the rotation; near-orthonormal input is projected onto SO(3).
    pub fn new(rotation: Mat3<S>, translation: Vec3<S>, intrinsics: CameraIntrinsics<S>) -> Result<Self> {
        if !rotation.is_finite() || !translation.is_finite() {
            return Err(Error::data("camera pose contains non-finite values"));
        }
        let defect = rotation.orthonormality_defect();
        if !(defect <= S::lit(ROTATION_TOLERANCE)) {
            return Err(Error::data(format!(
                "rotation is not orthonormal with det +1 (defect {:e})", defect.as_f64()
            )));
        }
        let rotation = if defect > S::zero() {
            rotation
                .polar_rotation()
                .ok_or_else(|| Error::data("rotation is singular"))?
        } else {
            rotation
        };
        Ok(Self {
            rotation,
            translation,
            intrinsics,
        })
    }

    pub fn rotation(&self) -> &Mat3<S> {
        &self.rotation
    }

    pub fn translation(&self) -> Vec3<S> {
        self.translation
    }

    /// Camera center in world coordinates, `-Rᵀ t`.
    pub fn center(&self) -> Vec3<S> {
        -self.rotation.transpose().mul_vec(self.translation)
    }

    pub fn world_to_camera(&self, p: Vec3<S>) -> Vec3<S> {
        self.rotation.mul_vec(p) + self.translation
    }

    pub fn camera_to_world(&self, p: Vec3<S>) -> Vec3<S> {
        self.rotation.transpose().mul_vec(p - self.translation)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CameraTrajectory<S> {
    frames: Vec<CameraFrame<S>>,
}

impl<S: Real> CameraTrajectory<S> {
    pub fn new(frames: Vec<CameraFrame<S>>) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::arg("camera trajectory needs at least one frame"));
        }
        Ok(Self { frames })
    }

    pub fn frames(&self) -> &[CameraFrame<S>] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// Which ray formula [`plucker_embed`] evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PluckerConvention {
    /// `d = R K [w, h, 1]ᵀ + t`, moment `t × d̂`.
    #[default]
    Literal,
    /// World-space ray `d = Rᵀ K⁻¹ [w, h, 1]ᵀ` from the camera center `o`,
    /// moment `o × d̂`.
    Conventional,
}

/// Per-pixel 6-vectors `(moment, direction)`, stored as `6 × F × H × W`.
#[derive(Debug, Clone, PartialEq)]
pub struct PluckerVolume<S> {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<S>,
}

impl<S: Real> PluckerVolume<S> {
    fn index(&self, c: usize, f: usize, h: usize, w: usize) -> usize {
        ((c * self.frames + f) * self.height + h) * self.width + w
    }

    /// The 6-vector for frame `f`, row `h`, column `w`.
    pub fn get(&self, f: usize, h: usize, w: usize) -> [S; 6] {
        std::array::from_fn(|c| self.data[self.index(c, f, h, w)])
    }
}

pub fn plucker_embed<S: Real>(
    traj: &CameraTrajectory<S>,
    width: usize,
    height: usize,
    convention: PluckerConvention,
) -> Result<PluckerVolume<S>> {
    if width == 0 || height == 0 {
        return Err(Error::arg("embedding resolution must be at least 1x1"));
    }
    let per_frame = traj
        .frames
        .par_iter()
        .enumerate()
        .map(|(f, cam)| {
            let (ray_map, origin) = match convention {
                PluckerConvention::Literal => {
                    (cam.rotation.mul_mat(&cam.intrinsics.matrix()), cam.translation)
                }
                PluckerConvention::Conventional => {
                    let k_inv = cam
                        .intrinsics
                        .matrix()
                        .inverse()
                        .ok_or_else(|| Error::data("intrinsics matrix is singular"))?;
                    (cam.rotation.transpose().mul_mat(&k_inv), cam.center())
                }
            };
            let offset = match convention {
                PluckerConvention::Literal => cam.translation,
                PluckerConvention::Conventional => Vec3::zeros(),
            };
            let mut out = Vec::with_capacity(width * height);
            for h in 0..height {
                for w in 0..width {
                    let pix = Vec3::new(S::from_usize_lossy(w), S::from_usize_lossy(h), S::one());
                    let d = ray_map.mul_vec(pix) + offset;
                    let n = d.norm();
                    if !(n > S::zero()) || !n.is_finite() {
                        return Err(Error::Singularity { frame: f, x: w, y: h });
                    }
                    let dir = d.scale(S::one() / n);
                    let moment = origin.cross(dir);
                    out.push([moment.x, moment.y, moment.z, dir.x, dir.y, dir.z]);
                }
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut vol = PluckerVolume {
        frames: traj.len(),
        height,
        width,
        data: vec![S::zero(); 6 * traj.len() * height * width],
    };
    for (f, pixels) in per_frame.iter().enumerate() {
        for (i, six) in pixels.iter().enumerate() {
            for (c, &v) in six.iter().enumerate() {
                let idx = vol.index(c, f, i / width, i % width);
                vol.data[idx] = v;
            }
        }
    }
    Ok(vol)
}

/// Dense flow from frame 0 to every later frame induced by camera motion
/// over a static scene with the given frame-0 depth.
///
/// Pixels whose reprojection lands at or behind the camera plane are
/// marked invalid and carry zero displacement.
pub fn camera_flow<S: Real>(
    traj: &CameraTrajectory<S>,
    depth: &DepthMap<S>,
    width: usize,
    height: usize,
) -> Result<FlowSequence<S>> {
    if traj.len() < 2 {
        return Err(Error::arg(format!(
            "camera flow needs at least 2 frames, trajectory has {}",
            traj.len()
        )));
    }
    if (depth.width(), depth.height()) != (width, height) {
        return Err(Error::dim(format!(
            "depth map is {}x{}, flow requested at {}x{}",
            depth.width(),
            depth.height(),
            width,
            height
        )));
    }
    let reference = traj.frames[0];
    let k0 = reference.intrinsics;
    // Back-projected world points are shared by every target frame.
    let world: Vec<Vec3<S>> = (0..width * height)
        .map(|i| {
            let (x, y) = (i % width, i / width);
            let p = k0.back_project(S::from_usize_lossy(x), S::from_usize_lossy(y), depth.get(x, y));
            reference.camera_to_world(p)
        })
        .collect();

    let frames = traj.frames[1..]
        .par_iter()
        .map(|cam| {
            let mut data = Vec::with_capacity(world.len());
            let mut mask = Vec::with_capacity(world.len());
            for (i, &xw) in world.iter().enumerate() {
                let pc = cam.world_to_camera(xw);
                if pc.z > S::zero() {
                    let [u, v] = cam.intrinsics.project(pc);
                    let flow = [u - S::from_usize_lossy(i % width), v - S::from_usize_lossy(i / width)];
                    if flow[0].is_finite() && flow[1].is_finite() {
                        data.push(flow);
                        mask.push(true);
                        continue;
                    }
                }
                data.push([S::zero(), S::zero()]);
                mask.push(false);
            }
            FlowField::new(width, height, data)?.with_mask(mask)
        })
        .collect::<Result<Vec<_>>>()?;
    FlowSequence::new(width, height, frames)
}
