//! JSON file schemas and flow directory I/O.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::annotation::{AnnotationSet, DragTrajectory};
use crate::camera::{CameraFrame, CameraIntrinsics, CameraTrajectory};
use crate::depth::{depth_proxy, read_pfm, DepthMap, DepthProxy};
use crate::error::{io_at, Error, Result};
use crate::flow::{read_flo, write_flo, FlowSequence};
use crate::linalg::{Mat3, Vec3};
use crate::scalar::Real;
use crate::unify::{CameraControl, CompositionMode, ControlBundle};

/// One pose: intrinsics plus world-to-camera `R` (row-major) and `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameSpec {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    #[serde(rename = "R")]
    pub r: [f64; 9],
    pub t: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryFile {
    pub frames: Vec<FrameSpec>,
}

impl TrajectoryFile {
    pub fn to_trajectory<S: Real>(&self) -> Result<CameraTrajectory<S>> {
        let frames = self
            .frames
            .iter()
            .enumerate()
            .map(|(i, f)| {
                let k = CameraIntrinsics::new(S::lit(f.fx), S::lit(f.fy), S::lit(f.cx), S::lit(f.cy))?;
                let r = Mat3::from_row_major(&f.r.map(S::lit));
                let t = Vec3::from_array(f.t.map(S::lit));
                CameraFrame::new(r, t, k).map_err(|e| Error::data(format!("frame {i}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        CameraTrajectory::new(frames)
    }

    pub fn from_trajectory<S: Real>(traj: &CameraTrajectory<S>) -> Self {
        Self {
            frames: traj
                .frames()
                .iter()
                .map(|f| FrameSpec {
                    fx: f.intrinsics.fx.as_f64(),
                    fy: f.intrinsics.fy.as_f64(),
                    cx: f.intrinsics.cx.as_f64(),
                    cy: f.intrinsics.cy.as_f64(),
                    r: f.rotation().to_row_major().map(|v| v.as_f64()),
                    t: f.translation().to_array().map(|v| v.as_f64()),
                })
                .collect(),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        read_json(path)
    }
}

/// Drag annotations; the same document the preview service accepts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotationFile {
    pub width: usize,
    pub height: usize,
    pub num_frames: usize,
    #[serde(default)]
    pub trajectories: Vec<Vec<[f64; 2]>>,
}

impl AnnotationFile {
    pub fn to_annotation<S: Real>(&self) -> Result<AnnotationSet<S>> {
        let trajectories = self
            .trajectories
            .iter()
            .enumerate()
            .map(|(i, pts)| {
                DragTrajectory::new(pts.iter().map(|p| p.map(S::lit)).collect())
                    .map_err(|e| Error::data(format!("trajectory {i}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        AnnotationSet::new(self.width, self.height, self.num_frames, trajectories)
    }

    pub fn from_annotation<S: Real>(ann: &AnnotationSet<S>) -> Self {
        Self {
            width: ann.width,
            height: ann.height,
            num_frames: ann.num_frames,
            trajectories: ann
                .trajectories()
                .iter()
                .map(|t| t.points().iter().map(|p| p.map(|v| v.as_f64())).collect())
                .collect(),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        read_json(path)
    }
}

/// Depth source for camera flow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DepthSpec {
    Constant { value: f64 },
    Ramp { near: f64, far: f64 },
    /// PFM file.
    File { path: PathBuf },
}

impl DepthSpec {
    /// `constant:D`, `ramp:NEAR:FAR`, or a PFM path.
    pub fn parse(spec: &str) -> Result<Self> {
        let num = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| Error::arg(format!("bad number '{s}' in depth spec '{spec}'")))
        };
        let parts: Vec<&str> = spec.split(':').collect();
        match parts.as_slice() {
            ["constant", v] => Ok(Self::Constant { value: num(v)? }),
            ["ramp", n, f] => Ok(Self::Ramp {
                near: num(n)?,
                far: num(f)?,
            }),
            ["constant", ..] | ["ramp", ..] => Err(Error::arg(format!(
                "malformed depth spec '{spec}' (constant:D | ramp:NEAR:FAR | file.pfm)"
            ))),
            _ => Ok(Self::File { path: spec.into() }),
        }
    }

    /// Relative file paths resolve against `base`.
    pub fn resolve<S: Real>(&self, width: usize, height: usize, base: Option<&Path>) -> Result<DepthMap<S>> {
        match self {
            Self::Constant { value } => depth_proxy(DepthProxy::Constant(S::lit(*value)), width, height),
            Self::Ramp { near, far } => depth_proxy(
                DepthProxy::FrontoRamp {
                    near: S::lit(*near),
                    far: S::lit(*far),
                },
                width,
                height,
            ),
            Self::File { path } => {
                let depth: DepthMap<S> = read_pfm(join(base, path))?;
                if (depth.width(), depth.height()) != (width, height) {
                    return Err(Error::dim(format!(
                        "depth file is {}x{}, expected {width}x{height}",
                        depth.width(),
                        depth.height()
                    )));
                }
                Ok(depth)
            }
        }
    }
}

fn join(base: Option<&Path>, path: &Path) -> PathBuf {
    match base {
        Some(b) if path.is_relative() => b.join(path),
        _ => path.to_path_buf(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraSpec {
    /// Trajectory JSON path.
    pub trajectory: PathBuf,
    pub depth: DepthSpec,
}

/// Control bundle document; paths are relative to the bundle file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BundleFile {
    pub width: usize,
    pub height: usize,
    pub num_frames: usize,
    #[serde(default)]
    pub camera: Option<CameraSpec>,
    /// Annotation JSON path.
    #[serde(default)]
    pub drags: Option<PathBuf>,
    /// Directory of `.flo` frames.
    #[serde(default)]
    pub reference: Option<PathBuf>,
    #[serde(default)]
    pub mode: Option<CompositionMode>,
    #[serde(default)]
    pub sigma: Option<f64>,
}

impl BundleFile {
    pub fn load(path: impl AsRef<Path>) -> Result<(Self, PathBuf)> {
        let path = path.as_ref();
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((read_json(path)?, base))
    }

    pub fn to_bundle<S: Real>(&self, base: &Path) -> Result<ControlBundle<S>> {
        let mut bundle = ControlBundle::new(self.width, self.height, self.num_frames);
        if let Some(cam) = &self.camera {
            let trajectory = TrajectoryFile::load(join(Some(base), &cam.trajectory))?.to_trajectory()?;
            let depth = cam.depth.resolve(self.width, self.height, Some(base))?;
            bundle.camera = Some(CameraControl { trajectory, depth });
        }
        if let Some(p) = &self.drags {
            bundle.drags = Some(AnnotationFile::load(join(Some(base), p))?.to_annotation()?);
        }
        if let Some(p) = &self.reference {
            bundle.reference = Some(read_flow_dir(join(Some(base), p))?);
        }
        bundle.densify_sigma = self.sigma.map(S::lit);
        Ok(bundle)
    }
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(io_at(path))?;
    serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

/// `flow_0001.flo` for the frame anchored at index 1.
pub fn flow_file_name(index: usize) -> String {
    format!("flow_{:04}.flo", index + 1)
}

/// Writes one `.flo` per frame; returns the paths.
pub fn write_flow_dir<S: Real>(seq: &FlowSequence<S>, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(io_at(dir))?;
    seq.frames()
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let p = dir.join(flow_file_name(i));
            write_flo(f, &p)?;
            Ok(p)
        })
        .collect()
}

/// Reads every `*.flo` in `dir`, in file-name order.
pub fn read_flow_dir<S: Real>(dir: impl AsRef<Path>) -> Result<FlowSequence<S>> {
    let dir = dir.as_ref();
    let mut paths: Vec<PathBuf> = fs::read_dir(dir).map_err(io_at(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "flo"))
        .collect();
    paths.sort();
    read_flow_files(&paths)
}

pub fn read_flow_files<S: Real>(paths: &[PathBuf]) -> Result<FlowSequence<S>> {
    if paths.is_empty() {
        return Err(Error::data("no .flo files found"));
    }
    let frames = paths.iter().map(read_flo).collect::<Result<Vec<_>>>()?;
    FlowSequence::from_frames(frames)
}
