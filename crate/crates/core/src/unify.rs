//! Fusion of camera, drag and reference controls into one flow sequence.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::annotation::{default_sigma, densify, sparse_flow, AnnotationSet};
use crate::camera::{camera_flow, CameraTrajectory};
use crate::depth::DepthMap;
use crate::error::{Error, Result};
use crate::flow::FlowSequence;
use crate::scalar::Real;

/// Flows below this magnitude (pixels) are ignored by [`conflict_report`].
pub const CONFLICT_MIN_MAGNITUDE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CompositionMode {
    /// Pointwise sum of the rendered controls.
    #[default]
    Add,
    /// Sequential warp composition in fold order.
    Chain,
}

impl std::str::FromStr for CompositionMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "add" => Ok(Self::Add),
            "chain" => Ok(Self::Chain),
            other => Err(Error::arg(format!("unknown composition mode '{other}' (add|chain)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControlKind {
    Camera,
    Drags,
    Reference,
}

impl fmt::Display for ControlKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ControlKind::Camera => "camera",
            ControlKind::Drags => "drags",
            ControlKind::Reference => "reference",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CameraControl<S> {
    pub trajectory: CameraTrajectory<S>,
    pub depth: DepthMap<S>,
}

/// Every control is optional; at least one must be present.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlBundle<S> {
    pub width: usize,
    pub height: usize,
    /// Clip length `L`; rendered sequences hold `L - 1` frames.
    pub num_frames: usize,
    pub camera: Option<CameraControl<S>>,
    pub drags: Option<AnnotationSet<S>>,
    pub reference: Option<FlowSequence<S>>,
    /// Densification kernel width; defaults to [`default_sigma`].
    pub densify_sigma: Option<S>,
}

impl<S: Real> ControlBundle<S> {
    pub fn new(width: usize, height: usize, num_frames: usize) -> Self {
        Self {
            width,
            height,
            num_frames,
            camera: None,
            drags: None,
            reference: None,
            densify_sigma: None,
        }
    }

    pub fn control_count(&self) -> usize {
        self.camera.is_some() as usize + self.drags.is_some() as usize + self.reference.is_some() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |kind: ControlKind, msg: String| Err(Error::Config(format!("{kind}: {msg}")));
        if self.control_count() == 0 {
            return Err(Error::Config("bundle has no controls".into()));
        }
        if self.num_frames < 2 || self.width == 0 || self.height == 0 {
            return Err(Error::Config(format!(
                "bundle declares {}x{} with {} frames; need non-empty canvas and >= 2 frames",
                self.width, self.height, self.num_frames
            )));
        }
        if let Some(cam) = &self.camera {
            if cam.trajectory.len() != self.num_frames {
                return cfg(
                    ControlKind::Camera,
                    format!("trajectory has {} frames, bundle has {}", cam.trajectory.len(), self.num_frames),
                );
            }
            if (cam.depth.width(), cam.depth.height()) != (self.width, self.height) {
                return cfg(
                    ControlKind::Camera,
                    format!(
                        "depth is {}x{}, bundle is {}x{}",
                        cam.depth.width(),
                        cam.depth.height(),
                        self.width,
                        self.height
                    ),
                );
            }
        }
        if let Some(ann) = &self.drags {
            if ann.num_frames != self.num_frames || (ann.width, ann.height) != (self.width, self.height) {
                return cfg(
                    ControlKind::Drags,
                    format!(
                        "annotation is {}x{} with {} frames, bundle is {}x{} with {}",
                        ann.width, ann.height, ann.num_frames, self.width, self.height, self.num_frames
                    ),
                );
            }
        }
        if let Some(r) = &self.reference {
            if r.len() != self.num_frames - 1 || (r.width(), r.height()) != (self.width, self.height) {
                return cfg(
                    ControlKind::Reference,
                    format!(
                        "reference is {}x{} with {} flow frames, bundle expects {}x{} with {}",
                        r.width(),
                        r.height(),
                        r.len(),
                        self.width,
                        self.height,
                        self.num_frames - 1
                    ),
                );
            }
            if r.frames().iter().any(|f| !f.is_finite()) {
                return cfg(ControlKind::Reference, "contains non-finite values".into());
            }
        }
        Ok(())
    }

    /// Dense rendering of each present control, in fold order camera → drags → reference.
    pub fn render(&self) -> Result<Vec<(ControlKind, FlowSequence<S>)>> {
        self.validate()?;
        let mut out = Vec::with_capacity(3);
        if let Some(cam) = &self.camera {
            out.push((
                ControlKind::Camera,
                camera_flow(&cam.trajectory, &cam.depth, self.width, self.height)?,
            ));
        }
        if let Some(ann) = &self.drags {
            let sigma = self
                .densify_sigma
                .unwrap_or_else(|| default_sigma(self.width, self.height));
            let sparse = sparse_flow(ann)?;
            out.push((ControlKind::Drags, densify(&sparse, self.width, self.height, sigma)?));
        }
        if let Some(r) = &self.reference {
            out.push((ControlKind::Reference, r.clone()));
        }
        Ok(out)
    }
}

/// Left fold of rendered controls under `mode`.
pub fn fold_controls<S: Real>(flows: &[FlowSequence<S>], mode: CompositionMode) -> Result<FlowSequence<S>> {
    let (first, rest) = flows
        .split_first()
        .ok_or_else(|| Error::arg("nothing to fold"))?;
    rest.iter().try_fold(first.clone(), |acc, next| match mode {
        CompositionMode::Add => acc.compose_add(next),
        CompositionMode::Chain => acc.compose_chain(next),
    })
}

pub fn unify<S: Real>(bundle: &ControlBundle<S>, mode: CompositionMode) -> Result<FlowSequence<S>> {
    let flows: Vec<_> = bundle.render()?.into_iter().map(|(_, f)| f).collect();
    fold_controls(&flows, mode)
}

/// Mean pairwise cosine similarity between rendered controls, per frame.
///
/// Only pixels where both flows exceed [`CONFLICT_MIN_MAGNITUDE`] count.
/// Frames with no such overlap for any pair report 0.
pub fn conflict_report<S: Real>(bundle: &ControlBundle<S>) -> Result<Vec<S>> {
    if bundle.control_count() < 2 {
        return Err(Error::arg(format!(
            "conflict report needs at least 2 controls, bundle has {}",
            bundle.control_count()
        )));
    }
    let flows = bundle.render()?;
    Ok(conflict_scores(
        &flows.into_iter().map(|(_, f)| f).collect::<Vec<_>>(),
    ))
}

pub(crate) fn conflict_scores<S: Real>(flows: &[FlowSequence<S>]) -> Vec<S> {
    let frames = flows.first().map_or(0, FlowSequence::len);
    let thresh = S::lit(CONFLICT_MIN_MAGNITUDE);
    (0..frames)
        .map(|l| {
            let mut pair_means = Vec::new();
            for i in 0..flows.len() {
                for j in i + 1..flows.len() {
                    let (a, b) = (&flows[i].frames()[l], &flows[j].frames()[l]);
                    let mut sum = S::zero();
                    let mut n = 0usize;
                    for (k, (p, q)) in a.data().iter().zip(b.data()).enumerate() {
                        if !(a.is_valid_index(k) && b.is_valid_index(k)) {
                            continue;
                        }
                        let na = p[0] * p[0] + p[1] * p[1];
                        let nb = q[0] * q[0] + q[1] * q[1];
                        if na.sqrt() > thresh && nb.sqrt() > thresh {
                            // sqrt(x·x) == x, so identical inputs give exactly 1.
                            let cos = (p[0] * q[0] + p[1] * q[1]) / (na * nb).sqrt();
                            sum += cos.max(-S::one()).min(S::one());
                            n += 1;
                        }
                    }
                    if n > 0 {
                        pair_means.push(sum / S::from_usize_lossy(n));
                    }
                }
            }
            if pair_means.is_empty() {
                S::zero()
            } else {
                let n = S::from_usize_lossy(pair_means.len());
                pair_means.into_iter().sum::<S>() / n
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotation::DragTrajectory;
    use crate::camera::{CameraFrame, CameraIntrinsics};
    use crate::depth::{depth_proxy, DepthProxy};
    use crate::flow::FlowField;
    use crate::linalg::{Mat3, Vec3};

    fn static_camera(n: usize, w: usize, h: usize) -> CameraControl<f64> {
        let k = CameraIntrinsics::new(30.0, 30.0, w as f64 / 2.0, h as f64 / 2.0).unwrap();
        let f = CameraFrame::new(Mat3::identity(), Vec3::zeros(), k).unwrap();
        CameraControl {
            trajectory: CameraTrajectory::new(vec![f; n]).unwrap(),
            depth: depth_proxy(DepthProxy::Constant(4.0), w, h).unwrap(),
        }
    }

    fn panning_camera(n: usize, w: usize, h: usize) -> CameraControl<f64> {
        let k = CameraIntrinsics::new(30.0, 30.0, w as f64 / 2.0, h as f64 / 2.0).unwrap();
        let frames = (0..n)
            .map(|i| CameraFrame::new(Mat3::identity(), Vec3::new(-0.05 * i as f64, 0.0, 0.0), k).unwrap())
            .collect();
        CameraControl {
            trajectory: CameraTrajectory::new(frames).unwrap(),
            depth: depth_proxy(DepthProxy::Constant(4.0), w, h).unwrap(),
        }
    }

    fn drags(w: usize, h: usize, n: usize) -> AnnotationSet<f64> {
        let t = DragTrajectory::new(vec![[5.0, 6.0], [9.0, 8.0], [12.0, 8.0]]).unwrap();
        AnnotationSet::new(w, h, n, vec![t]).unwrap()
    }

    #[test]
    fn camera_only_is_passthrough() {
        let mut b = ControlBundle::new(16, 16, 4);
        b.camera = Some(panning_camera(4, 16, 16));
        let cam = b.camera.as_ref().unwrap();
        let direct = camera_flow(&cam.trajectory, &cam.depth, 16, 16).unwrap();
        assert_eq!(unify(&b, CompositionMode::Add).unwrap(), direct);
        assert_eq!(unify(&b, CompositionMode::Chain).unwrap(), direct);
    }

    #[test]
    fn static_camera_is_identity_for_drags() {
        let mut only = ControlBundle::new(20, 16, 3);
        only.drags = Some(drags(20, 16, 3));
        let mut both = only.clone();
        both.camera = Some(static_camera(3, 20, 16));
        assert_eq!(
            unify(&only, CompositionMode::Add).unwrap(),
            unify(&both, CompositionMode::Add).unwrap()
        );
    }

    #[test]
    fn add_disc_example() {
        let disc = FlowField::from_fn(10, 10, |x, y| {
            let r2 = (x as f64 - 5.0).powi(2) + (y as f64 - 5.0).powi(2);
            if r2 <= 4.0 {
                [2.0, 0.0]
            } else {
                [0.0, 0.0]
            }
        })
        .unwrap();
        let cam = FlowSequence::new(10, 10, vec![FlowField::constant(10, 10, 1.0, 0.0)]).unwrap();
        let drag = FlowSequence::new(10, 10, vec![disc]).unwrap();
        let out = fold_controls(&[cam, drag], CompositionMode::Add).unwrap();
        assert_eq!(out.frames()[0].get(5, 5), [3.0, 0.0]);
        assert_eq!(out.frames()[0].get(0, 0), [1.0, 0.0]);
    }

    #[test]
    fn chain_depends_on_order() {
        // a: shift right by 2 everywhere; b: ramp in x. Chaining samples b at
        // displaced points, so the order matters.
        let a = FlowSequence::new(8, 1, vec![FlowField::constant(8, 1, 2.0, 0.0)]).unwrap();
        let b = FlowSequence::new(8, 1, vec![FlowField::from_fn(8, 1, |x, _| [x as f64 * 0.1, 0.0]).unwrap()])
            .unwrap();
        let ab = fold_controls(&[a.clone(), b.clone()], CompositionMode::Chain).unwrap();
        let ba = fold_controls(&[b.clone(), a.clone()], CompositionMode::Chain).unwrap();
        assert_ne!(ab, ba);
        let add_ab = fold_controls(&[a.clone(), b.clone()], CompositionMode::Add).unwrap();
        let add_ba = fold_controls(&[b, a], CompositionMode::Add).unwrap();
        assert_eq!(add_ab, add_ba);
    }

    #[test]
    fn mismatched_frame_count_is_config_error() {
        let mut b = ControlBundle::new(16, 16, 5);
        b.camera = Some(panning_camera(4, 16, 16));
        match unify(&b, CompositionMode::Add) {
            Err(Error::Config(msg)) => assert!(msg.starts_with("camera"), "{msg}"),
            other => panic!("{other:?}"),
        }
        let mut b = ControlBundle::new(16, 16, 3);
        b.drags = Some(drags(20, 16, 3));
        match unify(&b, CompositionMode::Add) {
            Err(Error::Config(msg)) => assert!(msg.starts_with("drags"), "{msg}"),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            unify(&ControlBundle::<f64>::new(4, 4, 2), CompositionMode::Add),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn output_shape_matches_bundle() {
        let mut b = ControlBundle::new(24, 12, 6);
        b.drags = Some(drags(24, 12, 6));
        b.camera = Some(panning_camera(6, 24, 12));
        let out = unify(&b, CompositionMode::Chain).unwrap();
        assert_eq!((out.width(), out.height(), out.len()), (24, 12, 5));
    }

    #[test]
    fn conflict_scores_basic() {
        let seq = |u: f64, v: f64| FlowSequence::new(4, 4, vec![FlowField::constant(4, 4, u, v); 2]).unwrap();
        assert_eq!(conflict_scores(&[seq(1.0, 2.0), seq(1.0, 2.0)]), vec![1.0, 1.0]);
        let anti = conflict_scores(&[seq(1.0, 2.0), seq(-1.0, -2.0)]);
        assert_eq!(anti, vec![-1.0, -1.0]);
        assert_eq!(conflict_scores(&[seq(1.0, 0.0), seq(0.0, 1.0)]), vec![0.0, 0.0]);
        assert_eq!(conflict_scores(&[seq(0.05, 0.0), seq(1.0, 0.0)]), vec![0.0, 0.0]);
    }

    #[test]
    fn conflict_report_needs_two_controls() {
        let mut b = ControlBundle::new(16, 16, 3);
        b.drags = Some(drags(16, 16, 3));
        assert!(matches!(conflict_report(&b), Err(Error::Argument(_))));
        b.reference = Some(unify(&b, CompositionMode::Add).unwrap());
        let r = conflict_report(&b).unwrap();
        assert_eq!(r.len(), 2);
        assert!(r.iter().all(|&c| (c - 1.0).abs() < 1e-12));
    }
}
