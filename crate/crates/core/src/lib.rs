//! Unified motion-control flow engine.
//!
//! Camera poses, drag annotations and reference motion are rendered to dense
//! optical flow anchored at frame 0, fused, stabilized in the temporal
//! frequency domain and compressed into latents for a small diffusion
//! sandbox. Numeric code is generic over [`Real`]; the aliases below fix
//! `f64`.

pub mod annotation;
pub mod camera;
pub mod codec;
pub mod depth;
pub mod diffusion;
pub mod error;
pub mod flow;
pub mod formats;
pub mod linalg;
pub mod metrics;
pub mod nn;
pub mod scalar;
pub mod spectral;
pub mod unify;

pub use error::{Error, Result};
pub use scalar::Real;

pub type FlowField = flow::FlowField<f64>;
pub type FlowSequence = flow::FlowSequence<f64>;
pub type CameraTrajectory = camera::CameraTrajectory<f64>;
pub type DepthMap = depth::DepthMap<f64>;
pub type AnnotationSet = annotation::AnnotationSet<f64>;
pub type ControlBundle = unify::ControlBundle<f64>;
pub type TokenSequence = spectral::TokenSequence<f64>;
pub type SpectralWeights = spectral::SpectralWeights<f64>;
pub type Tensor2D = nn::Tensor2D<f64>;
pub type ToyDenoiser = nn::ToyDenoiser<f64>;
pub type NoiseSchedule = diffusion::NoiseSchedule<f64>;
pub type LatentGrid = codec::LatentGrid<f64>;
pub type PoseTrajectory = metrics::PoseTrajectory<f64>;
