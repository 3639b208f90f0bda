//! Stateless HTTP preview service.
//!
//! `GET /health`, `POST /preview/flow`, `POST /preview/warp`. Requests carry
//! an inline control bundle; responses hold base64 PNG frames.

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use image::ImageFormat;
use motionflow::flow::{warp_backward, write_flo_bytes, Image};
use motionflow::formats::{AnnotationFile, DepthSpec, FrameSpec, TrajectoryFile};
use motionflow::spectral::{flow_flicker, SpectralFilter};
use motionflow::unify::{conflict_report, unify, CameraControl, CompositionMode, ControlBundle};
use motionflow::FlowSequence;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::{Config, Limits};
use crate::pipeline;

const BODY_LIMIT: usize = 64 << 20;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AppState {
    pub limits: Limits,
    pub sigma: Option<f64>,
}

impl AppState {
    pub fn from_config(cfg: &Config) -> Self {
        Self {
            limits: cfg.limits,
            sigma: cfg.sigma,
        }
    }
}

impl Default for AppState {
    fn default() -> Self {
        Self::from_config(&Config::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreviewCamera {
    pub frames: Vec<FrameSpec>,
    /// Analytic proxies only.
    pub depth: DepthSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreviewRequest {
    pub width: usize,
    pub height: usize,
    pub num_frames: usize,
    #[serde(default)]
    pub camera: Option<PreviewCamera>,
    /// Same document as the annotation file.
    #[serde(default)]
    pub annotation: Option<AnnotationFile>,
    #[serde(default)]
    pub mode: CompositionMode,
    /// `identity`, `dc-only` or `lowpass:K`.
    #[serde(default)]
    pub filter: Option<String>,
    #[serde(default)]
    pub sigma: Option<f64>,
    /// Also return each frame as base64 `.flo` bytes.
    #[serde(default)]
    pub include_flo: bool,
    /// Base64 PNG reference image; required by `/preview/warp`.
    #[serde(default)]
    pub image: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowStats {
    pub max_magnitude: f64,
    /// `None` below three frames.
    pub flicker: Option<f64>,
    /// Per-frame mean cosine between controls, when two are present.
    pub conflict: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowPreview {
    pub width: usize,
    pub height: usize,
    pub frames: Vec<String>,
    pub stats: FlowStats,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub flo: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarpPreview {
    pub width: usize,
    pub height: usize,
    pub frames: Vec<String>,
}

#[derive(Debug)]
pub enum ApiError {
    BadRequest { path: String, message: String },
    TooLarge(String),
    Internal(String),
}

impl ApiError {
    fn bad(path: &str, e: impl std::fmt::Display) -> Self {
        ApiError::BadRequest {
            path: path.into(),
            message: e.to_string(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        match self {
            ApiError::BadRequest { path, message } => {
                (StatusCode::BAD_REQUEST, Json(json!({ "error": message, "path": path }))).into_response()
            }
            ApiError::TooLarge(message) => (StatusCode::PAYLOAD_TOO_LARGE, Json(json!({ "error": message }))).into_response(),
            ApiError::Internal(detail) => {
                let id = uuid::Uuid::new_v4().to_string();
                eprintln!("internal error {id}: {detail}");
                (StatusCode::INTERNAL_SERVER_ERROR, Json(json!({ "error": "internal error", "id": id }))).into_response()
            }
        }
    }
}

/// Deserializes with the failing field path in the error.
pub fn parse_request(body: &[u8]) -> Result<PreviewRequest, ApiError> {
    let de = &mut serde_json::Deserializer::from_slice(body);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        ApiError::BadRequest {
            path,
            message: e.into_inner().to_string(),
        }
    })
}

pub fn check_limits(req: &PreviewRequest, limits: &Limits) -> Result<(), ApiError> {
    if req.width > limits.max_width || req.height > limits.max_height || req.num_frames > limits.max_frames {
        return Err(ApiError::TooLarge(format!(
            "{}x{} with {} frames exceeds the {}x{}, {}-frame limit",
            req.width, req.height, req.num_frames, limits.max_width, limits.max_height, limits.max_frames
        )));
    }
    Ok(())
}

pub fn build_bundle(req: &PreviewRequest, state: &AppState) -> Result<ControlBundle<f64>, ApiError> {
    let mut bundle = ControlBundle::new(req.width, req.height, req.num_frames);
    if let Some(cam) = &req.camera {
        if matches!(cam.depth, DepthSpec::File { .. }) {
            return Err(ApiError::bad("camera.depth.kind", "the service accepts only constant or ramp depth"));
        }
        let trajectory = TrajectoryFile {
            frames: cam.frames.clone(),
        }
        .to_trajectory()
        .map_err(|e| ApiError::bad("camera.frames", e))?;
        let depth = cam
            .depth
            .resolve(req.width, req.height, None)
            .map_err(|e| ApiError::bad("camera.depth", e))?;
        bundle.camera = Some(CameraControl { trajectory, depth });
    }
    if let Some(ann) = &req.annotation {
        bundle.drags = Some(ann.to_annotation().map_err(|e| ApiError::bad("annotation", e))?);
    }
    bundle.densify_sigma = req.sigma.or(state.sigma);
    bundle.validate().map_err(|e| ApiError::bad("", e))?;
    Ok(bundle)
}

/// Unified, optionally stabilized flow for a request.
pub fn render_flow(req: &PreviewRequest, state: &AppState) -> Result<(ControlBundle<f64>, FlowSequence), ApiError> {
    let bundle = build_bundle(req, state)?;
    let mut flow = unify(&bundle, req.mode).map_err(|e| ApiError::bad("", e))?;
    if let Some(name) = &req.filter {
        let weights = SpectralFilter::parse(name)
            .and_then(|f| f.weights(flow.len()))
            .map_err(|e| ApiError::bad("filter", e))?;
        flow = pipeline::stabilize(&flow, &weights).map_err(|e| ApiError::Internal(e.to_string()))?;
    }
    Ok((bundle, flow))
}

pub fn preview_flow(req: &PreviewRequest, state: &AppState) -> Result<FlowPreview, ApiError> {
    let (bundle, flow) = render_flow(req, state)?;
    let internal = |e: motionflow::Error| ApiError::Internal(e.to_string());
    let frames = pipeline::flow_pngs(&flow, None)
        .map_err(internal)?
        .iter()
        .map(|p| B64.encode(p))
        .collect();
    let conflict = if bundle.control_count() >= 2 {
        Some(conflict_report(&bundle).map_err(internal)?)
    } else {
        None
    };
    let flo = if req.include_flo {
        Some(
            flow.frames()
                .iter()
                .map(|f| write_flo_bytes(f).map(|b| B64.encode(b)))
                .collect::<motionflow::Result<Vec<_>>>()
                .map_err(internal)?,
        )
    } else {
        None
    };
    Ok(FlowPreview {
        width: flow.width(),
        height: flow.height(),
        frames,
        stats: FlowStats {
            max_magnitude: flow.max_magnitude(),
            flicker: flow_flicker(&flow).ok(),
            conflict,
        },
        flo,
    })
}

pub fn preview_warp(req: &PreviewRequest, state: &AppState) -> Result<WarpPreview, ApiError> {
    let encoded = req.image.as_deref().ok_or_else(|| ApiError::bad("image", "missing reference image"))?;
    let bytes = B64.decode(encoded).map_err(|e| ApiError::bad("image", e))?;
    let rgb = image::load_from_memory_with_format(&bytes, ImageFormat::Png)
        .map_err(|e| ApiError::bad("image", e))?
        .to_rgb8();
    if (rgb.width() as usize, rgb.height() as usize) != (req.width, req.height) {
        return Err(ApiError::bad(
            "image",
            format!("image is {}x{}, request declares {}x{}", rgb.width(), rgb.height(), req.width, req.height),
        ));
    }
    let reference = Image::<f64>::from_rgb8(&rgb);
    let (_, flow) = render_flow(req, state)?;
    let frames = flow
        .frames()
        .iter()
        .map(|f| {
            let warped = warp_backward(&reference, f)?.to_rgb8()?;
            Ok(B64.encode(pipeline::encode_png(&warped)?))
        })
        .collect::<motionflow::Result<Vec<_>>>()
        .map_err(|e| ApiError::Internal(e.to_string()))?;
    Ok(WarpPreview {
        width: req.width,
        height: req.height,
        frames,
    })
}

async fn run<T: Serialize + Send + 'static>(
    state: AppState,
    body: Bytes,
    f: fn(&PreviewRequest, &AppState) -> Result<T, ApiError>,
) -> Result<Response, ApiError> {
    let req = parse_request(&body)?;
    check_limits(&req, &state.limits)?;
    let out = tokio::task::spawn_blocking(move || f(&req, &state))
        .await
        .map_err(|e| ApiError::Internal(format!("worker failed: {e}")))??;
    let body = serde_json::to_vec(&out).map_err(|e| ApiError::Internal(e.to_string()))?;
    Ok(([(header::CONTENT_TYPE, "application/json")], body).into_response())
}

async fn health() -> Json<serde_json::Value> {
    Json(json!({ "status": "ok" }))
}

async fn flow_handler(State(state): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    run(state, body, preview_flow).await
}

async fn warp_handler(State(state): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    run(state, body, preview_warp).await
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/preview/flow", post(flow_handler))
        .route("/preview/warp", post(warp_handler))
        .layer(DefaultBodyLimit::max(BODY_LIMIT))
        .with_state(state)
}
