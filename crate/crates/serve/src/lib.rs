//! HTTP inference service: scene-space metadata, network and path-traced
//! renders as PNG, and normalization helpers for slider clients.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, OnceLock};

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use glint::image::Image;
use glint::infer::render_network;
use glint::net::checkpoint::{load_for_space, CheckpointError};
use glint::net::PixelGenerator;
use glint::scene::{denormalize, instantiate, normalize, Camera, SceneSpace, SceneVector, SpaceSummary};
use glint::tracer::render_image;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::Semaphore;
use tower_http::cors::{AllowOrigin, CorsLayer};

pub const MAX_RESOLUTION: usize = 1024;
pub const MIN_RESOLUTION: usize = 16;
pub const MAX_SPP: u32 = 256;
pub const DEFAULT_SPP: u32 = 16;

#[derive(Debug, Error)]
pub enum ServeError {
    #[error("checkpoint: {0}")]
    Checkpoint(#[from] CheckpointError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid CORS origin `{0}`")]
    Origin(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointInfo {
    pub path: String,
    pub scene_dim: usize,
    pub hidden: usize,
    pub layers: usize,
    pub precondition: bool,
    /// Optimizer steps taken before the checkpoint was written.
    pub steps: u64,
}

pub struct Model {
    pub net: PixelGenerator<f32>,
    pub info: CheckpointInfo,
}

impl Model {
    pub fn load(path: &Path, space: &SceneSpace) -> Result<Self, ServeError> {
        let (net, adam) = load_for_space(path, space.dim())?;
        let shape = *net.shape();
        let info = CheckpointInfo {
            path: path.display().to_string(),
            scene_dim: shape.scene_dim,
            hidden: shape.hidden,
            layers: shape.layers,
            precondition: shape.precondition,
            steps: adam.t,
        };
        Ok(Model { net, info })
    }
}

/// Shared service state. The model slot is filled once; renders before
/// then answer 503.
#[derive(Clone)]
pub struct AppState {
    space: Arc<SceneSpace>,
    model: Arc<OnceLock<Arc<Model>>>,
    permits: Arc<Semaphore>,
}

impl AppState {
    /// State without a model; `workers` bounds concurrent renders.
    pub fn loading(space: SceneSpace, workers: usize) -> Self {
        AppState { space: Arc::new(space), model: Arc::new(OnceLock::new()), permits: Arc::new(Semaphore::new(workers.max(1))) }
    }

    pub fn with_model(space: SceneSpace, model: Model, workers: usize) -> Self {
        let state = Self::loading(space, workers);
        state.install(model);
        state
    }

    /// Publishes the model; later calls are ignored.
    pub fn install(&self, model: Model) {
        let _ = self.model.set(Arc::new(model));
    }

    pub fn space(&self) -> &SceneSpace {
        &self.space
    }

    pub fn model(&self) -> Option<Arc<Model>> {
        self.model.get().cloned()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RenderMode {
    Net,
    Pt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RenderRequest {
    pub vector: Vec<f64>,
    /// `px, py, pz, lx, ly, lz`; the space's default camera when absent.
    #[serde(default)]
    pub camera: Option<Vec<f64>>,
    pub resolution: usize,
    pub mode: RenderMode,
    #[serde(default)]
    pub spp: Option<u32>,
    #[serde(default)]
    pub exposure: Option<f32>,
    #[serde(default)]
    pub seed: Option<u64>,
}

/// A request that passed validation.
#[derive(Debug, Clone)]
pub struct ValidRender {
    pub vector: SceneVector,
    pub camera: Camera,
    pub resolution: usize,
    pub mode: RenderMode,
    pub spp: u32,
    pub exposure: f32,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl FieldError {
    fn new(field: &str, message: impl Into<String>) -> Self {
        FieldError { field: field.to_string(), message: message.into() }
    }
}

impl RenderRequest {
    pub fn validate(&self, space: &SceneSpace) -> Result<ValidRender, FieldError> {
        if self.vector.len() != space.dim() {
            return Err(FieldError::new("vector", format!("expected {} values, got {}", space.dim(), self.vector.len())));
        }
        let vector = SceneVector::new(self.vector.clone()).map_err(|e| FieldError::new("vector", e.to_string()))?;
        let camera = match &self.camera {
            None => space.camera().default_camera(),
            Some(c) => {
                let cam = Camera::from_slice(c)
                    .ok_or_else(|| FieldError::new("camera", format!("expected 6 values, got {}", c.len())))?;
                if !cam.is_valid() {
                    return Err(FieldError::new("camera", "position and lookat must be finite and distinct"));
                }
                cam
            }
        };
        if !(MIN_RESOLUTION..=MAX_RESOLUTION).contains(&self.resolution) {
            return Err(FieldError::new(
                "resolution",
                format!("{} outside [{MIN_RESOLUTION}, {MAX_RESOLUTION}]", self.resolution),
            ));
        }
        let spp = match (self.mode, self.spp) {
            (RenderMode::Net, Some(_)) => return Err(FieldError::new("spp", "only valid in pt mode")),
            (RenderMode::Net, None) => 0,
            (RenderMode::Pt, None) => DEFAULT_SPP,
            (RenderMode::Pt, Some(s)) if (1..=MAX_SPP).contains(&s) => s,
            (RenderMode::Pt, Some(s)) => return Err(FieldError::new("spp", format!("{s} outside [1, {MAX_SPP}]"))),
        };
        let exposure = self.exposure.unwrap_or(1.0);
        if !(exposure.is_finite() && exposure >= 0.0) {
            return Err(FieldError::new("exposure", "must be finite and non-negative"));
        }
        Ok(ValidRender { vector, camera, resolution: self.resolution, mode: self.mode, spp, exposure, seed: self.seed.unwrap_or(0) })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceResponse {
    #[serde(flatten)]
    pub space: SpaceSummary,
    pub checkpoint_info: Option<CheckpointInfo>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizeRequest {
    pub raw: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenormalizeRequest {
    pub vector: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConversionResponse {
    pub raw: Vec<f64>,
    pub vector: Vec<f64>,
}

enum ApiError {
    Field(FieldError),
    Loading,
    Busy,
    Internal(String),
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        match self {
            ApiError::Field(e) => (StatusCode::BAD_REQUEST, Json(e)).into_response(),
            ApiError::Loading => (StatusCode::SERVICE_UNAVAILABLE, "checkpoint loading").into_response(),
            ApiError::Busy => (StatusCode::SERVICE_UNAVAILABLE, "shutting down").into_response(),
            ApiError::Internal(msg) => (StatusCode::INTERNAL_SERVER_ERROR, msg).into_response(),
        }
    }
}

fn parse_body<T: for<'de> Deserialize<'de>>(body: &[u8]) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| {
        let msg = e.to_string();
        let field = msg
            .split('`')
            .nth(1)
            .filter(|_| msg.starts_with("missing field") || msg.starts_with("unknown field"))
            .unwrap_or("body");
        ApiError::Field(FieldError::new(field, msg.clone()))
    })
}

/// 8-bit RGB PNG: exposure scale, clamp to `[0, 1]`, gamma 2.2.
pub fn encode_png(image: &Image, exposure: f32) -> Vec<u8> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, image.width as u32, image.height as u32);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let mut w = enc.write_header().expect("in-memory PNG header");
        w.write_image_data(&image.to_rgb8(exposure)).expect("in-memory PNG data");
    }
    out
}

/// Renders a validated request; blocking and compute bound.
pub fn render(space: &SceneSpace, model: Option<&Model>, req: &ValidRender) -> Result<Image, String> {
    let inst = instantiate(space, &req.vector, req.camera);
    match req.mode {
        RenderMode::Net => {
            let model = model.ok_or("no model")?;
            render_network(&model.net, &inst, req.vector.values(), req.resolution).map_err(|e| e.to_string())
        }
        RenderMode::Pt => Ok(render_image(&inst, req.resolution, req.spp, req.seed).0),
    }
}

async fn get_space(State(state): State<AppState>) -> Json<SpaceResponse> {
    Json(SpaceResponse { space: state.space.summary(), checkpoint_info: state.model().map(|m| m.info.clone()) })
}

async fn healthz() -> &'static str {
    "ok"
}

async fn post_render(State(state): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let req: RenderRequest = parse_body(&body)?;
    let valid = req.validate(&state.space).map_err(ApiError::Field)?;
    let model = state.model();
    if valid.mode == RenderMode::Net && model.is_none() {
        return Err(ApiError::Loading);
    }
    let _permit = state.permits.clone().acquire_owned().await.map_err(|_| ApiError::Busy)?;
    let space = state.space.clone();
    let png = tokio::task::spawn_blocking(move || {
        render(&space, model.as_deref(), &valid).map(|img| encode_png(&img, valid.exposure))
    })
    .await
    .map_err(|e| ApiError::Internal(e.to_string()))?
    .map_err(ApiError::Internal)?;
    Ok(([(header::CONTENT_TYPE, HeaderValue::from_static("image/png"))], png).into_response())
}

async fn post_normalize(State(state): State<AppState>, body: Bytes) -> Result<Json<ConversionResponse>, ApiError> {
    let req: NormalizeRequest = parse_body(&body)?;
    let v = normalize(&state.space, &req.raw).map_err(|e| ApiError::Field(FieldError::new("raw", e.to_string())))?;
    Ok(Json(ConversionResponse { raw: denormalize(&state.space, &v), vector: v.values().to_vec() }))
}

async fn post_denormalize(State(state): State<AppState>, body: Bytes) -> Result<Json<ConversionResponse>, ApiError> {
    let req: DenormalizeRequest = parse_body(&body)?;
    if req.vector.len() != state.space.dim() {
        return Err(ApiError::Field(FieldError::new(
            "vector",
            format!("expected {} values, got {}", state.space.dim(), req.vector.len()),
        )));
    }
    let v = SceneVector::new(req.vector).map_err(|e| ApiError::Field(FieldError::new("vector", e.to_string())))?;
    Ok(Json(ConversionResponse { raw: denormalize(&state.space, &v), vector: v.values().to_vec() }))
}

/// Router with permissive CORS, or CORS restricted to `origin`.
pub fn router(state: AppState, origin: Option<&str>) -> Result<Router, ServeError> {
    let allow = match origin {
        None => AllowOrigin::any(),
        Some(o) => AllowOrigin::exact(HeaderValue::from_str(o).map_err(|_| ServeError::Origin(o.to_string()))?),
    };
    let cors = CorsLayer::new().allow_origin(allow).allow_methods([axum::http::Method::GET, axum::http::Method::POST]).allow_headers([header::CONTENT_TYPE]);
    Ok(Router::new()
        .route("/space", get(get_space))
        .route("/render", post(post_render))
        .route("/healthz", get(healthz))
        .route("/debug/normalize", post(post_normalize))
        .route("/debug/denormalize", post(post_denormalize))
        .layer(cors)
        .with_state(state))
}

#[derive(Debug, Clone)]
pub struct ServeConfig {
    pub checkpoint: PathBuf,
    pub addr: SocketAddr,
    pub workers: usize,
    pub cors_origin: Option<String>,
}

/// Binds, loads the checkpoint in the background and serves until the
/// process ends. A checkpoint that fails to load is fatal.
pub async fn serve(space: SceneSpace, config: ServeConfig) -> Result<(), ServeError> {
    let state = AppState::loading(space, config.workers);
    let app = router(state.clone(), config.cors_origin.as_deref())?;
    let listener = tokio::net::TcpListener::bind(config.addr).await?;
    let loader = state.clone();
    let path = config.checkpoint.clone();
    let load = tokio::task::spawn_blocking(move || Model::load(&path, loader.space()).map(|m| loader.install(m)));
    let server = tokio::spawn(async move { axum::serve(listener, app).await });
    let loaded = load.await.map_err(|e| ServeError::Io(std::io::Error::other(e.to_string()))).and_then(|r| r);
    if let Err(e) = loaded {
        server.abort();
        return Err(e);
    }
    server.await.map_err(|e| ServeError::Io(std::io::Error::other(e.to_string())))??;
    Ok(())
}
