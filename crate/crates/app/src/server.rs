//! JSON-over-HTTP service behind the interactive editor.
//!
//! Sessions live in memory, capped by least-recent use. Each session sits
//! behind its own async mutex; inpainting runs on the blocking pool with the
//! lock released, so one long run never stalls other sessions.

use std::collections::HashMap;
use std::hash::{BuildHasher, RandomState};
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Multipart, Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use flowfill_core::losses::{psnr, psnr_masked, ssim, ssim_masked};
use flowfill_core::texture::{inpaint, inpaint_with_structure};
use flowfill_core::{ImageBuffer, InpaintConfig, Mask};
use serde_json::{json, Value};
use tokio::sync::Mutex as SessionLock;

use crate::error::AppError;
use crate::formats::{decode_image, decode_mask, encode_flo, encode_png};
use crate::viz::flow_to_color;

pub const DEFAULT_SESSION_CAP: usize = 32;
const BODY_LIMIT: usize = 32 << 20;

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub inpaint: InpaintConfig,
    pub session_cap: usize,
    pub static_dir: Option<PathBuf>,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            inpaint: InpaintConfig::default(),
            session_cap: DEFAULT_SESSION_CAP,
            static_dir: None,
        }
    }
}

struct Artifacts {
    s_hat: Vec<u8>,
    flow_viz: Vec<u8>,
    result: Vec<u8>,
    flow: Vec<u8>,
}

struct Session {
    source_bytes: Vec<u8>,
    source: ImageBuffer,
    mask_bytes: Option<Vec<u8>>,
    mask: Mask,
    structure_bytes: Option<Vec<u8>>,
    structure: Option<ImageBuffer>,
    result: Option<Artifacts>,
}

type Handle = Arc<SessionLock<Session>>;

struct Registry {
    entries: HashMap<String, (u64, Handle)>,
    clock: u64,
}

struct Shared {
    registry: Mutex<Registry>,
    config: ServerConfig,
    counter: AtomicU64,
    hasher: RandomState,
}

impl Shared {
    fn insert(&self, s: Session) -> String {
        let n = self.counter.fetch_add(1, Ordering::Relaxed);
        let id = format!("{:016x}{:04x}", self.hasher.hash_one(n), n & 0xffff);
        let mut reg = self.registry.lock().unwrap();
        if reg.entries.len() >= self.config.session_cap.max(1) {
            let oldest = reg.entries.iter().min_by_key(|(_, (t, _))| *t).map(|(k, _)| k.clone());
            if let Some(k) = oldest {
                reg.entries.remove(&k);
            }
        }
        reg.clock += 1;
        let tick = reg.clock;
        reg.entries.insert(id.clone(), (tick, Arc::new(SessionLock::new(s))));
        id
    }

    fn get(&self, id: &str) -> Result<Handle, ApiError> {
        let mut reg = self.registry.lock().unwrap();
        reg.clock += 1;
        let tick = reg.clock;
        let entry = reg.entries.get_mut(id).ok_or(ApiError::NotFound("session"))?;
        entry.0 = tick;
        Ok(entry.1.clone())
    }

    fn remove(&self, id: &str) -> bool {
        self.registry.lock().unwrap().entries.remove(id).is_some()
    }
}

#[derive(Debug)]
enum ApiError {
    Malformed(String),
    NotFound(&'static str),
    Conflict(String),
    Unprocessable(String),
    Internal(String),
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, msg) = match self {
            ApiError::Malformed(m) => (StatusCode::BAD_REQUEST, m),
            ApiError::NotFound(what) => (StatusCode::NOT_FOUND, format!("unknown {what}")),
            ApiError::Conflict(m) => (StatusCode::CONFLICT, m),
            ApiError::Unprocessable(m) => (StatusCode::UNPROCESSABLE_ENTITY, m),
            ApiError::Internal(m) => (StatusCode::INTERNAL_SERVER_ERROR, m),
        };
        (status, Json(json!({ "error": msg }))).into_response()
    }
}

fn malformed(e: AppError) -> ApiError {
    ApiError::Malformed(e.to_string())
}

type AppState = Arc<Shared>;

/// The API routes, plus static files when a directory is configured.
pub fn router(config: ServerConfig) -> Router {
    let static_dir = config.static_dir.clone();
    let state = Arc::new(Shared {
        registry: Mutex::new(Registry {
            entries: HashMap::new(),
            clock: 0,
        }),
        config,
        counter: AtomicU64::new(0),
        hasher: RandomState::new(),
    });
    let api = Router::new()
        .route("/api/session", post(create_session))
        .route("/api/session/{id}", axum::routing::delete(delete_session))
        .route("/api/session/{id}/mask", put(put_mask))
        .route("/api/session/{id}/structure", put(put_structure))
        .route("/api/session/{id}/inpaint", post(run_inpaint))
        .route("/api/session/{id}/result/{artifact}", get(get_artifact))
        .layer(DefaultBodyLimit::max(BODY_LIMIT))
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(tower_http::services::ServeDir::new(dir)),
        None => api,
    }
}

/// Binds `host:port` and serves until the process ends.
pub async fn serve(config: ServerConfig, host: &str, port: u16) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind((host, port)).await?;
    axum::serve(listener, router(config)).await
}

async fn create_session(State(st): State<AppState>, mut form: Multipart) -> Result<Response, ApiError> {
    let mut bytes = None;
    while let Some(field) = form.next_field().await.map_err(|e| ApiError::Malformed(e.to_string()))? {
        let wanted = field.name() == Some("image") || field.file_name().is_some();
        let data = field.bytes().await.map_err(|e| ApiError::Malformed(e.to_string()))?;
        if wanted && bytes.is_none() {
            bytes = Some(data);
        }
    }
    let bytes = bytes.ok_or_else(|| ApiError::Malformed("multipart body has no image field".into()))?;
    let source = decode_image(&bytes).map_err(malformed)?;
    let (w, h) = source.dims();
    let id = st.insert(Session {
        source_bytes: bytes.to_vec(),
        mask: Mask::new(w, h),
        source,
        mask_bytes: None,
        structure_bytes: None,
        structure: None,
        result: None,
    });
    let body = json!({ "session_id": id, "width": w, "height": h });
    Ok((StatusCode::CREATED, Json(body)).into_response())
}

async fn delete_session(State(st): State<AppState>, Path(id): Path<String>) -> Result<StatusCode, ApiError> {
    if st.remove(&id) {
        Ok(StatusCode::NO_CONTENT)
    } else {
        Err(ApiError::NotFound("session"))
    }
}

async fn put_mask(State(st): State<AppState>, Path(id): Path<String>, body: Bytes) -> Result<StatusCode, ApiError> {
    let handle = st.get(&id)?;
    let mask = decode_mask(&body).map_err(malformed)?;
    let mut s = handle.lock().await;
    if mask.dims() != s.source.dims() {
        return Err(ApiError::Conflict(format!(
            "mask is {:?}, image is {:?}",
            mask.dims(),
            s.source.dims()
        )));
    }
    s.mask = mask;
    s.mask_bytes = Some(body.to_vec());
    Ok(StatusCode::NO_CONTENT)
}

/// Matches the channel count of `img` to `channels` (grey ↔ RGB).
fn adapt_channels(img: ImageBuffer, channels: usize) -> ImageBuffer {
    match (img.channels(), channels) {
        (a, b) if a == b => img,
        (_, 1) => img.luminance(),
        (1, c) => {
            let (w, h) = img.dims();
            ImageBuffer::from_fn(w, h, c, |x, y, _| img.get(x, y, 0)).expect("same dims")
        }
        _ => img,
    }
}

async fn put_structure(
    State(st): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<StatusCode, ApiError> {
    let handle = st.get(&id)?;
    let img = decode_image(&body).map_err(malformed)?;
    let mut s = handle.lock().await;
    if img.dims() != s.source.dims() {
        return Err(ApiError::Conflict(format!(
            "structure is {:?}, image is {:?}",
            img.dims(),
            s.source.dims()
        )));
    }
    s.structure = Some(adapt_channels(img, s.source.channels()));
    s.structure_bytes = Some(body.to_vec());
    Ok(StatusCode::NO_CONTENT)
}

/// Recursively overlays `patch` onto `base`.
fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                merge(b.entry(k).or_insert(Value::Null), v);
            }
        }
        (b, p) => *b = p,
    }
}

fn config_with_overrides(base: &InpaintConfig, body: &[u8]) -> Result<InpaintConfig, ApiError> {
    if body.iter().all(u8::is_ascii_whitespace) {
        return Ok(*base);
    }
    let patch: Value = serde_json::from_slice(body).map_err(|e| ApiError::Malformed(e.to_string()))?;
    if !patch.is_object() {
        return Err(ApiError::Malformed("config overrides must be a JSON object".into()));
    }
    let mut merged = serde_json::to_value(base).expect("config serializes");
    merge(&mut merged, patch);
    let cfg: InpaintConfig = serde_json::from_value(merged).map_err(|e| ApiError::Unprocessable(e.to_string()))?;
    cfg.validate().map_err(|e| ApiError::Unprocessable(e.to_string()))?;
    Ok(cfg)
}

/// PSNR as JSON: a number, `"inf"` for identical inputs, `null` when undefined.
pub fn psnr_json(v: Option<f64>) -> Value {
    match v {
        Some(p) if p.is_infinite() => json!("inf"),
        Some(p) => json!(p),
        None => Value::Null,
    }
}

async fn run_inpaint(State(st): State<AppState>, Path(id): Path<String>, body: Bytes) -> Result<Response, ApiError> {
    let handle = st.get(&id)?;
    let cfg = config_with_overrides(&st.config.inpaint, &body)?;
    let (source, mask, structure) = {
        let s = handle.lock().await;
        (s.source.clone(), s.mask.clone(), s.structure.clone())
    };
    let job = tokio::task::spawn_blocking(move || -> Result<(Artifacts, Value), ApiError> {
        let out = match &structure {
            Some(s_hat) => inpaint_with_structure(&source, &mask, s_hat, &cfg),
            None => inpaint(&source, &mask, &cfg),
        }
        .map_err(|e| ApiError::Unprocessable(e.to_string()))?;
        let internal = |e: AppError| ApiError::Internal(e.to_string());
        let core = |e: flowfill_core::Error| ApiError::Internal(e.to_string());
        let metrics = json!({
            "psnr": psnr_json(Some(psnr(&out.i_hat, &source).map_err(core)?)),
            "ssim": ssim(&out.i_hat, &source).map_err(core)?,
            "hole_psnr": psnr_json(psnr_masked(&out.i_hat, &source, &mask).map_err(core)?),
            "hole_ssim": ssim_masked(&out.i_hat, &source, &mask).map_err(core)?,
            "hole_ratio": mask.ratio(),
        });
        let artifacts = Artifacts {
            s_hat: encode_png(&out.s_hat).map_err(internal)?,
            flow_viz: encode_png(&flow_to_color(&out.flow, None)).map_err(internal)?,
            result: encode_png(&out.i_hat).map_err(internal)?,
            flow: encode_flo(&out.flow),
        };
        Ok((artifacts, metrics))
    });
    let (artifacts, metrics) = job.await.map_err(|e| ApiError::Internal(e.to_string()))??;
    handle.lock().await.result = Some(artifacts);
    let url = |a: &str| format!("/api/session/{id}/result/{a}");
    let body = json!({
        "metrics": metrics,
        "urls": {
            "s_hat": url("s_hat"),
            "flow_viz": url("flow_viz"),
            "result": url("result"),
            "flow": url("flow"),
        },
    });
    Ok(Json(body).into_response())
}

async fn get_artifact(
    State(st): State<AppState>,
    Path((id, artifact)): Path<(String, String)>,
) -> Result<Response, ApiError> {
    let handle = st.get(&id)?;
    let s = handle.lock().await;
    let missing = ApiError::NotFound("artifact");
    let result = s.result.as_ref();
    let (bytes, kind) = match artifact.as_str() {
        // Echoes return the uploaded bytes untouched.
        "source" => (Some(&s.source_bytes), "image/png"),
        "mask" => (s.mask_bytes.as_ref(), "image/png"),
        "structure" => (s.structure_bytes.as_ref(), "image/png"),
        "s_hat" => (result.map(|r| &r.s_hat), "image/png"),
        "flow_viz" => (result.map(|r| &r.flow_viz), "image/png"),
        "result" => (result.map(|r| &r.result), "image/png"),
        "flow" => (result.map(|r| &r.flow), "application/octet-stream"),
        _ => return Err(missing),
    };
    let bytes = bytes.ok_or(missing)?.clone();
    Ok(([(header::CONTENT_TYPE, kind)], bytes).into_response())
}
