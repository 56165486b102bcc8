//! Curation HTTP API. Every state change goes through `Library::decide`.

use std::path::{Component, Path, PathBuf};
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode, Uri};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use texsynth_core::imageops::encode_mask_png;
use texsynth_core::texlib::{CurationState, Decision, Library, TextureAsset};
use texsynth_core::Error as CoreError;

pub const DEFAULT_LIMIT: usize = 50;
const ACTOR: &str = "curation-api";

#[derive(Clone)]
pub struct AppState {
    pub library: Arc<Mutex<Library>>,
    pub static_dir: Option<PathBuf>,
}

impl AppState {
    pub fn new(library: Library, static_dir: Option<PathBuf>) -> Self {
        Self {
            library: Arc::new(Mutex::new(library)),
            static_dir,
        }
    }
}

/// Summary row of the review queue.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueItem {
    pub asset_id: String,
    pub category: String,
    pub edge_density: f64,
    pub curation_state: CurationState,
    pub caption: Option<String>,
    pub image_url: String,
    pub edges_url: String,
}

impl From<&TextureAsset> for QueueItem {
    fn from(a: &TextureAsset) -> Self {
        Self {
            asset_id: a.asset_id.clone(),
            category: a.category.clone(),
            edge_density: a.edge_density,
            curation_state: a.curation_state,
            caption: a.caption.clone(),
            image_url: format!("/api/assets/{}/image", a.asset_id),
            edges_url: format!("/api/assets/{}/edges", a.asset_id),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueuePage {
    pub total: usize,
    pub offset: usize,
    pub limit: usize,
    pub items: Vec<QueueItem>,
}

#[derive(Debug, Deserialize)]
pub struct QueueQuery {
    state: Option<String>,
    category: Option<String>,
    limit: Option<usize>,
    offset: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecisionBody {
    pub decision: Decision,
    #[serde(default)]
    pub note: Option<String>,
}

pub struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

impl From<CoreError> for ApiError {
    fn from(e: CoreError) -> Self {
        let status = match e.root() {
            CoreError::NotFound(_) => StatusCode::NOT_FOUND,
            CoreError::StateConflict { .. } => StatusCode::CONFLICT,
            CoreError::InvalidInput(_) => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError(status, e.to_string())
    }
}

fn bad_request(msg: impl Into<String>) -> ApiError {
    ApiError(StatusCode::BAD_REQUEST, msg.into())
}

/// Runs `f` with the library locked, off the async executor.
async fn with_library<T, F>(state: &AppState, f: F) -> Result<T, ApiError>
where
    T: Send + 'static,
    F: FnOnce(&mut Library) -> Result<T, ApiError> + Send + 'static,
{
    let lib = state.library.clone();
    tokio::task::spawn_blocking(move || {
        let mut guard = lib.lock().unwrap_or_else(|p| p.into_inner());
        f(&mut guard)
    })
    .await
    .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
}

async fn queue(State(state): State<AppState>, Query(q): Query<QueueQuery>) -> Result<Json<QueuePage>, ApiError> {
    let wanted: CurationState = q
        .state
        .as_deref()
        .unwrap_or("pending")
        .parse()
        .map_err(|e: CoreError| bad_request(e.to_string()))?;
    let category = q.category.filter(|c| !c.is_empty());
    let limit = q.limit.unwrap_or(DEFAULT_LIMIT);
    let offset = q.offset.unwrap_or(0);
    with_library(&state, move |lib| {
        let matching: Vec<&TextureAsset> = lib
            .manifest()
            .assets
            .iter()
            .filter(|a| a.curation_state == wanted)
            .filter(|a| category.as_ref().is_none_or(|c| &a.category == c))
            .collect();
        Ok(Json(QueuePage {
            total: matching.len(),
            offset,
            limit,
            items: matching.into_iter().skip(offset).take(limit).map(QueueItem::from).collect(),
        }))
    })
    .await
}

async fn asset(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> Result<Json<TextureAsset>, ApiError> {
    with_library(&state, move |lib| Ok(Json(lib.asset(&id)?.clone()))).await
}

fn png(bytes: Vec<u8>) -> Response {
    ([(header::CONTENT_TYPE, "image/png")], bytes).into_response()
}

async fn asset_image(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> Result<Response, ApiError> {
    with_library(&state, move |lib| {
        let path = lib.image_path(lib.asset(&id)?);
        let bytes = std::fs::read(&path)
            .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, format!("{}: {e}", path.display())))?;
        Ok(png(bytes))
    })
    .await
}

async fn asset_edges(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> Result<Response, ApiError> {
    with_library(&state, move |lib| Ok(png(encode_mask_png(&lib.edge_mask(&id)?)))).await
}

async fn decide(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
    body: Bytes,
) -> Result<Json<TextureAsset>, ApiError> {
    let body: DecisionBody =
        serde_json::from_slice(&body).map_err(|e| bad_request(format!("malformed decision body: {e}")))?;
    with_library(&state, move |lib| {
        Ok(Json(lib.decide(&id, body.decision, body.note, ACTOR)?))
    })
    .await
}

async fn stats(State(state): State<AppState>) -> Result<Response, ApiError> {
    with_library(&state, |lib| Ok(Json(lib.stats()).into_response())).await
}

const INDEX_HTML: &str = "<!doctype html>\n<html><head><title>texture curation</title></head>\n<body><p>Curation API is running. Endpoints live under <code>/api/</code>.</p></body></html>\n";

fn content_type(path: &Path) -> &'static str {
    match path.extension().and_then(|e| e.to_str()) {
        Some("html") => "text/html; charset=utf-8",
        Some("js") | Some("mjs") => "text/javascript",
        Some("css") => "text/css",
        Some("json") => "application/json",
        Some("png") => "image/png",
        Some("svg") => "image/svg+xml",
        _ => "application/octet-stream",
    }
}

async fn static_files(State(state): State<AppState>, uri: Uri) -> Response {
    let rel = uri.path().trim_start_matches('/');
    if rel.starts_with("api/") {
        return ApiError(StatusCode::NOT_FOUND, format!("no route {}", uri.path())).into_response();
    }
    let Some(root) = &state.static_dir else {
        return ([(header::CONTENT_TYPE, "text/html; charset=utf-8")], INDEX_HTML).into_response();
    };
    let rel = Path::new(if rel.is_empty() { "index.html" } else { rel });
    if rel.components().any(|c| !matches!(c, Component::Normal(_))) {
        return StatusCode::BAD_REQUEST.into_response();
    }
    let path = root.join(rel);
    match tokio::fs::read(&path).await {
        Ok(bytes) => ([(header::CONTENT_TYPE, content_type(&path))], bytes).into_response(),
        Err(_) => StatusCode::NOT_FOUND.into_response(),
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/queue", get(queue))
        .route("/api/assets/{id}", get(asset))
        .route("/api/assets/{id}/image", get(asset_image))
        .route("/api/assets/{id}/edges", get(asset_edges))
        .route("/api/assets/{id}/decision", post(decide))
        .route("/api/stats", get(stats))
        .fallback(static_files)
        .with_state(state)
}

pub async fn serve(listener: tokio::net::TcpListener, state: AppState) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}
